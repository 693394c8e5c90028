#include "xembod/sim.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace xembod::sim {

using Eigen::VectorXd;

PdGains PdGains::uniform(int n, double kp, double kd, double limit) {
  PdGains g;
  g.kp = VectorXd::Constant(n, kp);
  g.kd = VectorXd::Constant(n, kd);
  g.torque_limit = VectorXd::Constant(n, limit);
  return g;
}

Eigen::VectorXd pd_torque(const PdGains& gains, const VectorXd& q_target,
                          const VectorXd& q, const VectorXd& q_dot) {
  const auto n = q.size();
  if (q_target.size() != n || q_dot.size() != n || gains.kp.size() != n ||
      gains.kd.size() != n || gains.torque_limit.size() != n)
    throw std::invalid_argument("pd_torque: dimension mismatch");
  VectorXd tau =
      gains.kp.cwiseProduct(q_target - q) - gains.kd.cwiseProduct(q_dot);
  return tau.cwiseMax(-gains.torque_limit).cwiseMin(gains.torque_limit);
}

Eigen::VectorXd gravity_torque(const EmbodimentSpec& spec, const TreeIndex& idx,
                               const Transform& root_pose, const VectorXd& q,
                               double gravity) {
  const auto poses = kin::forward_kinematics(spec, idx, root_pose, q);
  VectorXd g_q = VectorXd::Zero(spec.joint_count());
  for (int j = 0; j < spec.joint_count(); ++j) {
    const auto& jd = spec.joints[j];
    const Transform joint_frame =
        poses.at(idx.joint_parent_link(j)) * jd.offset;
    const Vector3d axis_w = joint_frame.orientation * jd.axis;
    double acc = 0.0;
    for (int l = 0; l < spec.link_count(); ++l) {
      if (spec.links[l].mass == 0.0) continue;
      if (!idx.link_descends_from_joint(l, j)) continue;
      // dz/dq of the link origin, times m g
      const Vector3d dp = axis_w.cross(poses.at(l).position - joint_frame.position);
      acc += spec.links[l].mass * gravity * dp.z();
    }
    g_q[j] = acc;
  }
  return g_q;
}

namespace {

double yaw_rate(const Vector3d& ang_vel) { return ang_vel.z(); }

void check_finite(const SimState& s) {
  auto bad = [](double v) { return !std::isfinite(v); };
  for (int i = 0; i < s.joints.q.size(); ++i) {
    if (bad(s.joints.q[i]))
      throw std::runtime_error("non-finite joint position at index " +
                               std::to_string(i));
    if (bad(s.joints.q_dot[i]))
      throw std::runtime_error("non-finite joint velocity at index " +
                               std::to_string(i));
  }
  if (!s.root.position.allFinite() || !s.root_lin_vel.allFinite() ||
      !s.root_ang_vel.allFinite())
    throw std::runtime_error("non-finite root state");
}

}  // namespace

SimState step_dynamics(const EmbodimentSpec& spec, const TreeIndex& idx,
                       const SimState& state, const VectorXd& torques,
                       const Vector3d& root_wrench, const SimParams& params) {
  const int n = spec.joint_count();
  if (torques.size() != n)
    throw std::invalid_argument("step_dynamics: torque dimension mismatch");
  if (!(params.dt > 0.0 && params.dt <= 0.02))
    throw std::invalid_argument("step_dynamics: dt must be in (0, 0.02]");

  SimState next = state;
  const VectorXd g_q =
      gravity_torque(spec, idx, state.root, state.joints.q, params.gravity);

  for (int j = 0; j < n; ++j) {
    const int child = idx.joint_child_link(j);
    const double inertia = std::max(spec.links[child].inertia_scale, 1e-9);
    const double qdd =
        (torques[j] - params.joint_damping * state.joints.q_dot[j] - g_q[j]) /
        inertia;
    double qd = state.joints.q_dot[j] + qdd * params.dt;
    double qp = state.joints.q[j] + qd * params.dt;
    const auto& jd = spec.joints[j];
    if (qp <= jd.lower_limit) {
      qp = jd.lower_limit;
      if (qd < 0.0) qd = 0.0;
    } else if (qp >= jd.upper_limit) {
      qp = jd.upper_limit;
      if (qd > 0.0) qd = 0.0;
    }
    next.joints.q[j] = qp;
    next.joints.q_dot[j] = qd;
  }

  // planar base: x, y, yaw; z held fixed
  const double mass = std::max(spec.total_mass(), 1e-9);
  Eigen::Vector2d v(state.root_lin_vel.x(), state.root_lin_vel.y());
  const Eigen::Vector2d f(root_wrench.x(), root_wrench.y());
  v += (f - params.root_damping * v) / mass * params.dt;
  next.root_lin_vel = Vector3d(v.x(), v.y(), 0.0);
  next.root.position.x() += v.x() * params.dt;
  next.root.position.y() += v.y() * params.dt;

  double wz = yaw_rate(state.root_ang_vel);
  wz += (root_wrench.z() - params.root_damping * wz) /
        std::max(params.root_yaw_inertia, 1e-9) * params.dt;
  next.root_ang_vel = Vector3d(0.0, 0.0, wz);
  next.root.orientation =
      (Quaterniond(Eigen::AngleAxisd(wz * params.dt, Vector3d::UnitZ())) *
       state.root.orientation)
          .normalized();

  next.t = state.t + params.dt;

  // attached objects ride their hand frame; free objects sit still
  const auto poses =
      kin::forward_kinematics(spec, idx, next.root, next.joints.q);
  for (auto& obj : next.objects) {
    if (obj.attached_to.empty()) {
      obj.velocity.setZero();
      continue;
    }
    const int hand = idx.link_index(obj.attached_to);
    if (hand < 0)
      throw std::runtime_error("attached hand frame '" + obj.attached_to +
                               "' not in spec");
    const Transform new_pose = poses.at(hand) * obj.grasp_offset;
    obj.velocity = (new_pose.position - obj.pose.position) / params.dt;
    obj.pose = new_pose;
  }

  check_finite(next);
  return next;
}

void grasp_update(const EmbodimentSpec& spec, const TreeIndex& idx,
                  const std::vector<std::string>& hand_frames, SimState& state,
                  double grasp_radius, double release_radius,
                  const std::vector<char>& release_cmd) {
  const auto poses =
      kin::forward_kinematics(spec, idx, state.root, state.joints.q);

  // hands sorted by name so the tie-break is lexicographic
  std::vector<std::pair<std::string, Transform>> hands;
  for (const auto& h : hand_frames) {
    const int l = idx.link_index(h);
    if (l < 0) throw std::invalid_argument("unknown hand frame '" + h + "'");
    hands.emplace_back(h, poses.at(l));
  }
  std::sort(hands.begin(), hands.end(),
            [](const auto& a, const auto& b) { return a.first < b.first; });

  std::vector<char> just_released(state.objects.size(), 0);
  for (size_t i = 0; i < state.objects.size(); ++i) {
    auto& obj = state.objects[i];
    if (obj.attached_to.empty()) continue;
    const bool commanded =
        i < release_cmd.size() && release_cmd[i] != 0;
    const double to_goal = (obj.pose.position - obj.goal.position).norm();
    if (commanded || to_goal < release_radius) {
      obj.attached_to.clear();
      obj.velocity.setZero();
      just_released[i] = 1;
      if (to_goal < release_radius) obj.placed = true;
    }
  }

  for (size_t i = 0; i < state.objects.size(); ++i) {
    auto& obj = state.objects[i];
    if (!obj.attached_to.empty() || obj.placed || just_released[i]) continue;
    if ((obj.pose.position - obj.goal.position).norm() < release_radius)
      continue;  // parked at the goal, leave it
    const std::string* best = nullptr;
    const Transform* best_pose = nullptr;
    double best_d = grasp_radius;
    for (const auto& [name, pose] : hands) {
      const double d = (pose.position - obj.pose.position).norm();
      if (d < best_d) {
        best_d = d;
        best = &name;
        best_pose = &pose;
      }
    }
    if (best) {
      obj.attached_to = *best;
      obj.grasp_offset = best_pose->inverse() * obj.pose;
    }
  }
}

void apply_perturbation(SimState& state, const Perturbation& p,
                        double total_mass, double dt) {
  if (state.t < p.apply_time || state.t >= p.apply_time + dt) return;
  if (!p.impulse.allFinite())
    throw std::invalid_argument("perturbation impulse must be finite");
  const double mass = std::max(total_mass, 1e-9);
  state.root_lin_vel.x() += p.impulse.x() / mass;
  state.root_lin_vel.y() += p.impulse.y() / mass;
  // z stays planar
}

Eigen::VectorXd build_observation(const EmbodimentSpec& spec,
                                  const TreeIndex& idx, const SimState& state,
                                  const std::vector<std::string>& key_frames) {
  const int n = spec.joint_count();
  VectorXd obs(observation_dim(spec, static_cast<int>(key_frames.size())));
  int at = 0;
  obs.segment(at, n) = state.joints.q;
  at += n;
  obs.segment(at, n) = state.joints.q_dot;
  at += n;
  obs.segment(at, 3) = state.root.position;
  at += 3;
  const Quaterniond rq = quat_canonical(state.root.orientation);
  obs[at++] = rq.w();
  obs[at++] = rq.x();
  obs[at++] = rq.y();
  obs[at++] = rq.z();
  obs.segment(at, 3) = state.root_lin_vel;
  at += 3;
  obs.segment(at, 3) = state.root_ang_vel;
  at += 3;
  if (!key_frames.empty()) {
    const auto poses =
        kin::forward_kinematics(spec, idx, state.root, state.joints.q);
    const Transform root_inv = state.root.inverse();
    for (const auto& kf : key_frames) {
      const int l = idx.link_index(kf);
      if (l < 0) throw std::invalid_argument("unknown key frame '" + kf + "'");
      const Transform rel = root_inv * poses.at(l);
      obs.segment(at, 3) = rel.position;
      at += 3;
      const Quaterniond q = quat_canonical(rel.orientation);
      obs[at++] = q.w();
      obs[at++] = q.x();
      obs[at++] = q.y();
      obs[at++] = q.z();
    }
  }
  return obs;
}

int observation_dim(const EmbodimentSpec& spec, int key_frame_count) {
  return 2 * spec.joint_count() + 13 + 7 * key_frame_count;
}

Json scene_to_json(const SceneConfig& scene, int joint_count) {
  Json j;
  j["root_start"] = to_json(scene.root_start);
  j["root_actuated"] = scene.root_actuated;
  Json pd;
  // write scalars when uniform, else full arrays
  auto gains_field = [&](const VectorXd& v) -> Json {
    if (v.size() == 0) return 0.0;
    const bool uniform = (v.array() == v[0]).all();
    if (uniform) return v[0];
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  pd["kp"] = gains_field(scene.gains.kp);
  pd["kd"] = gains_field(scene.gains.kd);
  pd["torque_limit"] = gains_field(scene.gains.torque_limit);
  j["pd"] = pd;
  Json sim;
  sim["dt"] = scene.params.dt;
  sim["joint_damping"] = scene.params.joint_damping;
  sim["gravity"] = scene.params.gravity;
  sim["root_damping"] = scene.params.root_damping;
  sim["root_yaw_inertia"] = scene.params.root_yaw_inertia;
  sim["max_force"] = scene.params.max_force;
  sim["max_yaw_torque"] = scene.params.max_yaw_torque;
  j["sim"] = sim;
  j["objects"] = Json::array();
  for (const auto& o : scene.objects) {
    Json oj;
    oj["id"] = o.id;
    oj["start"] = to_json(o.start);
    oj["goal"] = to_json(o.goal);
    j["objects"].push_back(oj);
  }
  j["perturbations"] = Json::array();
  for (const auto& p : scene.perturbations) {
    Json pj;
    pj["impulse"] = to_json(p.impulse);
    pj["time"] = p.apply_time;
    pj["target"] = p.target;
    j["perturbations"].push_back(pj);
  }
  j["key_frames"] = scene.key_frames;
  j["hand_frames"] = scene.hand_frames;
  j["grasp_radius"] = scene.grasp_radius;
  j["release_radius"] = scene.release_radius;
  j["success_eps"] = scene.success_eps;
  j["success_hold"] = scene.success_hold;
  j["horizon"] = scene.horizon;
  j["reset_noise"] = scene.reset_noise;
  (void)joint_count;
  return j;
}

SceneConfig scene_from_json(const Json& j, const EmbodimentSpec& spec) {
  SceneConfig s;
  try {
    s.root_start = transform_from_json(j.at("root_start"), "root_start");
    s.root_actuated = j.value("root_actuated", false);
    const int n = spec.joint_count();
    auto gains_field = [&](const Json& g, const char* what) {
      if (g.is_number()) return VectorXd::Constant(n, g.get<double>()).eval();
      if (!g.is_array() || static_cast<int>(g.size()) != n)
        throw std::runtime_error(std::string(what) +
                                 ": expected scalar or per-joint array");
      VectorXd v(n);
      for (int i = 0; i < n; ++i) v[i] = g[i].get<double>();
      return v;
    };
    const auto& pd = j.at("pd");
    s.gains.kp = gains_field(pd.at("kp"), "pd.kp");
    s.gains.kd = gains_field(pd.at("kd"), "pd.kd");
    s.gains.torque_limit = gains_field(pd.at("torque_limit"), "pd.torque_limit");
    if ((s.gains.kp.array() < 0.0).any() || (s.gains.kd.array() < 0.0).any())
      throw std::runtime_error("pd gains must be non-negative");
    if ((s.gains.torque_limit.array() <= 0.0).any())
      throw std::runtime_error("torque limits must be positive");
    if (j.contains("sim")) {
      const auto& sim = j.at("sim");
      s.params.dt = sim.value("dt", s.params.dt);
      s.params.joint_damping = sim.value("joint_damping", s.params.joint_damping);
      s.params.gravity = sim.value("gravity", s.params.gravity);
      s.params.root_damping = sim.value("root_damping", s.params.root_damping);
      s.params.root_yaw_inertia =
          sim.value("root_yaw_inertia", s.params.root_yaw_inertia);
      s.params.max_force = sim.value("max_force", s.params.max_force);
      s.params.max_yaw_torque =
          sim.value("max_yaw_torque", s.params.max_yaw_torque);
    }
    for (const auto& oj : j.value("objects", Json::array())) {
      SceneObject o;
      o.id = oj.at("id").get<std::string>();
      o.start = transform_from_json(oj.at("start"), "object start");
      o.goal = transform_from_json(oj.at("goal"), "object goal");
      s.objects.push_back(std::move(o));
    }
    for (const auto& pj : j.value("perturbations", Json::array())) {
      Perturbation p;
      p.impulse = vec3_from_json(pj.at("impulse"), "perturbation impulse");
      p.apply_time = pj.at("time").get<double>();
      p.target = pj.value("target", std::string("root"));
      s.perturbations.push_back(std::move(p));
    }
    s.key_frames = j.value("key_frames", std::vector<std::string>{});
    s.hand_frames = j.value("hand_frames", std::vector<std::string>{});
    s.grasp_radius = j.value("grasp_radius", s.grasp_radius);
    s.release_radius = j.value("release_radius", s.release_radius);
    s.success_eps = j.value("success_eps", s.success_eps);
    s.success_hold = j.value("success_hold", s.success_hold);
    s.horizon = j.value("horizon", s.horizon);
    s.reset_noise = j.value("reset_noise", s.reset_noise);
  } catch (const nlohmann::json::exception& e) {
    throw std::runtime_error(std::string("malformed scene config: ") + e.what());
  }
  for (const auto& kf : s.key_frames)
    if (spec.link_index(kf) < 0)
      throw std::runtime_error("scene key frame '" + kf + "' not in spec");
  for (const auto& h : s.hand_frames)
    if (spec.link_index(h) < 0)
      throw std::runtime_error("scene hand frame '" + h + "' not in spec");
  if (s.grasp_radius >= s.release_radius)
    throw std::runtime_error("grasp_radius must be below release_radius");
  return s;
}

SceneConfig load_scene(const std::string& path, const EmbodimentSpec& spec) {
  return scene_from_json(load_json_file(path), spec);
}

Environment::Environment(const EmbodimentSpec& spec, const SceneConfig& scene,
                         std::uint64_t seed, std::uint64_t env_id)
    : spec_(spec), idx_(spec), scene_(scene), rng_(seed, 7000 + env_id) {
  for (int j = 0; j < spec_.joint_count(); ++j) {
    const auto& link = spec_.links[idx_.joint_child_link(j)];
    if (link.inertia_scale <= 0.0)
      throw std::invalid_argument("link '" + link.name +
                                  "' needs a positive inertia_scale");
  }
  reset();
}

int Environment::action_dim() const {
  return spec_.joint_count() + (scene_.root_actuated ? 3 : 0);
}

int Environment::obs_dim() const {
  return observation_dim(spec_, static_cast<int>(scene_.key_frames.size()));
}

void Environment::reset() {
  const int n = spec_.joint_count();
  state_.joints = JointState(n);
  const VectorXd mid = spec_.mid_pose();
  for (int j = 0; j < n; ++j) {
    const double noisy = mid[j] + scene_.reset_noise * rng_.normal();
    state_.joints.q[j] = std::clamp(noisy, spec_.joints[j].lower_limit,
                                    spec_.joints[j].upper_limit);
  }
  state_.root = scene_.root_start;
  state_.root_lin_vel.setZero();
  state_.root_ang_vel.setZero();
  state_.objects.clear();
  for (const auto& o : scene_.objects) {
    ObjectState os;
    os.object_id = o.id;
    os.pose = o.start;
    os.goal = o.goal;
    state_.objects.push_back(std::move(os));
  }
  state_.t = 0.0;
  last_torque_ = VectorXd::Zero(n);
  hold_time_ = 0.0;
  success_ = false;
}

void Environment::step(const VectorXd& action) {
  const int n = spec_.joint_count();
  if (action.size() != action_dim())
    throw std::invalid_argument("action has dimension " +
                                std::to_string(action.size()) + ", expected " +
                                std::to_string(action_dim()));
  const VectorXd a = action.cwiseMax(-1.0).cwiseMin(1.0);
  const VectorXd q_target =
      spec_.mid_pose() +
      0.5 * a.head(n).cwiseProduct(spec_.upper_limits() - spec_.lower_limits());
  Vector3d wrench = Vector3d::Zero();
  if (scene_.root_actuated) {
    wrench.x() = scene_.params.max_force * a[n];
    wrench.y() = scene_.params.max_force * a[n + 1];
    wrench.z() = scene_.params.max_yaw_torque * a[n + 2];
  }

  last_torque_ =
      pd_torque(scene_.gains, q_target, state_.joints.q, state_.joints.q_dot);
  for (const auto& p : scene_.perturbations)
    apply_perturbation(state_, p, spec_.total_mass(), scene_.params.dt);
  state_ = step_dynamics(spec_, idx_, state_, last_torque_, wrench,
                         scene_.params);
  grasp_update(spec_, idx_, scene_.hand_frames, state_, scene_.grasp_radius,
               scene_.release_radius);

  if (!state_.objects.empty()) {
    if (object_goal_distance() < scene_.success_eps) {
      hold_time_ += scene_.params.dt;
      if (hold_time_ >= scene_.success_hold - 1e-9) success_ = true;
    } else {
      hold_time_ = 0.0;
    }
  }
}

Eigen::VectorXd Environment::observation() const {
  return build_observation(spec_, idx_, state_, scene_.key_frames);
}

double Environment::object_goal_distance() const {
  if (state_.objects.empty()) return 0.0;
  const auto& o = state_.objects[0];
  return (o.pose.position - o.goal.position).norm();
}

}  // namespace xembod::sim
