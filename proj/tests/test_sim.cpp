#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "../src/rigs.hpp"
#include "xembod/sim.hpp"

using namespace xembod;

namespace {

// gravity potential of the link origins, used as the oracle for its gradient
double potential(const EmbodimentSpec& spec, const TreeIndex& idx,
                 const Transform& root, const Eigen::VectorXd& q,
                 double gravity) {
  const auto poses = kin::forward_kinematics(spec, idx, root, q);
  double u = 0.0;
  for (int l = 0; l < spec.link_count(); ++l)
    u += spec.links[l].mass * gravity * poses.at(l).position.z();
  return u;
}

sim::SimState rest_state(const EmbodimentSpec& spec, const Transform& root) {
  sim::SimState s;
  s.joints = JointState(spec.joint_count());
  s.root = root;
  return s;
}

}  // namespace

TEST_CASE("pd torque follows the gain formula and clamps at the limit") {
  sim::PdGains g = sim::PdGains::uniform(2, 10.0, 1.0, 5.0);
  Eigen::VectorXd qt(2), q(2), qd(2);
  qt << 0.5, -0.2;
  q << 0.1, 0.0;
  qd << 0.0, 2.0;
  const auto tau = sim::pd_torque(g, qt, q, qd);
  CHECK(tau[0] == doctest::Approx(10.0 * 0.4).epsilon(1e-12));
  CHECK(tau[1] == doctest::Approx(std::max(-5.0, 10.0 * -0.2 - 2.0))
                      .epsilon(1e-12));

  qt << 10.0, -10.0;
  const auto sat = sim::pd_torque(g, qt, q, qd);
  CHECK(sat[0] == 5.0);
  CHECK(sat[1] == -5.0);

  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(sim::pd_torque(g, wrong, q, qd), std::invalid_argument);
}

TEST_CASE("gravity torque matches finite differences of the potential") {
  Rng rng(11);
  for (const auto& spec : {rigs::three_link_arm(), rigs::mobile_arm(),
                           rigs::two_part_arms()}) {
    const TreeIndex idx(spec);
    for (int trial = 0; trial < 20; ++trial) {
      Transform root;
      root.position = rng.normal_vector(3);
      root.orientation = quat_exp(0.3 * rng.normal_vector(3));
      Eigen::VectorXd q(spec.joint_count());
      for (int j = 0; j < spec.joint_count(); ++j)
        q[j] = rng.uniform(spec.joints[j].lower_limit,
                           spec.joints[j].upper_limit);
      const auto g_q = sim::gravity_torque(spec, idx, root, q, 9.81);
      const double h = 1e-5;
      for (int j = 0; j < spec.joint_count(); ++j) {
        Eigen::VectorXd qp = q, qm = q;
        qp[j] += h;
        qm[j] -= h;
        const double fd = (potential(spec, idx, root, qp, 9.81) -
                           potential(spec, idx, root, qm, 9.81)) /
                          (2.0 * h);
        CHECK(std::abs(g_q[j] - fd) < 1e-6);
      }
    }
  }
}

TEST_CASE("pendulum gravity torque has the textbook form") {
  const auto spec = rigs::pendulum();
  const TreeIndex idx(spec);
  Transform root = Transform::translation({0.0, 0.0, 1.0});
  for (double theta : {-1.2, -0.3, 0.0, 0.4, 1.5}) {
    Eigen::VectorXd q = Eigen::VectorXd::Zero(spec.joint_count());
    q[0] = theta;
    const auto g_q = sim::gravity_torque(spec, idx, root, q);
    // bob mass 1 at the end of a 0.5 m rod; the rod itself sits at the pivot
    CHECK(g_q[0] ==
          doctest::Approx(1.0 * 9.81 * 0.5 * std::sin(theta)).epsilon(1e-12));
  }
}

TEST_CASE("one dynamics step matches the semi-implicit update by hand") {
  const auto spec = rigs::pendulum();
  const TreeIndex idx(spec);
  auto state = rest_state(spec, Transform::translation({0.0, 0.0, 1.0}));
  sim::SimParams params;
  Eigen::VectorXd tau = Eigen::VectorXd::Zero(spec.joint_count());
  tau[0] = 1.0;
  const auto next =
      sim::step_dynamics(spec, idx, state, tau, Vector3d::Zero(), params);
  // inertia 0.25, no damping term at rest, no gravity torque at the bottom
  const double qd = 0.01 * 1.0 / 0.25;
  CHECK(next.joints.q_dot[0] == doctest::Approx(qd).epsilon(1e-12));
  CHECK(next.joints.q[0] == doctest::Approx(qd * 0.01).epsilon(1e-12));
  // the frozen tip joint never moves
  CHECK(next.joints.q[1] == 0.0);
  CHECK(next.joints.q_dot[1] == 0.0);
  CHECK(next.t == doctest::Approx(0.01));

  sim::SimParams bad = params;
  bad.dt = 0.05;
  CHECK_THROWS_AS(
      sim::step_dynamics(spec, idx, state, tau, Vector3d::Zero(), bad),
      std::invalid_argument);
}

TEST_CASE("joint limits stop the motion and zero the velocity") {
  const auto spec = rigs::pendulum();
  const TreeIndex idx(spec);
  auto state = rest_state(spec, Transform::translation({0.0, 0.0, 1.0}));
  state.joints.q[0] = 3.09;
  state.joints.q_dot[0] = 50.0;
  sim::SimParams params;
  const auto next = sim::step_dynamics(spec, idx, state,
                                       Eigen::VectorXd::Zero(2),
                                       Vector3d::Zero(), params);
  CHECK(next.joints.q[0] == 3.1);
  CHECK(next.joints.q_dot[0] == 0.0);
}

TEST_CASE("small swings oscillate at the analytic frequency") {
  const auto spec = rigs::pendulum();
  const TreeIndex idx(spec);
  sim::SimParams params;
  params.joint_damping = 0.0;
  auto state = rest_state(spec, Transform::translation({0.0, 0.0, 1.0}));
  state.joints.q[0] = 0.1;

  const Eigen::VectorXd tau = Eigen::VectorXd::Zero(spec.joint_count());
  std::vector<double> crossings;
  double prev_q = state.joints.q[0];
  double prev_t = 0.0;
  for (int step = 0; step < 500; ++step) {
    state = sim::step_dynamics(spec, idx, state, tau, Vector3d::Zero(), params);
    const double q = state.joints.q[0];
    if ((prev_q > 0.0) != (q > 0.0)) {
      // linear interpolation for the crossing instant
      crossings.push_back(prev_t + params.dt * prev_q / (prev_q - q));
    }
    prev_q = q;
    prev_t = state.t;
  }
  REQUIRE(crossings.size() >= 4);
  const double half_period =
      (crossings.back() - crossings.front()) / (crossings.size() - 1);
  const double freq = 1.0 / (2.0 * half_period);
  // omega = sqrt(m g L / I) = sqrt(9.81 * 0.5 / 0.25)
  const double want = std::sqrt(9.81 * 0.5 / 0.25) / (2.0 * M_PI);
  CHECK(std::abs(freq - want) / want < 0.05);
}

TEST_CASE("undamped swing conserves energy to integrator accuracy") {
  const auto spec = rigs::pendulum();
  const TreeIndex idx(spec);
  sim::SimParams params;
  params.joint_damping = 0.0;
  params.dt = 0.0025;
  auto state = rest_state(spec, Transform::translation({0.0, 0.0, 1.0}));
  state.joints.q[0] = 0.1;

  auto energy = [&](const sim::SimState& s) {
    // kinetic in the pivot plus potential of the bob above the hanging pose
    const double kin = 0.5 * 0.25 * s.joints.q_dot[0] * s.joints.q_dot[0];
    const double pot = 1.0 * 9.81 * 0.5 * (1.0 - std::cos(s.joints.q[0]));
    return kin + pot;
  };

  const double e0 = energy(state);
  REQUIRE(e0 > 0.0);
  const Eigen::VectorXd tau = Eigen::VectorXd::Zero(spec.joint_count());
  double worst = 0.0;
  for (int step = 0; step < 2000; ++step) {
    state = sim::step_dynamics(spec, idx, state, tau, Vector3d::Zero(), params);
    worst = std::max(worst, std::abs(energy(state) - e0) / e0);
  }
  CHECK(worst < 0.02);
}

TEST_CASE("the planar base integrates force and yaw torque") {
  const auto spec = rigs::mobile_arm();
  const TreeIndex idx(spec);
  auto state = rest_state(spec, Transform::translation({0.0, 0.0, 0.7}));
  sim::SimParams params;
  const double mass = spec.total_mass();
  const Vector3d wrench(3.0, -1.0, 0.5);
  const auto next = sim::step_dynamics(
      spec, idx, state, Eigen::VectorXd::Zero(spec.joint_count()), wrench,
      params);
  const double vx = 3.0 / mass * 0.01;
  const double vy = -1.0 / mass * 0.01;
  CHECK(next.root_lin_vel.x() == doctest::Approx(vx).epsilon(1e-12));
  CHECK(next.root_lin_vel.y() == doctest::Approx(vy).epsilon(1e-12));
  CHECK(next.root_lin_vel.z() == 0.0);
  CHECK(next.root.position.x() == doctest::Approx(vx * 0.01).epsilon(1e-12));
  CHECK(next.root.position.z() == 0.7);
  const double wz = 0.5 / 1.0 * 0.01;
  CHECK(next.root_ang_vel.z() == doctest::Approx(wz).epsilon(1e-12));
  const double yaw =
      2.0 * std::atan2(next.root.orientation.z(), next.root.orientation.w());
  CHECK(yaw == doctest::Approx(wz * 0.01).epsilon(1e-9));

  // drag slows a coasting base
  auto moving = state;
  moving.root_lin_vel = Vector3d(1.0, 0.0, 0.0);
  const auto coast = sim::step_dynamics(
      spec, idx, moving, Eigen::VectorXd::Zero(spec.joint_count()),
      Vector3d::Zero(), params);
  CHECK(coast.root_lin_vel.x() ==
        doctest::Approx(1.0 - 0.5 / mass * 0.01).epsilon(1e-12));
}

TEST_CASE("attached objects ride their hand frame") {
  const auto spec = rigs::three_link_arm();
  const TreeIndex idx(spec);
  auto state = rest_state(spec, Transform::translation({0.0, 0.0, 0.7}));
  const auto poses =
      kin::forward_kinematics(spec, idx, state.root, state.joints.q);
  sim::ObjectState obj;
  obj.object_id = "box";
  obj.pose = poses.at(idx.link_index("hand"));
  obj.attached_to = "hand";
  obj.goal = Transform::translation({5.0, 0.0, 0.0});
  state.objects.push_back(obj);

  sim::SimParams params;
  Eigen::VectorXd tau(spec.joint_count());
  tau << 2.0, 1.0, -1.0, 0.0;
  const auto next =
      sim::step_dynamics(spec, idx, state, tau, Vector3d::Zero(), params);
  const auto new_poses =
      kin::forward_kinematics(spec, idx, next.root, next.joints.q);
  const auto& hand = new_poses.at(idx.link_index("hand"));
  CHECK((next.objects[0].pose.position - hand.position).norm() < 1e-12);
  const Vector3d want_vel =
      (hand.position - obj.pose.position) / params.dt;
  CHECK((next.objects[0].velocity - want_vel).norm() < 1e-9);

  // a free object stays put
  auto free_state = state;
  free_state.objects[0].attached_to.clear();
  const auto still =
      sim::step_dynamics(spec, idx, free_state, tau, Vector3d::Zero(), params);
  CHECK((still.objects[0].pose.position - obj.pose.position).norm() == 0.0);
}

TEST_CASE("grasping attaches, releases at the goal, and never regrasps") {
  const auto spec = rigs::three_link_arm();
  const TreeIndex idx(spec);
  auto state = rest_state(spec, Transform::translation({0.0, 0.0, 0.7}));
  const auto poses =
      kin::forward_kinematics(spec, idx, state.root, state.joints.q);
  const Vector3d hand_pos = poses.at(idx.link_index("hand")).position;

  sim::ObjectState obj;
  obj.object_id = "box";
  obj.pose = Transform::translation(hand_pos + Vector3d(0.03, 0.0, 0.0));
  obj.goal = Transform::translation({9.0, 0.0, 0.0});
  state.objects.push_back(obj);

  SUBCASE("attach records the hand-relative offset") {
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1);
    REQUIRE(state.objects[0].attached_to == "hand");
    const Transform back = poses.at(idx.link_index("hand")) *
                           state.objects[0].grasp_offset;
    CHECK((back.position - state.objects[0].pose.position).norm() < 1e-12);
  }

  SUBCASE("attachment needs the object strictly inside the radius") {
    state.objects[0].pose =
        Transform::translation(hand_pos + Vector3d(0.05, 0.0, 0.0));
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1);
    CHECK(state.objects[0].attached_to.empty());
  }

  SUBCASE("release near the goal marks the object placed for good") {
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1);
    REQUIRE(state.objects[0].attached_to == "hand");
    state.objects[0].pose = Transform::translation({9.0, 0.05, 0.0});
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1);
    CHECK(state.objects[0].attached_to.empty());
    CHECK(state.objects[0].placed);
    // even back inside the grasp radius it stays free
    state.objects[0].pose = Transform::translation(hand_pos);
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1);
    CHECK(state.objects[0].attached_to.empty());
  }

  SUBCASE("a commanded release without the goal is not placement") {
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1);
    REQUIRE(state.objects[0].attached_to == "hand");
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1, {1});
    CHECK(state.objects[0].attached_to.empty());
    CHECK_FALSE(state.objects[0].placed);
    // the same call must not regrasp, the next one may
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1);
    CHECK(state.objects[0].attached_to == "hand");
  }

  SUBCASE("an object parked at its goal is left alone") {
    state.objects[0].pose = Transform::translation(hand_pos);
    state.objects[0].goal =
        Transform::translation(hand_pos + Vector3d(0.02, 0.0, 0.0));
    sim::grasp_update(spec, idx, {"hand"}, state, 0.05, 0.1);
    CHECK(state.objects[0].attached_to.empty());
  }
}

TEST_CASE("equidistant hands tie-break by name") {
  const auto spec = rigs::two_part_arms();
  const TreeIndex idx(spec);
  auto state = rest_state(spec, Transform::translation({0.0, 0.0, 0.6}));
  const auto poses =
      kin::forward_kinematics(spec, idx, state.root, state.joints.q);
  const Vector3d l = poses.at(idx.link_index("l_hand")).position;
  const Vector3d r = poses.at(idx.link_index("r_hand")).position;
  sim::ObjectState obj;
  obj.object_id = "ball";
  obj.pose = Transform::translation(0.5 * (l + r));
  obj.goal = Transform::translation({9.0, 9.0, 9.0});
  state.objects.push_back(obj);
  const double d = (l - obj.pose.position).norm();
  sim::grasp_update(spec, idx, {"r_hand", "l_hand"}, state, d + 0.01, d + 0.02);
  CHECK(state.objects[0].attached_to == "l_hand");
}

TEST_CASE("an impulse kicks the base velocity exactly once") {
  const auto spec = rigs::mobile_arm();
  sim::SimState state;
  state.joints = JointState(spec.joint_count());
  state.t = 2.0;
  sim::Perturbation p;
  p.impulse = Vector3d(1.0, -0.5, 7.0);
  p.apply_time = 2.0;
  const double mass = spec.total_mass();
  sim::apply_perturbation(state, p, mass, 0.01);
  CHECK(state.root_lin_vel.x() == doctest::Approx(1.0 / mass).epsilon(1e-12));
  CHECK(state.root_lin_vel.y() == doctest::Approx(-0.5 / mass).epsilon(1e-12));
  CHECK(state.root_lin_vel.z() == 0.0);

  // outside the window nothing happens
  auto later = state;
  later.t = 2.01;
  const Vector3d before = later.root_lin_vel;
  sim::apply_perturbation(later, p, mass, 0.01);
  CHECK((later.root_lin_vel - before).norm() == 0.0);
  auto earlier = state;
  earlier.t = 1.99;
  sim::apply_perturbation(earlier, p, mass, 0.01);
  CHECK((earlier.root_lin_vel - state.root_lin_vel).norm() == 0.0);

  sim::Perturbation bad = p;
  bad.impulse.x() = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(sim::apply_perturbation(state, bad, mass, 0.01),
                  std::invalid_argument);
}

TEST_CASE("observations lay out state then root-relative key frames") {
  const auto spec = rigs::three_link_arm();
  const TreeIndex idx(spec);
  const int n = spec.joint_count();
  sim::SimState state;
  state.joints = JointState(n);
  Rng rng(13);
  for (int j = 0; j < n; ++j) state.joints.q[j] = rng.uniform(-1.0, 1.0);
  state.joints.q_dot = rng.normal_vector(n);
  state.root.position = Vector3d(0.4, -0.2, 0.7);
  state.root.orientation = quat_exp(Vector3d(0.0, 0.0, 0.3));
  state.root_lin_vel = Vector3d(0.1, 0.2, 0.0);
  state.root_ang_vel = Vector3d(0.0, 0.0, -0.4);

  const auto obs = sim::build_observation(spec, idx, state, {"hand"});
  CHECK(obs.size() == sim::observation_dim(spec, 1));
  CHECK(obs.size() == 2 * n + 13 + 7);
  CHECK((obs.head(n) - state.joints.q).norm() == 0.0);
  CHECK((obs.segment(n, n) - state.joints.q_dot).norm() == 0.0);
  CHECK((obs.segment(2 * n, 3) - state.root.position).norm() == 0.0);
  CHECK(obs[2 * n + 3] >= 0.0);  // canonical quaternion
  CHECK((obs.segment(2 * n + 7, 3) - state.root_lin_vel).norm() == 0.0);
  CHECK((obs.segment(2 * n + 10, 3) - state.root_ang_vel).norm() == 0.0);

  const auto poses =
      kin::forward_kinematics(spec, idx, state.root, state.joints.q);
  const Transform rel =
      state.root.inverse() * poses.at(idx.link_index("hand"));
  CHECK((obs.segment(2 * n + 13, 3) - rel.position).norm() < 1e-12);

  CHECK_THROWS_AS(sim::build_observation(spec, idx, state, {"nope"}),
                  std::invalid_argument);
}

TEST_CASE("scene configs survive the json round trip") {
  const auto spec = rigs::mobile_arm();
  auto scene = rigs::carry_box_scene(spec);
  // exercise the per-joint array path too
  scene.gains.kp[1] += 5.0;
  scene.perturbations.push_back({Vector3d(1.0, 0.0, 0.0), 2.0, "root"});

  const Json j = sim::scene_to_json(scene, spec.joint_count());
  const auto back = sim::scene_from_json(j, spec);
  CHECK((back.gains.kp - scene.gains.kp).norm() == 0.0);
  CHECK((back.gains.kd - scene.gains.kd).norm() == 0.0);
  CHECK(back.root_actuated == scene.root_actuated);
  CHECK(back.params.dt == scene.params.dt);
  CHECK(back.params.root_damping == scene.params.root_damping);
  REQUIRE(back.objects.size() == scene.objects.size());
  CHECK(back.objects[0].id == scene.objects[0].id);
  CHECK((back.objects[0].goal.position - scene.objects[0].goal.position)
            .norm() == 0.0);
  REQUIRE(back.perturbations.size() == 1);
  CHECK(back.perturbations[0].apply_time == 2.0);
  CHECK(back.key_frames == scene.key_frames);
  CHECK(back.hand_frames == scene.hand_frames);
  CHECK(back.success_hold == scene.success_hold);
  CHECK(back.horizon == scene.horizon);

  SUBCASE("negative gains are rejected") {
    Json jb = j;
    jb["pd"]["kp"] = -1.0;
    CHECK_THROWS(sim::scene_from_json(jb, spec));
  }
  SUBCASE("grasp radius must sit below the release radius") {
    Json jb = j;
    jb["grasp_radius"] = 0.2;
    jb["release_radius"] = 0.1;
    CHECK_THROWS(sim::scene_from_json(jb, spec));
  }
  SUBCASE("unknown frames are rejected") {
    Json jb = j;
    jb["key_frames"].push_back("nope");
    CHECK_THROWS(sim::scene_from_json(jb, spec));
  }
  SUBCASE("missing fields are reported as malformed") {
    Json jb = j;
    jb.erase("pd");
    CHECK_THROWS_WITH_AS(sim::scene_from_json(jb, spec),
                         doctest::Contains("malformed scene config"),
                         std::runtime_error);
  }
}

TEST_CASE("environments are deterministic per seed and env id") {
  const auto spec = rigs::three_link_arm();
  const auto scene = rigs::behavior_scene(spec);
  sim::Environment a(spec, scene, 42, 0);
  sim::Environment b(spec, scene, 42, 0);
  sim::Environment c(spec, scene, 42, 1);
  CHECK((a.observation() - b.observation()).norm() == 0.0);
  CHECK((a.observation() - c.observation()).norm() != 0.0);

  Rng act(3);
  for (int t = 0; t < 50; ++t) {
    const Eigen::VectorXd u = act.normal_vector(a.action_dim());
    a.step(u);
    b.step(u);
  }
  CHECK((a.observation() - b.observation()).norm() == 0.0);
  CHECK(a.time() == doctest::Approx(0.5));

  // the reset stream continues rather than repeating episode one
  const auto first_episode = a.observation();
  a.reset();
  b.reset();
  CHECK((a.observation() - b.observation()).norm() == 0.0);
  CHECK((a.observation() - first_episode).norm() != 0.0);
}

TEST_CASE("zero action drives the joints toward the middle of the range") {
  const auto spec = rigs::three_link_arm();
  auto scene = rigs::behavior_scene(spec);
  scene.reset_noise = 0.0;
  sim::Environment env(spec, scene, 1, 0);
  CHECK(env.action_dim() == spec.joint_count());
  env.step(Eigen::VectorXd::Zero(env.action_dim()));
  // at the midpoint with zero velocity the pd torque is exactly zero
  const Eigen::VectorXd want = sim::pd_torque(
      scene.gains, spec.mid_pose(), spec.mid_pose(),
      Eigen::VectorXd::Zero(spec.joint_count()));
  CHECK((env.last_applied_torque() - want).norm() == 0.0);

  Eigen::VectorXd wrong(env.action_dim() + 1);
  wrong.setZero();
  CHECK_THROWS_AS(env.step(wrong), std::invalid_argument);
}

TEST_CASE("a root-actuated scene exposes force channels") {
  const auto spec = rigs::mobile_arm();
  sim::SceneConfig scene;
  scene.root_start = Transform::translation({0.0, 0.0, 0.7});
  scene.root_actuated = true;
  scene.gains = sim::PdGains::uniform(spec.joint_count(), 40.0, 2.0, 20.0);
  scene.reset_noise = 0.0;
  sim::Environment env(spec, scene, 5, 0);
  CHECK(env.action_dim() == spec.joint_count() + 3);

  Eigen::VectorXd a = Eigen::VectorXd::Zero(env.action_dim());
  a[spec.joint_count()] = 1.0;       // full forward force
  a[spec.joint_count() + 2] = -0.5;  // half yaw torque backwards
  env.step(a);
  const double mass = spec.total_mass();
  CHECK(env.state().root_lin_vel.x() ==
        doctest::Approx(scene.params.max_force / mass * scene.params.dt)
            .epsilon(1e-12));
  CHECK(env.state().root_ang_vel.z() ==
        doctest::Approx(-0.5 * scene.params.max_yaw_torque /
                        scene.params.root_yaw_inertia * scene.params.dt)
            .epsilon(1e-12));

  // actions beyond [-1, 1] clamp rather than overdrive
  env.reset();
  Eigen::VectorXd big = Eigen::VectorXd::Zero(env.action_dim());
  big[spec.joint_count()] = 50.0;
  env.step(big);
  CHECK(env.state().root_lin_vel.x() ==
        doctest::Approx(scene.params.max_force / mass * scene.params.dt)
            .epsilon(1e-12));
}

TEST_CASE("success latches once the object is held at the goal") {
  const auto spec = rigs::mobile_arm();
  auto scene = rigs::carry_box_scene(spec);
  REQUIRE(scene.objects.size() == 1);
  scene.objects[0].start = scene.objects[0].goal;  // already delivered
  scene.reset_noise = 0.0;
  sim::Environment env(spec, scene, 1, 0);
  CHECK_FALSE(env.task_success());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(env.action_dim());
  const int hold_steps =
      static_cast<int>(scene.success_hold / scene.params.dt);
  for (int t = 0; t < hold_steps - 1; ++t) env.step(zero);
  CHECK_FALSE(env.task_success());
  env.step(zero);
  CHECK(env.task_success());
  CHECK(env.hold_time() == doctest::Approx(scene.success_hold));
  // latched even if the measurement later resets
  env.step(zero);
  CHECK(env.task_success());
  CHECK(env.object_goal_distance() < scene.success_eps);

  // a fresh reset clears it
  env.reset();
  CHECK_FALSE(env.task_success());
}

TEST_CASE("the horizon flag trips at the configured episode length") {
  const auto spec = rigs::three_link_arm();
  auto scene = rigs::behavior_scene(spec);
  scene.horizon = 0.1;
  sim::Environment env(spec, scene, 1, 0);
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(env.action_dim());
  for (int t = 0; t < 9; ++t) {
    env.step(zero);
    CHECK_FALSE(env.horizon_reached());
  }
  env.step(zero);
  CHECK(env.horizon_reached());
}
