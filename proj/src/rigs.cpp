#include "rigs.hpp"

#include <cmath>
#include <stdexcept>

#include "xembod/kinematics.hpp"

namespace xembod::rigs {

namespace {

LinkDef link(const std::string& name, const std::string& parent, double mass,
             double inertia) {
  LinkDef l;
  l.name = name;
  l.parent = parent;
  l.mass = mass;
  l.inertia_scale = inertia;
  return l;
}

JointDef joint(const std::string& name, const std::string& parent,
               const std::string& child, const Vector3d& axis, double lo,
               double hi, const Transform& offset) {
  JointDef j;
  j.name = name;
  j.parent_link = parent;
  j.child_link = child;
  j.axis = axis;
  j.lower_limit = lo;
  j.upper_limit = hi;
  j.offset = offset;
  return j;
}

const Vector3d kX{1, 0, 0};
const Vector3d kY{0, 1, 0};
const Vector3d kZ{0, 0, 1};

EmbodimentSpec arm_body(const std::string& name, double upper_len,
                        double fore_len) {
  EmbodimentSpec s;
  s.name = name;
  s.root_link = "base";
  s.root_height = 0.7;
  s.links = {link("base", "", 3.0, 1.0), link("shoulder", "base", 0.5, 0.1),
             link("upper", "shoulder", 0.6, 0.15),
             link("fore", "upper", 0.4, 0.05),
             link("hand", "fore", 0.2, 0.01)};
  s.joints = {
      joint("yaw", "base", "shoulder", kZ, -2.6, 2.6, Transform::identity()),
      joint("shoulder_pitch", "shoulder", "upper", kY, -2.0, 2.0,
            Transform::identity()),
      joint("elbow_pitch", "upper", "fore", kY, -2.3, 2.3,
            Transform::translation({upper_len, 0, 0})),
      // frozen tip joint carries the hand frame to the end of the forearm
      joint("wrist_fix", "fore", "hand", kY, 0.0, 0.0,
            Transform::translation({fore_len, 0, 0}))};
  s.groups = {{"arm", {"yaw", "shoulder_pitch", "elbow_pitch", "wrist_fix"},
               "hand"}};
  return s;
}

}  // namespace

EmbodimentSpec three_link_arm() { return arm_body("three_link_arm", 0.4, 0.3); }

EmbodimentSpec three_link_arm_scaled(double link_scale,
                                     const std::string& name) {
  return arm_body(name, 0.4 * link_scale, 0.3 * link_scale);
}

EmbodimentSpec two_part_arms() {
  EmbodimentSpec s;
  s.name = "two_part_arms";
  s.root_link = "torso";
  s.root_height = 0.6;
  s.links = {link("torso", "", 2.0, 1.0),
             link("l_upper", "torso", 0.5, 0.08),
             link("l_fore", "l_upper", 0.3, 0.03),
             link("l_hand", "l_fore", 0.1, 0.01),
             link("r_upper", "torso", 0.5, 0.08),
             link("r_fore", "r_upper", 0.3, 0.03),
             link("r_hand", "r_fore", 0.1, 0.01)};
  s.joints = {joint("l_shoulder", "torso", "l_upper", kY, -2.0, 2.0,
                    Transform::translation({0, 0.2, 0})),
              joint("l_elbow", "l_upper", "l_fore", kY, -2.3, 2.3,
                    Transform::translation({0.3, 0, 0})),
              joint("l_fix", "l_fore", "l_hand", kY, 0.0, 0.0,
                    Transform::translation({0.25, 0, 0})),
              joint("r_shoulder", "torso", "r_upper", kY, -2.0, 2.0,
                    Transform::translation({0, -0.2, 0})),
              joint("r_elbow", "r_upper", "r_fore", kY, -2.3, 2.3,
                    Transform::translation({0.3, 0, 0})),
              joint("r_fix", "r_fore", "r_hand", kY, 0.0, 0.0,
                    Transform::translation({0.25, 0, 0}))};
  s.groups = {{"left", {"l_shoulder", "l_elbow", "l_fix"}, "l_hand"},
              {"right", {"r_shoulder", "r_elbow", "r_fix"}, "r_hand"}};
  return s;
}

EmbodimentSpec mobile_arm() { return arm_body("mobile_arm", 0.4, 0.3); }

EmbodimentSpec mobile_arm_small() {
  EmbodimentSpec s;
  s.name = "mobile_arm_small";
  s.root_link = "base";
  s.root_height = 0.7;
  s.links = {link("base", "", 3.0, 1.0), link("shoulder", "base", 0.4, 0.08),
             link("upper", "shoulder", 0.8, 0.12),
             link("hand", "upper", 0.16, 0.01)};
  s.joints = {
      joint("yaw", "base", "shoulder", kZ, -2.6, 2.6, Transform::identity()),
      joint("shoulder_pitch", "shoulder", "upper", kY, -2.0, 2.0,
            Transform::identity()),
      // the 0.7 m two-segment reach collapses to one 0.8-scaled segment
      joint("arm_fix", "upper", "hand", kY, 0.0, 0.0,
            Transform::translation({0.56, 0, 0}))};
  s.groups = {{"arm", {"yaw", "shoulder_pitch", "arm_fix"}, "hand"}};
  return s;
}

EmbodimentSpec pendulum() {
  EmbodimentSpec s;
  s.name = "pendulum";
  s.root_link = "anchor";
  s.root_height = 1.0;
  s.links = {link("anchor", "", 1.0, 1.0), link("rod", "anchor", 0.01, 0.25),
             link("bob", "rod", 1.0, 0.001)};
  s.joints = {
      joint("pivot", "anchor", "rod", kY, -3.1, 3.1, Transform::identity()),
      // point mass 0.5 m down the rod; q = 0 hangs straight down
      joint("tip_fix", "rod", "bob", kY, 0.0, 0.0,
            Transform::translation({0, 0, -0.5}))};
  s.groups = {{"rod", {"pivot", "tip_fix"}, "bob"}};
  return s;
}

dail::PartitionScheme whole_body_partition(const EmbodimentSpec& spec,
                                           bool include_root) {
  dail::PartSpec part;
  part.part_id = "body";
  for (const auto& j : spec.joints) part.joint_names.push_back(j.name);
  for (const auto& g : spec.groups) part.key_frames.push_back(g.end_frame);
  part.include_root = include_root;
  return {{part}};
}

dail::PartitionScheme two_part_partition() {
  dail::PartSpec left;
  left.part_id = "left";
  left.joint_names = {"l_shoulder", "l_elbow", "l_fix"};
  left.key_frames = {"l_hand"};
  dail::PartSpec right;
  right.part_id = "right";
  right.joint_names = {"r_shoulder", "r_elbow", "r_fix"};
  right.key_frames = {"r_hand"};
  return {{left, right}};
}

sim::SceneConfig behavior_scene(const EmbodimentSpec& spec) {
  sim::SceneConfig scene;
  scene.root_start = Transform::translation({0, 0, 0.6});
  scene.root_actuated = false;
  scene.gains = sim::PdGains::uniform(spec.joint_count(), 80.0, 4.0, 30.0);
  for (const auto& g : spec.groups) scene.key_frames.push_back(g.end_frame);
  scene.horizon = 8.0;
  scene.reset_noise = 0.05;
  return scene;
}

sim::SceneConfig carry_box_scene(const EmbodimentSpec& spec) {
  sim::SceneConfig scene;
  scene.root_start = Transform::translation({0, 0, 0.5});
  scene.root_actuated = true;
  scene.gains = sim::PdGains::uniform(spec.joint_count(), 60.0, 3.0, 30.0);
  scene.params.root_damping = 3.0;  // heavy wheel friction, kills coasting
  scene.objects = {{"box", Transform::translation({1.0, 0, 0.2}),
                    Transform::translation({2.0, 0, 0.2})}};
  scene.key_frames = {"hand"};
  scene.hand_frames = {"hand"};
  scene.horizon = 8.0;
  scene.reset_noise = 0.02;
  return scene;
}

motion::MotionClip sine_clip(const EmbodimentSpec& spec, double fps,
                             double duration, double freq,
                             const std::vector<double>& group_phase,
                             const std::string& label, double amp_scale) {
  if (group_phase.size() != spec.groups.size())
    throw std::invalid_argument("need one phase per functional group");
  const Eigen::VectorXd lo = spec.lower_limits();
  const Eigen::VectorXd hi = spec.upper_limits();
  const Eigen::VectorXd mid = spec.mid_pose();
  const int n_joints = spec.joint_count();

  // phase per joint: the group's offset plus a stagger along the chain
  Eigen::VectorXd phase = Eigen::VectorXd::Zero(n_joints);
  Eigen::VectorXd amp(n_joints);
  for (int j = 0; j < n_joints; ++j) amp[j] = amp_scale * (hi[j] - lo[j]);
  for (size_t g = 0; g < spec.groups.size(); ++g) {
    int at = 0;
    for (const auto& jn : spec.groups[g].joint_names) {
      const int j = spec.joint_index(jn);
      phase[j] = group_phase[g] + 0.6 * at++;
    }
  }

  motion::MotionClip clip;
  clip.embodiment = spec.name;
  clip.fps = fps;
  clip.label = label;
  const Transform root = behavior_scene(spec).root_start;
  const double omega = 2.0 * M_PI * freq;
  const int n = static_cast<int>(std::lround(duration * fps)) + 1;
  for (int i = 0; i < n; ++i) {
    motion::Frame fr;
    fr.t = i / fps;
    fr.root = root;
    fr.q.resize(n_joints);
    fr.q_dot.resize(n_joints);
    for (int j = 0; j < n_joints; ++j) {
      fr.q[j] = mid[j] + amp[j] * std::sin(omega * fr.t + phase[j]);
      fr.q_dot[j] = amp[j] * omega * std::cos(omega * fr.t + phase[j]);
    }
    clip.frames.push_back(std::move(fr));
  }
  return clip;
}

motion::MotionClip tracked_sine_clip(const EmbodimentSpec& spec,
                                     const sim::SceneConfig& scene,
                                     double duration, double freq,
                                     const std::vector<double>& group_phase,
                                     const std::string& label,
                                     double amp_scale) {
  const double fps = 1.0 / scene.params.dt;
  const motion::MotionClip targets =
      sine_clip(spec, fps, duration, freq, group_phase, label, amp_scale);
  const TreeIndex idx(spec);
  const int n_joints = spec.joint_count();

  sim::SimState state;
  state.joints = JointState(n_joints);
  state.joints.q = spec.mid_pose();
  state.root = scene.root_start;

  motion::MotionClip clip;
  clip.embodiment = spec.name;
  clip.fps = fps;
  clip.label = label;
  auto record = [&](double t) {
    motion::Frame fr;
    fr.t = t;
    fr.root = state.root;
    fr.q = state.joints.q;
    fr.q_dot = state.joints.q_dot;
    clip.frames.push_back(std::move(fr));
  };
  record(0.0);
  for (int i = 1; i < targets.frame_count(); ++i) {
    const Eigen::VectorXd tau = sim::pd_torque(
        scene.gains, targets.frames[i].q, state.joints.q, state.joints.q_dot);
    state = sim::step_dynamics(spec, idx, state, tau, Vector3d::Zero(),
                               scene.params);
    record(i / fps);
  }
  return clip;
}

namespace {

double smooth(double u) {
  if (u <= 0.0) return 0.0;
  if (u >= 1.0) return 1.0;
  return u * u * (3.0 - 2.0 * u);
}

Vector3d lerp3(const Vector3d& a, const Vector3d& b, double s) {
  return a + s * (b - a);
}

}  // namespace

motion::MotionClip carry_box_demo(const EmbodimentSpec& spec,
                                  const sim::SceneConfig& scene,
                                  const Vector3d& object_start,
                                  const Vector3d& object_goal, double fps,
                                  const std::string& label) {
  const FunctionalGroup* group = spec.find_group("arm");
  if (!group) throw std::invalid_argument("carry-box demo needs an 'arm' group");
  TreeIndex idx(spec);

  const Transform root0 = scene.root_start;
  // stand at the distance where every supported arm can touch the box
  const double standoff = 0.47;
  Vector3d u = root0.position - object_start;
  u.z() = 0.0;
  u = u.norm() > 1e-9 ? Vector3d(u.normalized()) : Vector3d(-1, 0, 0);
  const double base_z = root0.position.z();
  auto base_at = [&](const Vector3d& target) {
    Vector3d p = target + standoff * u;
    p.z() = base_z;
    return p;
  };
  const Vector3d base_obj = base_at(object_start);
  const Vector3d base_goal = base_at(object_goal);

  const Eigen::VectorXd mid = spec.mid_pose();
  const Vector3d hand0 =
      kin::forward_kinematics(spec, idx, root0, mid).of(spec, group->end_frame)
          .position;

  kin::IkConfig ik;
  ik.max_iters = 80;
  ik.pos_tol = 1e-4;
  ik.rot_weight = 0.0;  // position-only reach, orientation free
  ik.rot_tol = 1e9;

  const double t_reach = 2.0, t_place = 4.0, t_end = 5.0;
  motion::MotionClip clip;
  clip.embodiment = spec.name;
  clip.fps = fps;
  clip.label = label;
  motion::ObjectTrack track;
  track.id = scene.objects.empty() ? "box" : scene.objects.front().id;
  track.goal = Transform(object_goal, Eigen::Quaterniond::Identity());

  Eigen::VectorXd q = mid;
  const int n = static_cast<int>(std::lround(t_end * fps)) + 1;
  for (int i = 0; i < n; ++i) {
    const double t = i / fps;
    Vector3d base, hand, obj;
    if (t <= t_reach) {
      const double s = smooth(t / t_reach);
      base = lerp3(root0.position, base_obj, s);
      hand = lerp3(hand0, object_start, s);
      obj = object_start;
    } else if (t <= t_place) {
      const double s = smooth((t - t_reach) / (t_place - t_reach));
      base = lerp3(base_obj, base_goal, s);
      hand = lerp3(object_start, object_goal, s);
      obj = hand;
    } else {
      const double s = smooth((t - t_place) / (t_end - t_place));
      base = base_goal;
      hand = object_goal + Vector3d(0, 0, 0.25 * s);
      obj = object_goal;
    }
    const Transform root(base, root0.orientation);
    const kin::IkResult res =
        kin::partial_ik(spec, idx, *group, root,
                        Transform(hand, Eigen::Quaterniond::Identity()), q, ik);
    q = res.q;

    motion::Frame fr;
    fr.t = t;
    fr.root = root;
    fr.q = q;
    fr.q_dot = Eigen::VectorXd::Zero(spec.joint_count());
    clip.frames.push_back(std::move(fr));
    track.poses.emplace_back(obj, Eigen::Quaterniond::Identity());
  }
  clip.objects.push_back(std::move(track));
  motion::finite_difference_velocities(clip);
  return clip;
}

std::vector<motion::MotionClip> carry_box_demos(const EmbodimentSpec& spec,
                                                const sim::SceneConfig& scene) {
  const double oz = 0.2;
  std::vector<motion::MotionClip> clips;
  const double offsets[5][3] = {{0.0, 0.0, 0.0},
                                {0.0, 0.08, 0.0},
                                {0.0, -0.08, 0.0},
                                {0.0, 0.0, 0.1},
                                {0.0, 0.0, -0.1}};
  for (int i = 0; i < 5; ++i) {
    const double dy = offsets[i][1];
    const double dgx = offsets[i][2];
    clips.push_back(carry_box_demo(spec, scene, {1.0, dy, oz},
                                   {2.0 + dgx, dy, oz}, 100.0,
                                   "carry_demo_" + std::to_string(i)));
  }
  return clips;
}

std::vector<motion::MotionClip> carry_box_heldout_demos(
    const EmbodimentSpec& spec, const sim::SceneConfig& scene) {
  const double oz = 0.2;
  std::vector<motion::MotionClip> clips;
  clips.push_back(carry_box_demo(spec, scene, {1.0, 0.05, oz},
                                 {2.05, 0.05, oz}, 100.0, "carry_heldout_0"));
  clips.push_back(carry_box_demo(spec, scene, {1.0, -0.05, oz},
                                 {1.95, -0.05, oz}, 100.0, "carry_heldout_1"));
  return clips;
}

}  // namespace xembod::rigs
