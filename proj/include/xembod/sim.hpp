#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "xembod/embodiment.hpp"
#include "xembod/json_io.hpp"
#include "xembod/kinematics.hpp"
#include "xembod/rng.hpp"

namespace xembod::sim {

struct PdGains {
  Eigen::VectorXd kp;            // N*m/rad
  Eigen::VectorXd kd;            // N*m*s/rad
  Eigen::VectorXd torque_limit;  // N*m

  static PdGains uniform(int n, double kp, double kd, double limit);
};

struct ObjectState {
  std::string object_id;
  Transform pose;
  Vector3d velocity{Vector3d::Zero()};
  std::string attached_to;  // hand frame name; empty when free
  Transform grasp_offset;   // hand frame -> object, recorded at attach
  Transform goal;
  bool placed = false;  // released at the goal; stays put afterwards
};

struct SimState {
  JointState joints;
  Transform root;
  Vector3d root_lin_vel{Vector3d::Zero()};
  Vector3d root_ang_vel{Vector3d::Zero()};
  std::vector<ObjectState> objects;
  double t = 0.0;
};

struct Perturbation {
  Vector3d impulse{Vector3d::Zero()};  // N*s
  double apply_time = 0.0;
  std::string target = "root";  // root or a link name; both hit the base here
};

struct SimParams {
  double dt = 0.01;            // s, control every step
  double joint_damping = 0.1;  // N*m*s/rad
  double gravity = 9.81;       // m/s^2, z up
  double root_damping = 0.5;   // N*s/m drag on the planar base
  double root_yaw_inertia = 1.0;
  double max_force = 30.0;      // root actuation scale, N
  double max_yaw_torque = 10.0; // N*m
};

// tau = clamp(kp (q_target - q) - kd q_dot, +-torque_limit)
Eigen::VectorXd pd_torque(const PdGains& gains, const Eigen::VectorXd& q_target,
                          const Eigen::VectorXd& q,
                          const Eigen::VectorXd& q_dot);

// dU/dq of gravity potential U = sum_links m g z, exact for the chain
Eigen::VectorXd gravity_torque(const EmbodimentSpec& spec, const TreeIndex& idx,
                               const Transform& root_pose,
                               const Eigen::VectorXd& q, double gravity = 9.81);

// Semi-implicit Euler. Per joint: qdd = (tau - c qd - g_q)/I with I the child
// link's inertia_scale; positions clamp to limits with velocity zeroed at the
// stop. The root is a planar rigid body (x, y, yaw; z held) driven by
// root_wrench = (fx, fy, yaw torque) with mass = total link mass. Attached
// objects follow their hand frame exactly.
SimState step_dynamics(const EmbodimentSpec& spec, const TreeIndex& idx,
                       const SimState& state, const Eigen::VectorXd& torques,
                       const Vector3d& root_wrench, const SimParams& params);

// Attach a free object to the nearest hand within grasp_radius (ties break
// by lexicographic hand name, offset recorded); detach when flagged or when
// the object sits within release_radius of its goal (then marked placed).
// Objects at, or already delivered to, their goal are not grasped.
void grasp_update(const EmbodimentSpec& spec, const TreeIndex& idx,
                  const std::vector<std::string>& hand_frames, SimState& state,
                  double grasp_radius, double release_radius,
                  const std::vector<char>& release_cmd = {});

// Momentum kick on the base when t crosses apply_time.
void apply_perturbation(SimState& state, const Perturbation& p,
                        double total_mass, double dt);

// [q, qd, root pos, root quat wxyz, root lin vel, root ang vel,
//  per key frame: position and quat in the root frame]; layout obs-v1
Eigen::VectorXd build_observation(const EmbodimentSpec& spec,
                                  const TreeIndex& idx, const SimState& state,
                                  const std::vector<std::string>& key_frames);
int observation_dim(const EmbodimentSpec& spec, int key_frame_count);

struct SceneObject {
  std::string id;
  Transform start;
  Transform goal;
};

struct SceneConfig {
  Transform root_start;
  bool root_actuated = false;
  PdGains gains;  // broadcast from scalars in the file
  SimParams params;
  std::vector<SceneObject> objects;
  std::vector<Perturbation> perturbations;
  std::vector<std::string> key_frames;
  std::vector<std::string> hand_frames;
  double grasp_radius = 0.05;
  double release_radius = 0.1;
  double success_eps = 0.1;
  double success_hold = 1.0;  // s the object must stay at the goal
  double horizon = 8.0;       // s per episode
  double reset_noise = 0.05;  // rad, sigma of joint reset noise
};

Json scene_to_json(const SceneConfig& scene, int joint_count);
SceneConfig scene_from_json(const Json& j, const EmbodimentSpec& spec);
SceneConfig load_scene(const std::string& path, const EmbodimentSpec& spec);

// One rollout instance: owns state and its random stream. Actions are
// [-1, 1] joint targets mapped onto the limit range, plus (fx, fy, yaw
// torque) channels scaled by max_force/max_yaw_torque when the root is
// actuated.
class Environment {
 public:
  Environment(const EmbodimentSpec& spec, const SceneConfig& scene,
              std::uint64_t seed, std::uint64_t env_id);

  int action_dim() const;
  int obs_dim() const;
  void reset();
  void step(const Eigen::VectorXd& action);

  const SimState& state() const { return state_; }
  const SceneConfig& scene() const { return scene_; }
  const EmbodimentSpec& spec() const { return spec_; }
  const TreeIndex& tree() const { return idx_; }
  Eigen::VectorXd observation() const;

  double time() const { return state_.t; }
  bool horizon_reached() const { return state_.t >= scene_.horizon - 1e-9; }
  // goal reached and held for success_hold seconds this episode
  bool task_success() const { return success_; }
  double hold_time() const { return hold_time_; }
  // distance of the first object to its goal, 0 when the scene has none
  double object_goal_distance() const;
  Eigen::VectorXd last_applied_torque() const { return last_torque_; }

 private:
  EmbodimentSpec spec_;
  TreeIndex idx_;
  SceneConfig scene_;
  SimState state_;
  Rng rng_;
  Eigen::VectorXd last_torque_;
  double hold_time_ = 0.0;
  bool success_ = false;
};

}  // namespace xembod::sim
