#pragma once

#include <string>
#include <vector>

#include "xembod/embodiment.hpp"

namespace xembod::kin {

// World poses of every link, aligned with spec.links order.
struct LinkPoses {
  std::vector<Transform> poses;

  const Transform& of(const EmbodimentSpec& spec, const std::string& link) const;
  const Transform& at(int link_index) const { return poses[link_index]; }
};

// Diagnostics, not exceptions: empty iff every spec invariant holds.
std::vector<std::string> validate_spec(const EmbodimentSpec& spec);

LinkPoses forward_kinematics(const EmbodimentSpec& spec, const TreeIndex& idx,
                             const Transform& root_pose,
                             const Eigen::VectorXd& q);
LinkPoses forward_kinematics(const EmbodimentSpec& spec,
                             const Transform& root_pose,
                             const Eigen::VectorXd& q);

// 6 x k geometric Jacobian of the group's end_frame (rows: linear xyz then
// angular xyz), columns in group joint order.
Eigen::MatrixXd group_jacobian(const EmbodimentSpec& spec, const TreeIndex& idx,
                               const Transform& root_pose,
                               const Eigen::VectorXd& q,
                               const FunctionalGroup& group);
Eigen::MatrixXd group_jacobian(const EmbodimentSpec& spec,
                               const Transform& root_pose,
                               const Eigen::VectorXd& q,
                               const FunctionalGroup& group);

struct IkConfig {
  double damping = 1e-2;      // DLS lambda
  int max_iters = 100;
  double pos_tol = 1e-5;      // m
  double rot_tol = 1e-3;      // rad
  double rot_weight = 0.5;    // orientation error weight relative to position
};

struct IkResult {
  Eigen::VectorXd q;    // full joint vector; non-group entries untouched
  double pos_error = 0.0;
  double rot_error = 0.0;
  bool converged = false;
  int iters = 0;
};

// Damped-least-squares IK over the group's joints only, every other joint
// frozen. Each step is clamped to joint limits. Throws on non-finite
// intermediates (ill-conditioned spec or target).
IkResult partial_ik(const EmbodimentSpec& spec, const TreeIndex& idx,
                    const FunctionalGroup& group, const Transform& root_pose,
                    const Transform& target, const Eigen::VectorXd& q_init,
                    const IkConfig& config);
IkResult partial_ik(const EmbodimentSpec& spec, const FunctionalGroup& group,
                    const Transform& root_pose, const Transform& target,
                    const Eigen::VectorXd& q_init, const IkConfig& config);

// Scale horizontal displacement from the first frame and height above ground
// by target_height/source_height. Orientations pass through. Z is up.
std::vector<Transform> normalize_root_trajectory(
    const std::vector<Transform>& root_track, double source_height,
    double target_height);

}  // namespace xembod::kin
