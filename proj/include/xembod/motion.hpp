#pragma once

#include <Eigen/Dense>
#include <string>
#include <utility>
#include <vector>

#include "xembod/embodiment.hpp"
#include "xembod/json_io.hpp"
#include "xembod/kinematics.hpp"

namespace xembod::motion {

struct Frame {
  double t = 0.0;
  Transform root;
  Eigen::VectorXd q;
  Eigen::VectorXd q_dot;
  Vector3d root_lin_vel{Vector3d::Zero()};  // world frame, m/s
  Vector3d root_ang_vel{Vector3d::Zero()};  // world frame, rad/s
};

struct ObjectTrack {
  std::string id;
  std::vector<Transform> poses;  // one per frame
  Transform goal;                // task target pose
};

struct MotionClip {
  std::string embodiment;
  double fps = 30.0;
  std::string label;
  std::vector<Frame> frames;
  std::vector<ObjectTrack> objects;
  Json meta;  // free-form extras; null when unused

  int frame_count() const { return static_cast<int>(frames.size()); }
  double duration() const {
    return frames.empty() ? 0.0 : frames.back().t - frames.front().t;
  }
  // joint dimension, taken from the first frame
  int dof() const { return frames.empty() ? 0 : static_cast<int>(frames[0].q.size()); }

  const ObjectTrack* find_object(const std::string& id) const {
    for (const auto& o : objects)
      if (o.id == id) return &o;
    return nullptr;
  }
};

using MotionDataset = std::vector<MotionClip>;

Json clip_to_json(const MotionClip& clip);
MotionClip clip_from_json(const Json& j);
MotionClip load_clip(const std::string& path);
void save_clip(const MotionClip& clip, const std::string& path);
MotionDataset load_dataset(const std::vector<std::string>& paths);

// Rebuild q_dot and root velocities from positions: central differences on
// interior frames, one-sided at the ends. Angular velocity comes from the
// quaternion log of the frame-to-frame delta.
void finite_difference_velocities(MotionClip& clip);

// Interpolated frame at time t, clamped to the clip range. Positions lerp,
// orientations slerp, velocities lerp.
Frame sample_frame(const MotionClip& clip, double t);
Transform sample_object_pose(const MotionClip& clip, const ObjectTrack& track,
                             double t);

// Uniform grid at new_fps over the same duration, velocities rebuilt.
MotionClip resample_clip(const MotionClip& clip, double new_fps);

struct RetargetConfig {
  // Position-only solves by default: bodies with different limb geometry
  // generally cannot reach the source end-frame orientation, and a nonzero
  // orientation weight drags the position residual with it. Opt back in by
  // raising rot_weight and lowering rot_tol.
  kin::IkConfig ik{.damping = 1e-2,
                   .max_iters = 100,
                   .pos_tol = 1e-5,
                   .rot_tol = 1e9,
                   .rot_weight = 0.0};
  // source part id -> target part id; empty matches identical ids
  std::vector<std::pair<std::string, std::string>> part_map;
  double scale = 0.0;  // 0 = target root_height / source root_height
};

struct RetargetReport {
  double mean_pos_error = 0.0;  // m, over mapped parts and frames
  double max_pos_error = 0.0;
  int ik_failures = 0;  // solves that hit max_iters without converging
};

// Map a clip onto another body. The root track is rescaled by the height
// ratio, then per frame each mapped group's joints are solved so its end
// frame tracks the source end frame pose (taken in the source root frame,
// scaled, re-anchored to the new root). Object tracks and goals go through
// the same world rescale. Unmapped target joints hold mid-range.
MotionClip retarget_clip(const MotionClip& src_clip,
                         const EmbodimentSpec& src_spec,
                         const EmbodimentSpec& tgt_spec,
                         const RetargetConfig& config,
                         RetargetReport* report = nullptr);

}  // namespace xembod::motion
