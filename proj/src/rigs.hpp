#pragma once

// Small benchmark bodies, scenes, and demonstration generators shared by the
// tests, the acceptance runs, and the bundled example data.

#include <string>
#include <vector>

#include "xembod/dail.hpp"
#include "xembod/embodiment.hpp"
#include "xembod/motion.hpp"
#include "xembod/sim.hpp"

namespace xembod::rigs {

// Fixed-base tabletop arm: yaw shoulder, two pitch joints, tip frame "hand"
// 0.7 m out at zero pose.
EmbodimentSpec three_link_arm();

// Same joint layout as three_link_arm with both link lengths scaled, for
// retargeting across bodies that differ in proportion.
EmbodimentSpec three_link_arm_scaled(double link_scale,
                                     const std::string& name);

// Two 2-joint arms ("left"/"right" groups) on a shared torso, used to compare
// decomposed against monolithic imitation.
EmbodimentSpec two_part_arms();

// The tabletop arm on a force-actuated planar base, for loco-manipulation.
EmbodimentSpec mobile_arm();

// Same morphology minus the elbow, remaining link lengths scaled by 0.8; the
// cross-embodiment transfer target.
EmbodimentSpec mobile_arm_small();

// Pivot, rod, and a point-mass bob 0.5 m down a frozen tip joint; exact
// small-oscillation frequency sqrt(g/L) for the dynamics checks.
EmbodimentSpec pendulum();

// One part covering every joint of the given body; key frames are the
// groups' end frames. include_root adds the base channel for mobile bodies.
dail::PartitionScheme whole_body_partition(const EmbodimentSpec& spec,
                                           bool include_root);

// left/right split for two_part_arms
dail::PartitionScheme two_part_partition();

// Free-air behavior scene: no objects, PD-driven joints, fixed base.
sim::SceneConfig behavior_scene(const EmbodimentSpec& spec);

// Carry-box scene: actuated base, one box 1 m ahead, goal 1 m further on.
sim::SceneConfig carry_box_scene(const EmbodimentSpec& spec);

// Per-joint sinusoids about the mid pose, analytic velocities. Joints of
// group g get phase group_phase[g] plus a fixed within-group stagger.
// Amplitude is amp_scale times the joint range.
motion::MotionClip sine_clip(const EmbodimentSpec& spec, double fps,
                             double duration, double freq,
                             const std::vector<double>& group_phase,
                             const std::string& label, double amp_scale = 0.2);

// The same sinusoid program fed through the scene's PD servos and recorded
// from the simulated plant, so every frame is realizable under the scene
// dynamics. Starts from the nominal reset pose at rest.
motion::MotionClip tracked_sine_clip(const EmbodimentSpec& spec,
                                     const sim::SceneConfig& scene,
                                     double duration, double freq,
                                     const std::vector<double>& group_phase,
                                     const std::string& label,
                                     double amp_scale = 0.2);

// Scripted pick-and-place demonstration: drive the base alongside, reach the
// box with IK, carry it to the goal, release and retreat. Object track and
// goal included.
motion::MotionClip carry_box_demo(const EmbodimentSpec& spec,
                                  const sim::SceneConfig& scene,
                                  const Vector3d& object_start,
                                  const Vector3d& object_goal, double fps,
                                  const std::string& label);

// Training and held-out demo sets around the canonical carry-box layout.
std::vector<motion::MotionClip> carry_box_demos(const EmbodimentSpec& spec,
                                                const sim::SceneConfig& scene);
std::vector<motion::MotionClip> carry_box_heldout_demos(
    const EmbodimentSpec& spec, const sim::SceneConfig& scene);

}  // namespace xembod::rigs
