#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "xembod/dail.hpp"
#include "xembod/embodiment.hpp"
#include "xembod/json_io.hpp"
#include "xembod/motion.hpp"
#include "xembod/rl.hpp"
#include "xembod/sim.hpp"

namespace xembod::skill {

enum class NodeKind { body_part, object };

struct GraphNode {
  std::string node_id;
  NodeKind kind = NodeKind::body_part;
  Transform pose;  // world frame
  // root-frame displacement: hand nodes carry hand->object, object nodes
  // carry object->goal; zero when the scene has no object
  Eigen::Vector3d aux = Eigen::Vector3d::Zero();
};

// Hands and objects with binary contact edges (symmetric, zero diagonal).
struct InteractionGraph {
  std::vector<GraphNode> nodes;
  Eigen::MatrixXi edges;
  double contact_threshold = 0.05;

  int node_count() const { return static_cast<int>(nodes.size()); }
};

// One object's pose and goal at an instant, the minimal slice of either a
// sim object state or a demo object track.
struct ObjectInstant {
  std::string id;
  Transform pose;
  Transform goal;
};

// Hands collapse to their palm frame; edge(hand, object) = 1 iff world
// distance is strictly below contact_threshold.
InteractionGraph extract_interaction_graph(
    const Transform& root,
    const std::vector<std::pair<std::string, Transform>>& hand_poses,
    const std::vector<ObjectInstant>& objects, double contact_threshold);

InteractionGraph graph_from_sim(const EmbodimentSpec& spec,
                                const TreeIndex& idx,
                                const std::vector<std::string>& hand_frames,
                                const sim::SimState& state,
                                double contact_threshold);

InteractionGraph graph_from_frame(const EmbodimentSpec& spec,
                                  const TreeIndex& idx,
                                  const std::vector<std::string>& hand_frames,
                                  const motion::Frame& frame,
                                  const std::vector<ObjectInstant>& objects,
                                  double contact_threshold);

// Root-frame displacements plus binary contact flags, the discriminator's
// view of manipulation: per-hand hand->object, object->goal, per-hand e.
struct InteractionState {
  std::vector<Eigen::Vector3d> d_ho;
  Eigen::Vector3d d_og = Eigen::Vector3d::Zero();
  std::vector<int> e_ho;

  int hand_count() const { return static_cast<int>(d_ho.size()); }
  int dim() const { return 4 * hand_count() + 3; }
  Eigen::VectorXd pack() const;  // [d_ho...; d_og; e_ho...]
};

// Requires exactly one object node in the graph.
InteractionState interaction_state(const InteractionGraph& graph);

struct SkillRewardWeights {
  double w_g = 0.5;
  double w_s = 0.3;
  double w_b = 0.2;
};

struct TaskRewardConfig {
  double alpha = 2.0;        // 1/m, shaping falloff
  double success_eps = 0.1;  // m
  double bonus = 10.0;       // paid once, on the first step inside success_eps
};

// exp(-alpha * distance) + bonus on the flagged step
double task_reward(double object_goal_distance, bool first_success,
                   const TaskRewardConfig& cfg);

// Same bounded least-squares mapping the per-part discriminators use.
double skill_style_reward(double d_interaction);

double skill_reward(double r_g, double r_s, double r_b,
                    const SkillRewardWeights& w);

// High-level policy: [observation, packed interaction state, root-frame goal
// pose] -> raw per-part latents, hypersphere-projected before the low-level
// controller sees them.
struct SkillPolicy {
  rl::GaussianPolicy policy;
  rl::RunningNorm input_norm{0};
  int parts = 1;
  int latent_dim = 16;
  int obs_dim = 0;
  int hands = 0;

  int input_dim() const { return policy.obs_dim(); }
  Eigen::VectorXd input(const Eigen::VectorXd& raw_obs,
                        const InteractionState& s,
                        const Eigen::VectorXd& goal7) const;
  // per-part unit-norm projection of a raw policy output
  Eigen::VectorXd latents(const Eigen::VectorXd& raw_action) const;
  // deterministic decision: projected mean
  Eigen::VectorXd act(const Eigen::VectorXd& raw_obs, const InteractionState& s,
                      const Eigen::VectorXd& goal7) const;
};

Json skill_policy_to_json(const SkillPolicy& policy);
SkillPolicy skill_policy_from_json(const Json& j);

// goal pose of the task object in the root frame: [position; canonical wxyz]
Eigen::VectorXd goal_in_root(const Transform& root, const Transform& goal);

// Demo interaction-state transitions (s_I at step i stacked with s_I at step
// i+k) from clips carrying object tracks, at the control rate.
Eigen::MatrixXd build_demo_interaction_transitions(
    const std::vector<motion::MotionClip>& clips, const EmbodimentSpec& spec,
    const std::vector<std::string>& hand_frames, double control_fps, int k,
    double contact_threshold);

// One least-squares update of the interaction discriminator; identical
// mechanics to the per-part behavior discriminators.
dail::DiscReport interaction_discriminator_update(
    dail::PartDiscriminator& d_interaction, const Eigen::MatrixXd& demo_batch,
    const Eigen::MatrixXd& policy_batch, const dail::DiscConfig& cfg);

struct SkillConfig {
  int k = 2;  // low-level steps per latent decision
  std::vector<int> policy_hidden{64, 64};
  std::vector<int> value_hidden{64, 64};
  std::vector<int> disc_hidden{64, 64};
  SkillRewardWeights weights;
  TaskRewardConfig task;
  double contact_threshold = 0.05;
  int envs = 8;
  int workers = 8;
  int horizon = 64;  // decisions per env per iteration
  int iterations = 200;
  int disc_batch = 256;
  int disc_updates = 2;
  rl::PpoConfig ppo;
  dail::DiscConfig disc;
  std::uint64_t seed = 1;
};

Json skill_config_to_json(const SkillConfig& cfg);
SkillConfig skill_config_from_json(const Json& j);

struct TrainSkillResult {
  SkillPolicy policy;
  dail::PartDiscriminator d_interaction;
  std::vector<std::string> curve_header;
  std::vector<std::vector<double>> curves;
  long total_env_steps = 0;  // low-level steps
};

// Task learning on behavior latents: the frozen low-level controller executes
// every decision for k steps while the high-level policy collects the
// weighted task + interaction-style + behavior-style reward. Deterministic
// given config and seed; worker count never changes results.
TrainSkillResult train_skill(const dail::BehaviorController& controller,
                             const std::vector<dail::PartDiscriminator>& discs,
                             const std::vector<motion::MotionClip>& demos,
                             const EmbodimentSpec& spec,
                             const sim::SceneConfig& scene,
                             const SkillConfig& cfg);

struct SkillEvalReport {
  double success_rate = 0.0;
  double mean_r_g = 0.0;
  double mean_r_s = 0.0;
  double mean_r_b = 0.0;
  double mean_reward = 0.0;
  int episodes = 0;
};

// Deterministic rollouts of the trained stack; means are per decision.
SkillEvalReport eval_skill(const SkillPolicy& policy,
                           const dail::BehaviorController& controller,
                           const dail::PartDiscriminator& d_interaction,
                           const std::vector<dail::PartDiscriminator>& discs,
                           const EmbodimentSpec& spec,
                           const sim::SceneConfig& scene,
                           const SkillConfig& cfg, int episodes,
                           std::uint64_t seed);

struct PerturbationReport {
  double success_rate = 0.0;
  double recovered_rate = 0.0;   // base speed back under threshold in time
  double mean_recovery_s = 0.0;  // over recovered episodes
  double max_recovery_s = 0.0;
  int episodes = 0;
};

// Deterministic rollouts on a scene that carries at least one perturbation.
// Per episode, measures the time from the first impulse until the planar
// base speed first drops below speed_threshold; recovery counts when that
// happens within window_s. Episodes ending early without a dip count as not
// recovered.
PerturbationReport perturbation_recovery(
    const SkillPolicy& policy, const dail::BehaviorController& controller,
    const EmbodimentSpec& spec, const sim::SceneConfig& scene,
    const SkillConfig& cfg, double speed_threshold, double window_s,
    int episodes, std::uint64_t seed);

}  // namespace xembod::skill
