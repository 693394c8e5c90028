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
#include "xembod/skill.hpp"

namespace xembod::transfer {

// Deterministic rollout of the trained stack recorded as a motion clip at
// the control rate, object track and goal included. Metadata carries the
// success flag, the decision stride, and the latent chosen at each decision
// so the open-loop replay baseline can reuse them. If obs_log is given, the
// observation at every recorded frame is appended to it.
motion::MotionClip rollout_policy_to_clip(
    const skill::SkillPolicy& policy, const dail::BehaviorController& controller,
    const EmbodimentSpec& spec, const sim::SceneConfig& scene, int k,
    double contact_threshold, std::uint64_t seed,
    std::vector<Eigen::VectorXd>* obs_log = nullptr);

// Kinematic retargeting of a recorded rollout onto another body. Object
// poses rescale with the root-height ratio (hand approach geometry), but the
// task goal passes through unchanged.
motion::MotionClip deploy_cross_embodiment(const motion::MotionClip& src_clip,
                                           const EmbodimentSpec& src_spec,
                                           const EmbodimentSpec& tgt_spec,
                                           const motion::RetargetConfig& cfg,
                                           motion::RetargetReport* report =
                                               nullptr);

struct TrackingWeights {
  double w_j = 0.5;  // joint angles
  double w_r = 0.2;  // root pose
  double w_e = 0.3;  // end frames
};

// w_j exp(-|q_err|^2) + w_r exp(-root pose err^2) + w_e exp(-sum end-frame
// position err^2); each term in (0, 1]. Root error combines position and
// orientation angle; end frames are the functional groups' tips.
double tracking_reward(const EmbodimentSpec& spec, const TreeIndex& idx,
                       const motion::Frame& ref, const sim::SimState& state,
                       const TrackingWeights& w);

// Latent-curve layer: [phase in [0,1], observation] -> raw per-part latents,
// hypersphere-projected. The curve is explicit in phase, so a fixed phase
// sweep draws the trajectory each part follows on its latent sphere.
struct FineTuneLayer {
  rl::GaussianPolicy policy;
  rl::RunningNorm input_norm{0};
  int parts = 1;
  int latent_dim = 16;
  int obs_dim = 0;

  int input_dim() const { return policy.obs_dim(); }
  Eigen::VectorXd input(double phase, const Eigen::VectorXd& raw_obs) const;
  Eigen::VectorXd latents(const Eigen::VectorXd& raw_action) const;
  // deterministic latents: projected mean
  Eigen::VectorXd act(double phase, const Eigen::VectorXd& raw_obs) const;
};

Json fine_tune_layer_to_json(const FineTuneLayer& layer);
FineTuneLayer fine_tune_layer_from_json(const Json& j);

struct TransferConfig {
  TrackingWeights tracking;
  double style_weight = 0.2;
  bool use_task_reward = false;  // pure trajectory imitation by default
  skill::TaskRewardConfig task;
  int k = 2;  // low-level steps per latent decision
  std::vector<int> layer_hidden{64, 64};
  std::vector<int> value_hidden{64, 64};
  int envs = 8;
  int workers = 8;
  int horizon = 64;  // decisions per env per iteration
  int iterations = 50;
  rl::PpoConfig ppo;
  std::uint64_t seed = 1;
};

Json transfer_config_to_json(const TransferConfig& cfg);
TransferConfig transfer_config_from_json(const Json& j);

struct FineTuneResult {
  FineTuneLayer layer;
  std::vector<std::string> curve_header;
  std::vector<std::vector<double>> curves;
  long total_env_steps = 0;  // low-level steps
};

// PPO over the latent-curve layer only; the low-level controller and the
// behavior discriminators stay frozen. Per-step reward is trajectory
// tracking plus weighted behavior style. Deterministic given config + seed.
FineTuneResult fine_tune(const dail::BehaviorController& controller,
                         const std::vector<dail::PartDiscriminator>& discs,
                         const motion::MotionClip& reference,
                         const EmbodimentSpec& spec,
                         const sim::SceneConfig& scene,
                         const TransferConfig& cfg);

struct TransferEvalReport {
  double success_rate = 0.0;
  double mean_tracking = 0.0;
  double mean_style = 0.0;
  int episodes = 0;
};

TransferEvalReport eval_fine_tuned(const FineTuneLayer& layer,
                                   const dail::BehaviorController& controller,
                                   const std::vector<dail::PartDiscriminator>&
                                       discs,
                                   const motion::MotionClip& reference,
                                   const EmbodimentSpec& spec,
                                   const sim::SceneConfig& scene, int k,
                                   int episodes, std::uint64_t seed);

// Open-loop replay of the latents recorded in the reference clip's metadata
// (nearest decision index), the zero-budget comparison point.
TransferEvalReport latent_replay_baseline(
    const motion::MotionClip& reference,
    const dail::BehaviorController& controller,
    const std::vector<dail::PartDiscriminator>& discs,
    const EmbodimentSpec& spec, const sim::SceneConfig& scene, int k,
    int episodes, std::uint64_t seed);

}  // namespace xembod::transfer
