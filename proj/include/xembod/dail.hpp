#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "xembod/embodiment.hpp"
#include "xembod/json_io.hpp"
#include "xembod/kinematics.hpp"
#include "xembod/motion.hpp"
#include "xembod/nn.hpp"
#include "xembod/rl.hpp"
#include "xembod/sim.hpp"

namespace xembod::dail {

// One functional body part for decomposed imitation: a slice of joints plus
// the frames whose root-relative poses describe what the part is doing.
struct PartSpec {
  std::string part_id;
  std::vector<std::string> joint_names;
  std::vector<std::string> key_frames;  // link names, tracked in root frame
  bool include_root = false;            // adds root height + root-frame velocities
};

struct PartitionScheme {
  std::vector<PartSpec> parts;

  int part_count() const { return static_cast<int>(parts.size()); }
};

Json partition_to_json(const PartitionScheme& scheme);
PartitionScheme partition_from_json(const Json& j);
PartitionScheme load_partition(const std::string& path);
void save_partition(const std::string& path, const PartitionScheme& scheme);

// Returns human-readable problems; empty means the scheme partitions the
// embodiment's joints (disjoint, covering, all names known).
std::vector<std::string> validate_partition(const PartitionScheme& scheme,
                                            const EmbodimentSpec& spec);

// A pose snapshot that both sim states and motion frames lower into, so
// feature extraction has a single code path.
struct FrameView {
  Eigen::VectorXd q;
  Eigen::VectorXd q_dot;
  Transform root;
  Eigen::Vector3d root_lin_vel = Eigen::Vector3d::Zero();
  Eigen::Vector3d root_ang_vel = Eigen::Vector3d::Zero();
  kin::LinkPoses poses;
};

FrameView view_from_state(const EmbodimentSpec& spec, const TreeIndex& idx,
                          const sim::SimState& state);
FrameView view_from_frame(const EmbodimentSpec& spec, const TreeIndex& idx,
                          const motion::Frame& frame);

// Resolves a partition against an embodiment once, then slices per-part
// features out of frame views. Per-part features see only that part's
// joints and key frames (plus the shared root channel when requested).
class PartitionIndex {
 public:
  PartitionIndex(const EmbodimentSpec& spec, const PartitionScheme& scheme);

  int part_count() const { return static_cast<int>(entries_.size()); }
  const std::string& part_id(int part) const { return entries_[part].part_id; }
  int feature_dim(int part) const;
  // A transition is two consecutive views stacked: [features(a); features(b)].
  int transition_dim(int part) const { return 2 * feature_dim(part); }

  Eigen::VectorXd state_features(int part, const FrameView& view) const;
  Eigen::VectorXd transition_features(int part, const FrameView& before,
                                      const FrameView& after) const;

 private:
  struct Entry {
    std::string part_id;
    std::vector<int> joints;
    std::vector<int> key_links;
    bool include_root = false;
  };
  std::vector<Entry> entries_;
};

// Per-part demo transition matrices (one column per transition), built from
// clips resampled to the control rate so demo and policy transitions span
// the same time step.
std::vector<Eigen::MatrixXd> build_demo_transitions(
    const std::vector<motion::MotionClip>& clips, const EmbodimentSpec& spec,
    const PartitionIndex& parts, double control_fps);

// Least-squares discriminator score d mapped to a bounded reward: 1 at the
// real target, 0 at the fake target and beyond.
double style_reward(double d);

// Parts fuse multiplicatively, so every part has veto power over the styled
// behavior instead of averaging away a bad limb.
double combined_style_reward(const std::vector<double>& part_rewards);

// Per-part hypersphere projection of a stacked raw latent vector; a
// degenerate block falls back to a fixed axis so callers always get unit
// norms.
Eigen::VectorXd project_latents(const Eigen::VectorXd& raw, int parts,
                                int latent_dim);

struct PartDiscriminator {
  std::string part_id;
  nn::MlpSpec net;
  nn::ParamStore store;

  double eval(const Eigen::VectorXd& transition) const;
  Eigen::VectorXd eval_batch(const Eigen::MatrixXd& transitions) const;
};

struct PartEncoder {
  std::string part_id;
  nn::MlpSpec net;
  nn::ParamStore store;

  // Unnormalized network output; callers project onto the hypersphere.
  Eigen::VectorXd encode(const Eigen::VectorXd& transition) const;
};

PartDiscriminator make_discriminator(const std::string& part_id,
                                     int transition_dim,
                                     const std::vector<int>& hidden, Rng& rng);
PartEncoder make_encoder(const std::string& part_id, int transition_dim,
                         int latent_dim, const std::vector<int>& hidden,
                         Rng& rng);

struct DiscConfig {
  double lr = 1e-3;
  double grad_penalty = 5.0;  // weight on E_real[|grad_x D|^2]
  // training loops skip the update while batch accuracy is at or above this,
  // so the adversary never saturates and the reward keeps a usable slope
  double acc_gate = 0.95;
};

struct DiscReport {
  double loss = 0.0;
  double mean_real = 0.0;
  double mean_fake = 0.0;
  double accuracy = 0.0;      // sign-based, on the update batch pre-step
  double grad_norm_sq = 0.0;  // penalty term value
};

// One least-squares GAN step: real transitions pushed toward +1, policy
// transitions toward -1, plus a gradient penalty on real samples.
DiscReport discriminator_update(PartDiscriminator& disc,
                                const Eigen::MatrixXd& real,
                                const Eigen::MatrixXd& fake,
                                const DiscConfig& cfg);

// Fraction of samples on the correct side of zero.
double discriminator_accuracy(const PartDiscriminator& disc,
                              const Eigen::MatrixXd& real,
                              const Eigen::MatrixXd& fake);

// Alignment between the encoded transition (projected to the hypersphere)
// and the latent that conditioned the policy, scaled by alpha.
double encoder_reward(const PartEncoder& enc,
                      const Eigen::VectorXd& transition,
                      const Eigen::VectorXd& z, double alpha);

// One ascent step on mean alignment; returns the pre-step mean alignment.
double encoder_update(PartEncoder& enc, const Eigen::MatrixXd& transitions,
                      const Eigen::MatrixXd& zs, double lr);

// Latent-conditioned low-level policy plus the observation whitening it was
// trained with. Policy input is [normalized obs; z_1; ...; z_P].
struct BehaviorController {
  rl::GaussianPolicy policy;
  rl::RunningNorm obs_norm{0};
  PartitionScheme partition;
  std::string embodiment;
  int latent_dim = 16;

  int input_dim() const { return policy.obs_dim(); }
  Eigen::VectorXd policy_input(const Eigen::VectorXd& raw_obs,
                               const Eigen::VectorXd& z_all) const;
  // Deterministic action (policy mean).
  Eigen::VectorXd act(const Eigen::VectorXd& raw_obs,
                      const Eigen::VectorXd& z_all) const;
};

Json controller_to_json(const BehaviorController& ctrl);
BehaviorController controller_from_json(const Json& j);

Json discriminator_to_json(const PartDiscriminator& disc);
PartDiscriminator discriminator_from_json(const Json& j);
Json encoder_to_json(const PartEncoder& enc);
PartEncoder encoder_from_json(const Json& j);

struct PretrainConfig {
  int latent_dim = 16;
  std::vector<int> policy_hidden{64, 64};
  std::vector<int> value_hidden{64, 64};
  std::vector<int> disc_hidden{64, 64};
  std::vector<int> enc_hidden{64, 64};
  double p_switch = 0.02;   // per-step chance of resampling latents
  double alpha_enc = 0.2;   // encoder reward scale
  double enc_lr = 1e-3;
  int envs = 8;
  int workers = 8;
  int horizon = 128;        // steps per env per iteration
  int iterations = 300;
  int disc_batch = 256;
  int disc_updates = 2;     // per part per iteration
  rl::PpoConfig ppo;
  DiscConfig disc;
  std::uint64_t seed = 1;
};

Json pretrain_config_to_json(const PretrainConfig& cfg);
PretrainConfig pretrain_config_from_json(const Json& j);

struct PretrainResult {
  BehaviorController controller;
  std::vector<PartDiscriminator> discriminators;
  std::vector<PartEncoder> encoders;
  std::vector<std::string> curve_header;
  std::vector<std::vector<double>> curves;
  long total_env_steps = 0;
};

// Adversarial imitation pretraining: latent-conditioned PPO against per-part
// discriminators plus encoder alignment rewards. Deterministic for a fixed
// config and seed; the worker count never changes results.
PretrainResult pretrain_behavior(const std::vector<motion::MotionClip>& demos,
                                 const EmbodimentSpec& spec,
                                 const PartitionScheme& scheme,
                                 const sim::SceneConfig& scene,
                                 const PretrainConfig& cfg);

// Mean combined style reward of the deterministic controller over fresh
// rollouts, judged by the given discriminators.
double eval_style_reward(const BehaviorController& ctrl,
                         const std::vector<PartDiscriminator>& discs,
                         const EmbodimentSpec& spec,
                         const sim::SceneConfig& scene, int episodes,
                         std::uint64_t seed);

}  // namespace xembod::dail
