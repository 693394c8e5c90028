#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "xembod/nn.hpp"
#include "xembod/rng.hpp"

namespace xembod::rl {

// diagonal Gaussian policy: MLP trunk emits the mean, log stds are a separate
// learnable vector clamped to [-5, 2]
struct GaussianPolicy {
  nn::MlpSpec trunk;
  nn::ParamStore trunk_store;
  nn::ParamStore log_std;  // p holds the log stds

  static GaussianPolicy init(const nn::MlpSpec& trunk_spec, Rng& rng,
                             double init_log_std = -1.0);

  int obs_dim() const { return trunk.input_dim(); }
  int act_dim() const { return trunk.output_dim(); }

  Eigen::VectorXd mean(const Eigen::VectorXd& obs) const;
  Eigen::MatrixXd mean_batch(const Eigen::MatrixXd& obs) const;
  // draws a ~ N(mean, diag(exp(log_std)^2)); writes the log density
  Eigen::VectorXd sample(const Eigen::VectorXd& obs, Rng& rng,
                         double* log_prob) const;
  void clamp_log_std();
};

struct ValueNet {
  nn::MlpSpec spec;
  nn::ParamStore store;

  static ValueNet init(const nn::MlpSpec& spec, Rng& rng);
  double value(const Eigen::VectorXd& obs) const;
  Eigen::VectorXd value_batch(const Eigen::MatrixXd& obs) const;
};

double gaussian_log_prob(const Eigen::VectorXd& mean,
                         const Eigen::VectorXd& log_std,
                         const Eigen::VectorXd& action);

struct GaeResult {
  Eigen::VectorXd advantages;  // normalized: zero mean, unit variance
  Eigen::VectorXd returns;     // raw advantage + value
  Eigen::VectorXd raw;         // pre-normalization advantage
};

GaeResult gae_advantages(const Eigen::VectorXd& rewards,
                         const Eigen::VectorXd& values,
                         const std::vector<char>& dones, double gamma,
                         double lam, double bootstrap_value);

// fixed-horizon per-environment storage; advantages are attached per buffer
// (each env bootstraps its own tail) before buffers merge for the update
struct RolloutBuffer {
  Eigen::MatrixXd obs;  // obs_dim x T
  Eigen::MatrixXd act;  // act_dim x T
  Eigen::VectorXd logp;
  Eigen::VectorXd rew;
  Eigen::VectorXd val;
  std::vector<char> done;
  double bootstrap_value = 0.0;
  Eigen::VectorXd adv_raw;  // filled by attach_gae
  Eigen::VectorXd ret;
  int size = 0;

  void reset(int obs_dim, int act_dim, int horizon);
  void push(const Eigen::VectorXd& o, const Eigen::VectorXd& a, double lp,
            double r, double v, bool d);
  void attach_gae(double gamma, double lam);
  // concatenation in the given order; all buffers must have attached GAE
  static RolloutBuffer merge(const std::vector<RolloutBuffer>& parts);
};

struct PpoConfig {
  double clip_eps = 0.2;
  int epochs = 4;
  int minibatch = 64;
  double value_coef = 0.5;
  double entropy_coef = 0.0;
  double lr = 3e-4;
  double gamma = 0.99;
  double lam = 0.95;
};

struct PpoReport {
  double policy_loss = 0.0;
  double value_loss = 0.0;
  double entropy = 0.0;
  double clip_fraction = 0.0;
};

// clipped-surrogate update over minibatched epochs; the merged buffer must
// carry attached advantages. Advantages are normalized over the whole batch
// here. Shuffling draws from rng, so updates are deterministic per seed.
PpoReport ppo_update(GaussianPolicy& policy, ValueNet& value_net,
                     const RolloutBuffer& batch, const PpoConfig& cfg,
                     Rng& rng);

// per-env accumulation for observation normalization; merged into the shared
// stats between phases so worker count never changes results
struct NormAccum {
  Eigen::VectorXd sum;
  Eigen::VectorXd sumsq;
  long n = 0;

  void reset(int dim);
  void add(const Eigen::VectorXd& x);
};

class RunningNorm {
 public:
  RunningNorm() = default;
  explicit RunningNorm(int dim);

  Eigen::VectorXd apply(const Eigen::VectorXd& x) const;
  void merge(const NormAccum& acc);
  long count() const { return n_; }
  int dim() const { return static_cast<int>(mean_.size()); }

  Json to_json() const;
  static RunningNorm from_json(const Json& j);

 private:
  Eigen::VectorXd mean_;
  Eigen::VectorXd var_;
  Eigen::VectorXd sum_;
  Eigen::VectorXd sumsq_;
  long n_ = 0;
};

}  // namespace xembod::rl
