#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "xembod/json_io.hpp"
#include "xembod/rng.hpp"

namespace xembod::nn {

enum class Activation { identity, tanh_act, relu };

Activation activation_from_name(const std::string& name);
std::string activation_name(Activation a);

struct MlpSpec {
  std::vector<int> layer_sizes;  // input, hidden..., output
  Activation hidden = Activation::tanh_act;
  Activation output = Activation::identity;

  int input_dim() const { return layer_sizes.front(); }
  int output_dim() const { return layer_sizes.back(); }
  // number of affine layers
  int layer_count() const { return static_cast<int>(layer_sizes.size()) - 1; }
  int param_count() const;
  void validate() const;  // throws on bad shape
};

// weight/bias offsets of one affine layer inside the flat parameter vector
struct LayerView {
  int w_off = 0;
  int b_off = 0;
  int in = 0;
  int out = 0;
};
std::vector<LayerView> layer_views(const MlpSpec& spec);

// flat parameters plus Adam moments, all aligned
struct ParamStore {
  Eigen::VectorXd p;
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  static ParamStore zeros(int n);
  // Xavier-scaled normal weights, zero biases; last affine layer is further
  // scaled by last_layer_scale (small values keep fresh policies near zero)
  static ParamStore init(const MlpSpec& spec, Rng& rng,
                         double last_layer_scale = 1.0);
};

// batch is column-per-sample (dim x B)
struct ForwardCache {
  std::vector<Eigen::MatrixXd> acts;  // acts[0] = input, acts[l] post-activation
  std::vector<Eigen::MatrixXd> pre;   // pre[l] = affine output of layer l
};

Eigen::MatrixXd mlp_forward(const MlpSpec& spec, const Eigen::VectorXd& params,
                            const Eigen::MatrixXd& x,
                            ForwardCache* cache = nullptr);

// reverse mode: upstream = dL/dy (out x B); returns dL/dparams and optionally
// writes dL/dx
Eigen::VectorXd mlp_backward(const MlpSpec& spec, const Eigen::VectorXd& params,
                             const ForwardCache& cache,
                             const Eigen::MatrixXd& upstream,
                             Eigen::MatrixXd* input_grad = nullptr);

// For a scalar-output net: gradient w.r.t. params of
//   mean_b ‖d y_b / d x_b‖²
// by forward-over-reverse (tangent direction = the input gradient itself).
// Optionally reports the penalty value.
Eigen::VectorXd input_grad_penalty_grad(const MlpSpec& spec,
                                        const Eigen::VectorXd& params,
                                        const Eigen::MatrixXd& x,
                                        double* penalty_value = nullptr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

void adam_step(ParamStore& store, const Eigen::VectorXd& grad,
               const AdamConfig& cfg);

struct Latent {
  Eigen::VectorXd z;  // unit norm
  std::string part_id;
};

Eigen::VectorXd sample_hypersphere(int dim, Rng& rng);
Eigen::VectorXd project_hypersphere(const Eigen::VectorXd& v);

// versioned checkpoint of spec + parameters + optimizer state
Json net_to_json(const MlpSpec& spec, const ParamStore& store);
void net_from_json(const Json& j, MlpSpec* spec, ParamStore* store);

}  // namespace xembod::nn
