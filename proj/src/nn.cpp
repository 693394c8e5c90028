#include "xembod/nn.hpp"

#include <cmath>
#include <stdexcept>

namespace xembod::nn {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;

MatrixXd apply_act(Activation a, const MatrixXd& z) {
  switch (a) {
    case Activation::identity:
      return z;
    case Activation::tanh_act:
      return z.array().tanh().matrix();
    case Activation::relu:
      return z.cwiseMax(0.0);
  }
  throw std::logic_error("unknown activation");
}

// derivative in terms of the pre-activation z
MatrixXd act_deriv(Activation a, const MatrixXd& z) {
  switch (a) {
    case Activation::identity:
      return MatrixXd::Ones(z.rows(), z.cols());
    case Activation::tanh_act: {
      const MatrixXd t = z.array().tanh().matrix();
      return (1.0 - t.array().square()).matrix();
    }
    case Activation::relu:
      return (z.array() > 0.0).cast<double>().matrix();
  }
  throw std::logic_error("unknown activation");
}

// second derivative, needed by the double-backprop pass
MatrixXd act_second_deriv(Activation a, const MatrixXd& z) {
  switch (a) {
    case Activation::identity:
    case Activation::relu:
      return MatrixXd::Zero(z.rows(), z.cols());
    case Activation::tanh_act: {
      const MatrixXd t = z.array().tanh().matrix();
      return (-2.0 * t.array() * (1.0 - t.array().square())).matrix();
    }
  }
  throw std::logic_error("unknown activation");
}

}  // namespace

Activation activation_from_name(const std::string& name) {
  if (name == "identity") return Activation::identity;
  if (name == "tanh") return Activation::tanh_act;
  if (name == "relu") return Activation::relu;
  throw std::runtime_error("unknown activation '" + name + "'");
}

std::string activation_name(Activation a) {
  switch (a) {
    case Activation::identity:
      return "identity";
    case Activation::tanh_act:
      return "tanh";
    case Activation::relu:
      return "relu";
  }
  throw std::logic_error("unknown activation");
}

void MlpSpec::validate() const {
  if (layer_sizes.size() < 2)
    throw std::invalid_argument("mlp needs at least input and output layers");
  for (int s : layer_sizes)
    if (s < 1) throw std::invalid_argument("mlp layer sizes must be >= 1");
}

int MlpSpec::param_count() const {
  int n = 0;
  for (size_t l = 0; l + 1 < layer_sizes.size(); ++l)
    n += layer_sizes[l + 1] * (layer_sizes[l] + 1);
  return n;
}

std::vector<LayerView> layer_views(const MlpSpec& spec) {
  std::vector<LayerView> views;
  int off = 0;
  for (int l = 0; l < spec.layer_count(); ++l) {
    LayerView v;
    v.in = spec.layer_sizes[l];
    v.out = spec.layer_sizes[l + 1];
    v.w_off = off;
    v.b_off = off + v.out * v.in;
    off = v.b_off + v.out;
    views.push_back(v);
  }
  return views;
}

ParamStore ParamStore::zeros(int n) {
  ParamStore s;
  s.p = VectorXd::Zero(n);
  s.m = VectorXd::Zero(n);
  s.v = VectorXd::Zero(n);
  return s;
}

ParamStore ParamStore::init(const MlpSpec& spec, Rng& rng,
                            double last_layer_scale) {
  spec.validate();
  ParamStore s = zeros(spec.param_count());
  const auto views = layer_views(spec);
  for (size_t l = 0; l < views.size(); ++l) {
    const auto& v = views[l];
    const double scale = std::sqrt(1.0 / v.in) *
                         (l + 1 == views.size() ? last_layer_scale : 1.0);
    for (int i = 0; i < v.out * v.in; ++i)
      s.p[v.w_off + i] = scale * rng.normal();
    // biases stay zero
  }
  return s;
}

Eigen::MatrixXd mlp_forward(const MlpSpec& spec, const VectorXd& params,
                            const MatrixXd& x, ForwardCache* cache) {
  spec.validate();
  if (x.rows() != spec.input_dim())
    throw std::invalid_argument("mlp_forward: input has " +
                                std::to_string(x.rows()) + " rows, expected " +
                                std::to_string(spec.input_dim()));
  if (params.size() != spec.param_count())
    throw std::invalid_argument("mlp_forward: parameter vector size mismatch");

  const auto views = layer_views(spec);
  MatrixXd a = x;
  if (cache) {
    cache->acts.clear();
    cache->pre.clear();
    cache->acts.push_back(a);
  }
  for (int l = 0; l < spec.layer_count(); ++l) {
    const auto& v = views[l];
    const Eigen::Map<const MatrixXd> w(params.data() + v.w_off, v.out, v.in);
    const Eigen::Map<const VectorXd> b(params.data() + v.b_off, v.out);
    MatrixXd z = (w * a).colwise() + b;
    const Activation act =
        l + 1 == spec.layer_count() ? spec.output : spec.hidden;
    a = apply_act(act, z);
    if (cache) {
      cache->pre.push_back(std::move(z));
      cache->acts.push_back(a);
    }
  }
  if (!a.allFinite())
    throw std::runtime_error("mlp_forward: non-finite output");
  return a;
}

Eigen::VectorXd mlp_backward(const MlpSpec& spec, const VectorXd& params,
                             const ForwardCache& cache,
                             const MatrixXd& upstream,
                             MatrixXd* input_grad) {
  const int layers = spec.layer_count();
  if (static_cast<int>(cache.acts.size()) != layers + 1 ||
      static_cast<int>(cache.pre.size()) != layers)
    throw std::invalid_argument("mlp_backward: stale forward cache");
  if (upstream.rows() != spec.output_dim() ||
      upstream.cols() != cache.acts[0].cols())
    throw std::invalid_argument("mlp_backward: upstream gradient shape mismatch");

  const auto views = layer_views(spec);
  VectorXd grad = VectorXd::Zero(spec.param_count());

  MatrixXd delta = upstream;  // dL/da at the current layer output
  for (int l = layers - 1; l >= 0; --l) {
    const auto& v = views[l];
    const Activation act = l + 1 == layers ? spec.output : spec.hidden;
    // dL/dz
    const MatrixXd dz =
        delta.cwiseProduct(act_deriv(act, cache.pre[l]));
    Eigen::Map<MatrixXd>(grad.data() + v.w_off, v.out, v.in) =
        dz * cache.acts[l].transpose();
    Eigen::Map<VectorXd>(grad.data() + v.b_off, v.out) = dz.rowwise().sum();
    const Eigen::Map<const MatrixXd> w(params.data() + v.w_off, v.out, v.in);
    delta = w.transpose() * dz;
  }
  if (input_grad) *input_grad = delta;
  return grad;
}

Eigen::VectorXd input_grad_penalty_grad(const MlpSpec& spec,
                                        const VectorXd& params,
                                        const MatrixXd& x,
                                        double* penalty_value) {
  if (spec.output_dim() != 1)
    throw std::invalid_argument("gradient penalty needs a scalar-output net");
  const int B = static_cast<int>(x.cols());
  const int layers = spec.layer_count();
  const auto views = layer_views(spec);

  ForwardCache cache;
  mlp_forward(spec, params, x, &cache);

  // plain reverse pass to get g = dy/dx per sample
  MatrixXd gx;
  mlp_backward(spec, params, cache,
               MatrixXd::Ones(1, B), &gx);

  if (penalty_value)
    *penalty_value = gx.array().square().sum() / B;

  // Tangent direction v = gx, held fixed. mean_b ‖g_b‖² then has parameter
  // gradient (2/B) * d/deps [grad_params f(x + eps v)] at eps = 0; one
  // dual-number sweep through forward and backward computes it exactly.
  std::vector<MatrixXd> a_dot(layers + 1);
  std::vector<MatrixXd> z_dot(layers);
  a_dot[0] = gx;
  for (int l = 0; l < layers; ++l) {
    const auto& v = views[l];
    const Eigen::Map<const MatrixXd> w(params.data() + v.w_off, v.out, v.in);
    const Activation act = l + 1 == layers ? spec.output : spec.hidden;
    z_dot[l] = w * a_dot[l];
    a_dot[l + 1] = z_dot[l].cwiseProduct(act_deriv(act, cache.pre[l]));
  }

  MatrixXd delta = MatrixXd::Ones(1, B);
  MatrixXd delta_dot = MatrixXd::Zero(1, B);
  VectorXd grad_dot = VectorXd::Zero(spec.param_count());
  for (int l = layers - 1; l >= 0; --l) {
    const auto& v = views[l];
    const Activation act = l + 1 == layers ? spec.output : spec.hidden;
    const MatrixXd d1 = act_deriv(act, cache.pre[l]);
    const MatrixXd d2 = act_second_deriv(act, cache.pre[l]);
    const MatrixXd dz = delta.cwiseProduct(d1);
    const MatrixXd dz_dot = delta_dot.cwiseProduct(d1) +
                            delta.cwiseProduct(d2).cwiseProduct(z_dot[l]);
    Eigen::Map<MatrixXd>(grad_dot.data() + v.w_off, v.out, v.in) =
        dz_dot * cache.acts[l].transpose() + dz * a_dot[l].transpose();
    Eigen::Map<VectorXd>(grad_dot.data() + v.b_off, v.out) =
        dz_dot.rowwise().sum();
    const Eigen::Map<const MatrixXd> w(params.data() + v.w_off, v.out, v.in);
    delta = w.transpose() * dz;
    delta_dot = w.transpose() * dz_dot;
  }
  return (2.0 / B) * grad_dot;
}

void adam_step(ParamStore& store, const VectorXd& grad, const AdamConfig& cfg) {
  if (grad.size() != store.p.size())
    throw std::invalid_argument("adam_step: gradient size mismatch");
  if (!grad.allFinite())
    throw std::runtime_error("adam_step: non-finite gradient");
  store.step += 1;
  store.m = cfg.beta1 * store.m + (1.0 - cfg.beta1) * grad;
  store.v = cfg.beta2 * store.v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(store.step));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(store.step));
  const VectorXd m_hat = store.m / bc1;
  const VectorXd v_hat = store.v / bc2;
  store.p -= cfg.lr * (m_hat.array() / (v_hat.array().sqrt() + cfg.eps)).matrix();
}

Eigen::VectorXd sample_hypersphere(int dim, Rng& rng) {
  if (dim < 1) throw std::invalid_argument("hypersphere dim must be >= 1");
  VectorXd v = rng.normal_vector(dim);
  double n = v.norm();
  while (n < 1e-12) {  // astronomically unlikely, but stay total
    v = rng.normal_vector(dim);
    n = v.norm();
  }
  return v / n;
}

Eigen::VectorXd project_hypersphere(const VectorXd& v) {
  const double n = v.norm();
  if (n <= 1e-12) {
    // no direction to keep; settle on a fixed axis so callers stay on the
    // sphere instead of crashing on a freshly initialized policy
    VectorXd e = VectorXd::Zero(v.size());
    if (e.size() > 0) e[0] = 1.0;
    return e;
  }
  return v / n;
}

Json net_to_json(const MlpSpec& spec, const ParamStore& store) {
  Json j;
  j["format"] = "xembod-net-v1";
  j["layer_sizes"] = spec.layer_sizes;
  j["hidden_activation"] = activation_name(spec.hidden);
  j["output_activation"] = activation_name(spec.output);
  auto dump = [](const VectorXd& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  j["params"] = dump(store.p);
  j["adam_m"] = dump(store.m);
  j["adam_v"] = dump(store.v);
  j["adam_step"] = store.step;
  return j;
}

void net_from_json(const Json& j, MlpSpec* spec, ParamStore* store) {
  if (j.value("format", std::string{}) != "xembod-net-v1")
    throw std::runtime_error("unrecognized network checkpoint format");
  spec->layer_sizes = j.at("layer_sizes").get<std::vector<int>>();
  spec->hidden = activation_from_name(j.at("hidden_activation").get<std::string>());
  spec->output = activation_from_name(j.at("output_activation").get<std::string>());
  spec->validate();
  auto read = [](const Json& a) {
    VectorXd v(a.size());
    for (size_t i = 0; i < a.size(); ++i) v[static_cast<int>(i)] = a[i].get<double>();
    return v;
  };
  store->p = read(j.at("params"));
  store->m = read(j.at("adam_m"));
  store->v = read(j.at("adam_v"));
  store->step = j.at("adam_step").get<long>();
  if (store->p.size() != spec->param_count())
    throw std::runtime_error("checkpoint parameter count does not match spec");
}

}  // namespace xembod::nn
