#include "xembod/rl.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace xembod::rl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {
constexpr double kLogStdMin = -5.0;
constexpr double kLogStdMax = 2.0;
constexpr double kLog2Pi = 1.8378770664093453;
}  // namespace

GaussianPolicy GaussianPolicy::init(const nn::MlpSpec& trunk_spec, Rng& rng,
                                    double init_log_std) {
  GaussianPolicy p;
  p.trunk = trunk_spec;
  p.trunk_store = nn::ParamStore::init(trunk_spec, rng, 0.01);
  p.log_std = nn::ParamStore::zeros(trunk_spec.output_dim());
  p.log_std.p.setConstant(init_log_std);
  p.clamp_log_std();
  return p;
}

void GaussianPolicy::clamp_log_std() {
  log_std.p = log_std.p.cwiseMax(kLogStdMin).cwiseMin(kLogStdMax);
}

Eigen::VectorXd GaussianPolicy::mean(const VectorXd& obs) const {
  return nn::mlp_forward(trunk, trunk_store.p, obs);
}

Eigen::MatrixXd GaussianPolicy::mean_batch(const MatrixXd& obs) const {
  return nn::mlp_forward(trunk, trunk_store.p, obs);
}

Eigen::VectorXd GaussianPolicy::sample(const VectorXd& obs, Rng& rng,
                                       double* log_prob) const {
  const VectorXd mu = mean(obs);
  const VectorXd sigma = log_std.p.array().exp();
  const VectorXd a = mu + sigma.cwiseProduct(rng.normal_vector(act_dim()));
  if (log_prob) *log_prob = gaussian_log_prob(mu, log_std.p, a);
  return a;
}

ValueNet ValueNet::init(const nn::MlpSpec& spec, Rng& rng) {
  if (spec.output_dim() != 1)
    throw std::invalid_argument("value net must have scalar output");
  ValueNet v;
  v.spec = spec;
  v.store = nn::ParamStore::init(spec, rng, 1.0);
  return v;
}

double ValueNet::value(const VectorXd& obs) const {
  return nn::mlp_forward(spec, store.p, obs)(0, 0);
}

Eigen::VectorXd ValueNet::value_batch(const MatrixXd& obs) const {
  return nn::mlp_forward(spec, store.p, obs).row(0).transpose();
}

double gaussian_log_prob(const VectorXd& mean, const VectorXd& log_std,
                         const VectorXd& action) {
  if (mean.size() != log_std.size() || mean.size() != action.size())
    throw std::invalid_argument("gaussian_log_prob: shape mismatch");
  const Eigen::ArrayXd z =
      (action - mean).array() / log_std.array().exp();
  return -0.5 * z.square().sum() - log_std.sum() -
         0.5 * kLog2Pi * static_cast<double>(mean.size());
}

GaeResult gae_advantages(const VectorXd& rewards, const VectorXd& values,
                         const std::vector<char>& dones, double gamma,
                         double lam, double bootstrap_value) {
  const int n = static_cast<int>(rewards.size());
  if (values.size() != n || static_cast<int>(dones.size()) != n)
    throw std::invalid_argument("gae_advantages: length mismatch");

  GaeResult out;
  out.raw = VectorXd::Zero(n);
  double gae = 0.0;
  for (int t = n - 1; t >= 0; --t) {
    const double next_v =
        dones[t] ? 0.0 : (t + 1 < n ? values[t + 1] : bootstrap_value);
    const double delta = rewards[t] + gamma * next_v - values[t];
    gae = delta + (dones[t] ? 0.0 : gamma * lam * gae);
    out.raw[t] = gae;
  }
  out.returns = out.raw + values;
  const double mean = out.raw.mean();
  const double var = (out.raw.array() - mean).square().mean();
  out.advantages = (out.raw.array() - mean) / (std::sqrt(var) + 1e-8);
  return out;
}

void RolloutBuffer::reset(int obs_dim, int act_dim, int horizon) {
  obs.resize(obs_dim, horizon);
  act.resize(act_dim, horizon);
  logp.resize(horizon);
  rew.resize(horizon);
  val.resize(horizon);
  done.assign(horizon, 0);
  adv_raw.resize(0);
  ret.resize(0);
  bootstrap_value = 0.0;
  size = 0;
}

void RolloutBuffer::push(const VectorXd& o, const VectorXd& a, double lp,
                         double r, double v, bool d) {
  if (size >= obs.cols()) throw std::runtime_error("rollout buffer overflow");
  if (!std::isfinite(r)) throw std::runtime_error("non-finite reward pushed");
  obs.col(size) = o;
  act.col(size) = a;
  logp[size] = lp;
  rew[size] = r;
  val[size] = v;
  done[size] = d ? 1 : 0;
  ++size;
}

void RolloutBuffer::attach_gae(double gamma, double lam) {
  const auto res = gae_advantages(rew.head(size), val.head(size),
                                  std::vector<char>(done.begin(),
                                                    done.begin() + size),
                                  gamma, lam, bootstrap_value);
  adv_raw = res.raw;
  ret = res.returns;
}

RolloutBuffer RolloutBuffer::merge(const std::vector<RolloutBuffer>& parts) {
  if (parts.empty()) throw std::invalid_argument("nothing to merge");
  int total = 0;
  for (const auto& p : parts) {
    if (p.adv_raw.size() != p.size)
      throw std::runtime_error("merge before attach_gae");
    total += p.size;
  }
  RolloutBuffer out;
  out.reset(static_cast<int>(parts[0].obs.rows()),
            static_cast<int>(parts[0].act.rows()), total);
  out.adv_raw.resize(total);
  out.ret.resize(total);
  int at = 0;
  for (const auto& p : parts) {
    out.obs.middleCols(at, p.size) = p.obs.leftCols(p.size);
    out.act.middleCols(at, p.size) = p.act.leftCols(p.size);
    out.logp.segment(at, p.size) = p.logp.head(p.size);
    out.rew.segment(at, p.size) = p.rew.head(p.size);
    out.val.segment(at, p.size) = p.val.head(p.size);
    std::copy(p.done.begin(), p.done.begin() + p.size, out.done.begin() + at);
    out.adv_raw.segment(at, p.size) = p.adv_raw;
    out.ret.segment(at, p.size) = p.ret;
    at += p.size;
  }
  out.size = total;
  return out;
}

PpoReport ppo_update(GaussianPolicy& policy, ValueNet& value_net,
                     const RolloutBuffer& batch, const PpoConfig& cfg,
                     Rng& rng) {
  const int n = batch.size;
  if (n == 0) throw std::invalid_argument("ppo_update: empty batch");
  if (batch.adv_raw.size() != n)
    throw std::invalid_argument("ppo_update: batch lacks advantages");

  // batch-level advantage normalization
  const double adv_mean = batch.adv_raw.mean();
  const double adv_var = (batch.adv_raw.array() - adv_mean).square().mean();
  const VectorXd adv =
      (batch.adv_raw.array() - adv_mean) / (std::sqrt(adv_var) + 1e-8);

  const int act_dim = policy.act_dim();
  nn::AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};

  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);

  PpoReport rep;
  int minibatches = 0;
  long clipped = 0;
  long seen = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    rng.shuffle(order.begin(), order.end());
    for (int start = 0; start < n; start += cfg.minibatch) {
      const int m = std::min(cfg.minibatch, n - start);
      MatrixXd mb_obs(batch.obs.rows(), m);
      MatrixXd mb_act(act_dim, m);
      VectorXd mb_logp(m), mb_adv(m), mb_ret(m);
      for (int i = 0; i < m; ++i) {
        const int k = order[start + i];
        mb_obs.col(i) = batch.obs.col(k);
        mb_act.col(i) = batch.act.col(k);
        mb_logp[i] = batch.logp[k];
        mb_adv[i] = adv[k];
        mb_ret[i] = batch.ret[k];
      }

      // policy pass
      nn::ForwardCache cache;
      const MatrixXd mu = nn::mlp_forward(policy.trunk, policy.trunk_store.p,
                                          mb_obs, &cache);
      const VectorXd sigma = policy.log_std.p.array().exp();
      const MatrixXd z =
          (mb_act - mu).array().colwise() / sigma.array();
      const VectorXd logp_new =
          (-0.5 * z.array().square().colwise().sum()).transpose().matrix() -
          VectorXd::Constant(m, policy.log_std.p.sum() +
                                    0.5 * kLog2Pi * act_dim);
      const VectorXd ratio = (logp_new - mb_logp).array().exp();

      double policy_loss = 0.0;
      VectorXd dlogp = VectorXd::Zero(m);  // dL/dlogp_new per sample
      for (int i = 0; i < m; ++i) {
        const double r = ratio[i];
        const double a = mb_adv[i];
        const double surr1 = r * a;
        const double surr2 = std::clamp(r, 1.0 - cfg.clip_eps,
                                        1.0 + cfg.clip_eps) * a;
        policy_loss -= std::min(surr1, surr2) / m;
        if (surr1 <= surr2) dlogp[i] = -r * a / m;
        if (std::abs(r - 1.0) > cfg.clip_eps) ++clipped;
        ++seen;
      }

      const double entropy =
          policy.log_std.p.sum() + 0.5 * (1.0 + kLog2Pi) * act_dim;

      // dlogp/dmu = z/sigma, dlogp/dlog_std = z^2 - 1
      MatrixXd upstream = z.array().colwise() / sigma.array();
      upstream = upstream * dlogp.asDiagonal();
      VectorXd g_logstd = (z.array().square() - 1.0).matrix() * dlogp;
      g_logstd -= VectorXd::Constant(act_dim, cfg.entropy_coef);

      const VectorXd g_trunk = nn::mlp_backward(
          policy.trunk, policy.trunk_store.p, cache, upstream);

      // value pass
      nn::ForwardCache vcache;
      const MatrixXd v_out =
          nn::mlp_forward(value_net.spec, value_net.store.p, mb_obs, &vcache);
      const VectorXd v = v_out.row(0).transpose();
      const VectorXd v_err = v - mb_ret;
      const double value_loss = v_err.array().square().mean();
      const MatrixXd v_upstream =
          (cfg.value_coef * 2.0 / m) * v_err.transpose();
      const VectorXd g_value = nn::mlp_backward(
          value_net.spec, value_net.store.p, vcache, v_upstream);

      const double total_loss = policy_loss +
                                cfg.value_coef * value_loss -
                                cfg.entropy_coef * entropy;
      if (!std::isfinite(total_loss))
        throw std::runtime_error("ppo_update: non-finite loss in minibatch " +
                                 std::to_string(minibatches));

      nn::adam_step(policy.trunk_store, g_trunk, adam);
      nn::adam_step(policy.log_std, g_logstd, adam);
      policy.clamp_log_std();
      nn::adam_step(value_net.store, g_value, adam);

      rep.policy_loss += policy_loss;
      rep.value_loss += value_loss;
      rep.entropy += entropy;
      ++minibatches;
    }
  }

  rep.policy_loss /= minibatches;
  rep.value_loss /= minibatches;
  rep.entropy /= minibatches;
  rep.clip_fraction =
      seen > 0 ? static_cast<double>(clipped) / static_cast<double>(seen) : 0.0;
  return rep;
}

void NormAccum::reset(int dim) {
  sum = VectorXd::Zero(dim);
  sumsq = VectorXd::Zero(dim);
  n = 0;
}

void NormAccum::add(const VectorXd& x) {
  if (sum.size() == 0) reset(static_cast<int>(x.size()));
  sum += x;
  sumsq += x.cwiseProduct(x);
  ++n;
}

RunningNorm::RunningNorm(int dim)
    : mean_(VectorXd::Zero(dim)),
      var_(VectorXd::Ones(dim)),
      sum_(VectorXd::Zero(dim)),
      sumsq_(VectorXd::Zero(dim)) {}

Eigen::VectorXd RunningNorm::apply(const VectorXd& x) const {
  if (n_ == 0) return x;
  VectorXd y = (x - mean_).array() / (var_.array() + 1e-8).sqrt();
  return y.cwiseMax(-10.0).cwiseMin(10.0);
}

void RunningNorm::merge(const NormAccum& acc) {
  if (acc.n == 0) return;
  if (acc.sum.size() != mean_.size())
    throw std::invalid_argument("running norm dimension mismatch");
  sum_ += acc.sum;
  sumsq_ += acc.sumsq;
  n_ += acc.n;
  mean_ = sum_ / static_cast<double>(n_);
  var_ = (sumsq_ / static_cast<double>(n_) - mean_.cwiseProduct(mean_))
             .cwiseMax(1e-8);
}

Json RunningNorm::to_json() const {
  Json j;
  j["n"] = n_;
  auto dump = [](const VectorXd& v) {
    Json a = Json::array();
    for (int i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
  };
  j["sum"] = dump(sum_);
  j["sumsq"] = dump(sumsq_);
  return j;
}

RunningNorm RunningNorm::from_json(const Json& j) {
  const auto sum = j.at("sum");
  RunningNorm out(static_cast<int>(sum.size()));
  NormAccum acc;
  acc.reset(static_cast<int>(sum.size()));
  for (size_t i = 0; i < sum.size(); ++i)
    acc.sum[static_cast<int>(i)] = sum[i].get<double>();
  const auto sumsq = j.at("sumsq");
  for (size_t i = 0; i < sumsq.size(); ++i)
    acc.sumsq[static_cast<int>(i)] = sumsq[i].get<double>();
  acc.n = j.at("n").get<long>();
  out.merge(acc);
  return out;
}

}  // namespace xembod::rl
