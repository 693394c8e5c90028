#include "xembod/dail.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <stdexcept>

#include "xembod/parallel.hpp"

namespace xembod::dail {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

Json partition_to_json(const PartitionScheme& scheme) {
  Json j;
  j["parts"] = Json::array();
  for (const auto& p : scheme.parts) {
    Json pj;
    pj["part_id"] = p.part_id;
    pj["joints"] = p.joint_names;
    pj["key_frames"] = p.key_frames;
    pj["include_root"] = p.include_root;
    j["parts"].push_back(pj);
  }
  return j;
}

PartitionScheme partition_from_json(const Json& j) {
  PartitionScheme scheme;
  try {
    for (const auto& pj : j.at("parts")) {
      PartSpec p;
      p.part_id = pj.at("part_id").get<std::string>();
      p.joint_names = pj.at("joints").get<std::vector<std::string>>();
      if (pj.contains("key_frames"))
        p.key_frames = pj.at("key_frames").get<std::vector<std::string>>();
      p.include_root = pj.value("include_root", false);
      scheme.parts.push_back(std::move(p));
    }
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed partition: ") + e.what());
  }
  return scheme;
}

PartitionScheme load_partition(const std::string& path) {
  return partition_from_json(load_json_file(path));
}

void save_partition(const std::string& path, const PartitionScheme& scheme) {
  save_json_file(partition_to_json(scheme), path);
}

std::vector<std::string> validate_partition(const PartitionScheme& scheme,
                                            const EmbodimentSpec& spec) {
  std::vector<std::string> problems;
  if (scheme.parts.empty()) problems.push_back("partition has no parts");
  std::set<std::string> ids;
  std::set<std::string> seen_joints;
  for (const auto& p : scheme.parts) {
    if (p.part_id.empty()) problems.push_back("part with empty id");
    if (!ids.insert(p.part_id).second)
      problems.push_back("duplicate part id '" + p.part_id + "'");
    if (p.joint_names.empty())
      problems.push_back("part '" + p.part_id + "' has no joints");
    for (const auto& jn : p.joint_names) {
      if (spec.joint_index(jn) < 0)
        problems.push_back("part '" + p.part_id + "' names unknown joint '" +
                           jn + "'");
      else if (!seen_joints.insert(jn).second)
        problems.push_back("joint '" + jn + "' appears in more than one part");
    }
    for (const auto& kf : p.key_frames)
      if (spec.link_index(kf) < 0)
        problems.push_back("part '" + p.part_id + "' names unknown frame '" +
                           kf + "'");
  }
  for (const auto& jd : spec.joints)
    if (!seen_joints.count(jd.name))
      problems.push_back("joint '" + jd.name + "' not covered by any part");
  return problems;
}

FrameView view_from_state(const EmbodimentSpec& spec, const TreeIndex& idx,
                          const sim::SimState& state) {
  FrameView view;
  view.q = state.joints.q;
  view.q_dot = state.joints.q_dot;
  view.root = state.root;
  view.root_lin_vel = state.root_lin_vel;
  view.root_ang_vel = state.root_ang_vel;
  view.poses = kin::forward_kinematics(spec, idx, state.root, state.joints.q);
  return view;
}

FrameView view_from_frame(const EmbodimentSpec& spec, const TreeIndex& idx,
                          const motion::Frame& frame) {
  FrameView view;
  view.q = frame.q;
  view.q_dot = frame.q_dot;
  view.root = frame.root;
  view.root_lin_vel = frame.root_lin_vel;
  view.root_ang_vel = frame.root_ang_vel;
  view.poses = kin::forward_kinematics(spec, idx, frame.root, frame.q);
  return view;
}

PartitionIndex::PartitionIndex(const EmbodimentSpec& spec,
                               const PartitionScheme& scheme) {
  auto problems = validate_partition(scheme, spec);
  if (!problems.empty())
    throw std::invalid_argument("invalid partition: " + problems.front());
  for (const auto& p : scheme.parts) {
    Entry e;
    e.part_id = p.part_id;
    for (const auto& jn : p.joint_names) e.joints.push_back(spec.joint_index(jn));
    for (const auto& kf : p.key_frames) e.key_links.push_back(spec.link_index(kf));
    e.include_root = p.include_root;
    entries_.push_back(std::move(e));
  }
}

int PartitionIndex::feature_dim(int part) const {
  const Entry& e = entries_.at(part);
  return 2 * static_cast<int>(e.joints.size()) +
         7 * static_cast<int>(e.key_links.size()) + (e.include_root ? 7 : 0);
}

VectorXd PartitionIndex::state_features(int part, const FrameView& view) const {
  const Entry& e = entries_.at(part);
  VectorXd f(feature_dim(part));
  int at = 0;
  for (int j : e.joints) f[at++] = view.q[j];
  for (int j : e.joints) f[at++] = view.q_dot[j];
  const Transform root_inv = view.root.inverse();
  for (int link : e.key_links) {
    const Transform rel = root_inv * view.poses.at(link);
    f.segment<3>(at) = rel.position;
    at += 3;
    const Eigen::Quaterniond qc = quat_canonical(rel.orientation);
    f[at++] = qc.w();
    f[at++] = qc.x();
    f[at++] = qc.y();
    f[at++] = qc.z();
  }
  if (e.include_root) {
    const Eigen::Matrix3d rt = view.root.orientation.toRotationMatrix().transpose();
    f[at++] = view.root.position.z();
    f.segment<3>(at) = rt * view.root_lin_vel;
    at += 3;
    f.segment<3>(at) = rt * view.root_ang_vel;
    at += 3;
  }
  return f;
}

VectorXd PartitionIndex::transition_features(int part, const FrameView& before,
                                             const FrameView& after) const {
  const int d = feature_dim(part);
  VectorXd f(2 * d);
  f.head(d) = state_features(part, before);
  f.tail(d) = state_features(part, after);
  return f;
}

std::vector<MatrixXd> build_demo_transitions(
    const std::vector<motion::MotionClip>& clips, const EmbodimentSpec& spec,
    const PartitionIndex& parts, double control_fps) {
  if (clips.empty()) throw std::invalid_argument("no demo clips");
  TreeIndex idx(spec);
  const int P = parts.part_count();
  std::vector<std::vector<VectorXd>> cols(P);
  for (const auto& clip : clips) {
    if (clip.dof() != spec.joint_count())
      throw std::runtime_error("clip '" + clip.label + "' has " +
                               std::to_string(clip.dof()) + " joints, spec has " +
                               std::to_string(spec.joint_count()));
    motion::MotionClip local;
    const motion::MotionClip* use = &clip;
    if (std::abs(clip.fps - control_fps) > 1e-9) {
      local = motion::resample_clip(clip, control_fps);
      use = &local;
    }
    if (use->frame_count() < 2) continue;
    std::vector<FrameView> views;
    views.reserve(use->frames.size());
    for (const auto& fr : use->frames)
      views.push_back(view_from_frame(spec, idx, fr));
    for (size_t i = 0; i + 1 < views.size(); ++i)
      for (int p = 0; p < P; ++p)
        cols[p].push_back(parts.transition_features(p, views[i], views[i + 1]));
  }
  std::vector<MatrixXd> out(P);
  for (int p = 0; p < P; ++p) {
    if (cols[p].empty())
      throw std::runtime_error(
          "no demo transitions: clips need at least 2 frames at the control "
          "rate");
    out[p].resize(parts.transition_dim(p), static_cast<int>(cols[p].size()));
    for (int c = 0; c < out[p].cols(); ++c) out[p].col(c) = cols[p][c];
  }
  return out;
}

double style_reward(double d) {
  const double v = 1.0 - 0.25 * (d - 1.0) * (d - 1.0);
  return std::max(0.0, v);
}

double combined_style_reward(const std::vector<double>& part_rewards) {
  if (part_rewards.empty()) return 0.0;
  double r = 1.0;
  for (double p : part_rewards) r *= p;
  return r;
}

VectorXd project_latents(const VectorXd& raw, int parts, int latent_dim) {
  if (raw.size() != static_cast<long>(parts) * latent_dim)
    throw std::invalid_argument("latent vector dimension mismatch");
  VectorXd z(raw.size());
  for (int p = 0; p < parts; ++p) {
    const VectorXd block = raw.segment(p * latent_dim, latent_dim);
    const double n = block.norm();
    if (n <= 1e-12) {
      z.segment(p * latent_dim, latent_dim).setZero();
      z[p * latent_dim] = 1.0;
    } else {
      z.segment(p * latent_dim, latent_dim) = block / n;
    }
  }
  return z;
}

double PartDiscriminator::eval(const VectorXd& transition) const {
  return nn::mlp_forward(net, store.p, transition)(0, 0);
}

VectorXd PartDiscriminator::eval_batch(const MatrixXd& transitions) const {
  return nn::mlp_forward(net, store.p, transitions).transpose();
}

VectorXd PartEncoder::encode(const VectorXd& transition) const {
  return nn::mlp_forward(net, store.p, transition).col(0);
}

PartDiscriminator make_discriminator(const std::string& part_id,
                                     int transition_dim,
                                     const std::vector<int>& hidden, Rng& rng) {
  PartDiscriminator disc;
  disc.part_id = part_id;
  disc.net.layer_sizes.push_back(transition_dim);
  for (int h : hidden) disc.net.layer_sizes.push_back(h);
  disc.net.layer_sizes.push_back(1);
  disc.net.hidden = nn::Activation::tanh_act;
  disc.net.output = nn::Activation::identity;
  disc.net.validate();
  disc.store = nn::ParamStore::init(disc.net, rng);
  return disc;
}

PartEncoder make_encoder(const std::string& part_id, int transition_dim,
                         int latent_dim, const std::vector<int>& hidden,
                         Rng& rng) {
  if (latent_dim <= 0) throw std::invalid_argument("latent_dim must be positive");
  PartEncoder enc;
  enc.part_id = part_id;
  enc.net.layer_sizes.push_back(transition_dim);
  for (int h : hidden) enc.net.layer_sizes.push_back(h);
  enc.net.layer_sizes.push_back(latent_dim);
  enc.net.hidden = nn::Activation::tanh_act;
  enc.net.output = nn::Activation::identity;
  enc.net.validate();
  enc.store = nn::ParamStore::init(enc.net, rng);
  return enc;
}

DiscReport discriminator_update(PartDiscriminator& disc, const MatrixXd& real,
                                const MatrixXd& fake, const DiscConfig& cfg) {
  if (real.cols() == 0 || fake.cols() == 0)
    throw std::invalid_argument("discriminator update needs real and fake samples");
  if (real.rows() != disc.net.input_dim() || fake.rows() != disc.net.input_dim())
    throw std::invalid_argument("discriminator input dimension mismatch");
  const double br = static_cast<double>(real.cols());
  const double bf = static_cast<double>(fake.cols());

  nn::ForwardCache real_cache, fake_cache;
  const MatrixXd d_real = nn::mlp_forward(disc.net, disc.store.p, real, &real_cache);
  const MatrixXd d_fake = nn::mlp_forward(disc.net, disc.store.p, fake, &fake_cache);

  // least-squares targets: +1 for demo transitions, -1 for policy ones
  const MatrixXd up_real = 2.0 * (d_real.array() - 1.0) / br;
  const MatrixXd up_fake = 2.0 * (d_fake.array() + 1.0) / bf;
  VectorXd grad = nn::mlp_backward(disc.net, disc.store.p, real_cache, up_real);
  grad += nn::mlp_backward(disc.net, disc.store.p, fake_cache, up_fake);

  double penalty = 0.0;
  if (cfg.grad_penalty != 0.0) {
    grad += cfg.grad_penalty *
            nn::input_grad_penalty_grad(disc.net, disc.store.p, real, &penalty);
  }

  DiscReport report;
  report.mean_real = d_real.mean();
  report.mean_fake = d_fake.mean();
  report.grad_norm_sq = penalty;
  report.loss = (d_real.array() - 1.0).square().mean() +
                (d_fake.array() + 1.0).square().mean() +
                cfg.grad_penalty * penalty;
  int correct = 0;
  for (int c = 0; c < d_real.cols(); ++c)
    if (d_real(0, c) > 0.0) ++correct;
  for (int c = 0; c < d_fake.cols(); ++c)
    if (d_fake(0, c) <= 0.0) ++correct;
  report.accuracy = correct / (br + bf);

  nn::AdamConfig adam;
  adam.lr = cfg.lr;
  nn::adam_step(disc.store, grad, adam);
  return report;
}

double discriminator_accuracy(const PartDiscriminator& disc,
                              const MatrixXd& real, const MatrixXd& fake) {
  if (real.cols() == 0 && fake.cols() == 0) return 0.0;
  const VectorXd d_real = disc.eval_batch(real);
  const VectorXd d_fake = disc.eval_batch(fake);
  int correct = 0;
  for (int i = 0; i < d_real.size(); ++i)
    if (d_real[i] > 0.0) ++correct;
  for (int i = 0; i < d_fake.size(); ++i)
    if (d_fake[i] <= 0.0) ++correct;
  return static_cast<double>(correct) /
         static_cast<double>(real.cols() + fake.cols());
}

double encoder_reward(const PartEncoder& enc, const VectorXd& transition,
                      const VectorXd& z, double alpha) {
  const VectorXd f = enc.encode(transition);
  const double n = f.norm();
  if (n <= 1e-12) return 0.0;
  return alpha * (f / n).dot(z);
}

double encoder_update(PartEncoder& enc, const MatrixXd& transitions,
                      const MatrixXd& zs, double lr) {
  const int B = static_cast<int>(transitions.cols());
  if (B == 0) throw std::invalid_argument("encoder update needs samples");
  if (zs.cols() != B || zs.rows() != enc.net.output_dim())
    throw std::invalid_argument("encoder latent batch mismatch");
  nn::ForwardCache cache;
  const MatrixXd f = nn::mlp_forward(enc.net, enc.store.p, transitions, &cache);
  MatrixXd upstream = MatrixXd::Zero(f.rows(), B);
  double align = 0.0;
  for (int b = 0; b < B; ++b) {
    const double n = f.col(b).norm();
    if (n <= 1e-12) continue;
    const VectorXd u = f.col(b) / n;
    const double a = u.dot(zs.col(b));
    align += a;
    // descent on -alignment; d(u.z)/df = (z - (u.z) u) / |f|
    upstream.col(b) = -(zs.col(b) - a * u) / (n * B);
  }
  const VectorXd grad = nn::mlp_backward(enc.net, enc.store.p, cache, upstream);
  nn::AdamConfig adam;
  adam.lr = lr;
  nn::adam_step(enc.store, grad, adam);
  return align / B;
}

VectorXd BehaviorController::policy_input(const VectorXd& raw_obs,
                                          const VectorXd& z_all) const {
  if (raw_obs.size() != obs_norm.dim())
    throw std::invalid_argument("controller observation dimension mismatch");
  if (raw_obs.size() + z_all.size() != policy.obs_dim())
    throw std::invalid_argument("controller latent dimension mismatch");
  VectorXd in(policy.obs_dim());
  in.head(raw_obs.size()) = obs_norm.apply(raw_obs);
  in.tail(z_all.size()) = z_all;
  return in;
}

VectorXd BehaviorController::act(const VectorXd& raw_obs,
                                 const VectorXd& z_all) const {
  return policy.mean(policy_input(raw_obs, z_all));
}

namespace {

Json param_store_to_json(const nn::ParamStore& store) {
  Json j;
  j["p"] = std::vector<double>(store.p.data(), store.p.data() + store.p.size());
  j["m"] = std::vector<double>(store.m.data(), store.m.data() + store.m.size());
  j["v"] = std::vector<double>(store.v.data(), store.v.data() + store.v.size());
  j["step"] = store.step;
  return j;
}

nn::ParamStore param_store_from_json(const Json& j) {
  auto read = [&](const char* key) {
    auto vals = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(vals.data(),
                                      static_cast<long>(vals.size()))
        .eval();
  };
  nn::ParamStore store;
  store.p = read("p");
  store.m = read("m");
  store.v = read("v");
  store.step = j.at("step").get<long>();
  return store;
}

}  // namespace

Json controller_to_json(const BehaviorController& ctrl) {
  Json j;
  j["format"] = "xembod-controller-v1";
  j["embodiment"] = ctrl.embodiment;
  j["latent_dim"] = ctrl.latent_dim;
  j["partition"] = partition_to_json(ctrl.partition);
  j["trunk"] = nn::net_to_json(ctrl.policy.trunk, ctrl.policy.trunk_store);
  j["log_std"] = param_store_to_json(ctrl.policy.log_std);
  j["obs_norm"] = ctrl.obs_norm.to_json();
  return j;
}

BehaviorController controller_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "xembod-controller-v1")
      throw std::runtime_error("unknown controller format");
    BehaviorController ctrl;
    ctrl.embodiment = j.at("embodiment").get<std::string>();
    ctrl.latent_dim = j.at("latent_dim").get<int>();
    ctrl.partition = partition_from_json(j.at("partition"));
    nn::net_from_json(j.at("trunk"), &ctrl.policy.trunk,
                      &ctrl.policy.trunk_store);
    ctrl.policy.log_std = param_store_from_json(j.at("log_std"));
    ctrl.obs_norm = rl::RunningNorm::from_json(j.at("obs_norm"));
    return ctrl;
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed controller checkpoint: ") +
                             e.what());
  }
}

Json discriminator_to_json(const PartDiscriminator& disc) {
  Json j;
  j["format"] = "xembod-disc-v1";
  j["part_id"] = disc.part_id;
  j["net"] = nn::net_to_json(disc.net, disc.store);
  return j;
}

PartDiscriminator discriminator_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "xembod-disc-v1")
      throw std::runtime_error("unknown discriminator format");
    PartDiscriminator disc;
    disc.part_id = j.at("part_id").get<std::string>();
    nn::net_from_json(j.at("net"), &disc.net, &disc.store);
    return disc;
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed discriminator checkpoint: ") +
                             e.what());
  }
}

Json encoder_to_json(const PartEncoder& enc) {
  Json j;
  j["format"] = "xembod-enc-v1";
  j["part_id"] = enc.part_id;
  j["net"] = nn::net_to_json(enc.net, enc.store);
  return j;
}

PartEncoder encoder_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "xembod-enc-v1")
      throw std::runtime_error("unknown encoder format");
    PartEncoder enc;
    enc.part_id = j.at("part_id").get<std::string>();
    nn::net_from_json(j.at("net"), &enc.net, &enc.store);
    return enc;
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed encoder checkpoint: ") +
                             e.what());
  }
}

Json pretrain_config_to_json(const PretrainConfig& cfg) {
  Json j;
  j["latent_dim"] = cfg.latent_dim;
  j["policy_hidden"] = cfg.policy_hidden;
  j["value_hidden"] = cfg.value_hidden;
  j["disc_hidden"] = cfg.disc_hidden;
  j["enc_hidden"] = cfg.enc_hidden;
  j["p_switch"] = cfg.p_switch;
  j["alpha_enc"] = cfg.alpha_enc;
  j["enc_lr"] = cfg.enc_lr;
  j["envs"] = cfg.envs;
  j["workers"] = cfg.workers;
  j["horizon"] = cfg.horizon;
  j["iterations"] = cfg.iterations;
  j["disc_batch"] = cfg.disc_batch;
  j["disc_updates"] = cfg.disc_updates;
  j["ppo"] = {{"clip_eps", cfg.ppo.clip_eps},
              {"epochs", cfg.ppo.epochs},
              {"minibatch", cfg.ppo.minibatch},
              {"value_coef", cfg.ppo.value_coef},
              {"entropy_coef", cfg.ppo.entropy_coef},
              {"lr", cfg.ppo.lr},
              {"gamma", cfg.ppo.gamma},
              {"lam", cfg.ppo.lam}};
  j["disc"] = {{"lr", cfg.disc.lr},
               {"grad_penalty", cfg.disc.grad_penalty},
               {"acc_gate", cfg.disc.acc_gate}};
  j["seed"] = cfg.seed;
  return j;
}

PretrainConfig pretrain_config_from_json(const Json& j) {
  PretrainConfig cfg;
  try {
    cfg.latent_dim = j.value("latent_dim", cfg.latent_dim);
    cfg.policy_hidden = j.value("policy_hidden", cfg.policy_hidden);
    cfg.value_hidden = j.value("value_hidden", cfg.value_hidden);
    cfg.disc_hidden = j.value("disc_hidden", cfg.disc_hidden);
    cfg.enc_hidden = j.value("enc_hidden", cfg.enc_hidden);
    cfg.p_switch = j.value("p_switch", cfg.p_switch);
    cfg.alpha_enc = j.value("alpha_enc", cfg.alpha_enc);
    cfg.enc_lr = j.value("enc_lr", cfg.enc_lr);
    cfg.envs = j.value("envs", cfg.envs);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.iterations = j.value("iterations", cfg.iterations);
    cfg.disc_batch = j.value("disc_batch", cfg.disc_batch);
    cfg.disc_updates = j.value("disc_updates", cfg.disc_updates);
    if (j.contains("ppo")) {
      const Json& p = j.at("ppo");
      cfg.ppo.clip_eps = p.value("clip_eps", cfg.ppo.clip_eps);
      cfg.ppo.epochs = p.value("epochs", cfg.ppo.epochs);
      cfg.ppo.minibatch = p.value("minibatch", cfg.ppo.minibatch);
      cfg.ppo.value_coef = p.value("value_coef", cfg.ppo.value_coef);
      cfg.ppo.entropy_coef = p.value("entropy_coef", cfg.ppo.entropy_coef);
      cfg.ppo.lr = p.value("lr", cfg.ppo.lr);
      cfg.ppo.gamma = p.value("gamma", cfg.ppo.gamma);
      cfg.ppo.lam = p.value("lam", cfg.ppo.lam);
    }
    if (j.contains("disc")) {
      const Json& d = j.at("disc");
      cfg.disc.lr = d.value("lr", cfg.disc.lr);
      cfg.disc.grad_penalty = d.value("grad_penalty", cfg.disc.grad_penalty);
      cfg.disc.acc_gate = d.value("acc_gate", cfg.disc.acc_gate);
    }
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed pretrain config: ") +
                             e.what());
  }
  return cfg;
}

namespace {

// everything one env collects in one iteration
struct EnvTrace {
  rl::RolloutBuffer buffer;
  std::vector<MatrixXd> feats;  // per part, transition_dim x horizon
  MatrixXd zs;                  // (P * latent_dim) x horizon
  rl::NormAccum accum;
  std::vector<double> style_sum;
  double combined_sum = 0.0;
};

// persistent per-env rollout state between iterations
struct EnvSlot {
  sim::Environment env;
  Rng action_rng;
  Rng latent_rng;
  VectorXd z_all;
  bool episode_start = true;

  EnvSlot(const EmbodimentSpec& spec, const sim::SceneConfig& scene,
          std::uint64_t seed, int e)
      : env(spec, scene, seed, static_cast<std::uint64_t>(e)),
        action_rng(seed, 100 + static_cast<std::uint64_t>(e)),
        latent_rng(seed, 300 + static_cast<std::uint64_t>(e)) {}

  void resample_latents(int parts, int latent_dim) {
    for (int p = 0; p < parts; ++p)
      z_all.segment(p * latent_dim, latent_dim) =
          nn::sample_hypersphere(latent_dim, latent_rng);
  }
};

}  // namespace

PretrainResult pretrain_behavior(const std::vector<motion::MotionClip>& demos,
                                 const EmbodimentSpec& spec,
                                 const PartitionScheme& scheme,
                                 const sim::SceneConfig& scene,
                                 const PretrainConfig& cfg) {
  if (cfg.envs <= 0 || cfg.horizon <= 0)
    throw std::invalid_argument("pretraining needs positive envs and horizon");
  TreeIndex idx(spec);
  PartitionIndex parts(spec, scheme);
  const int P = parts.part_count();
  const int ld = cfg.latent_dim;
  const double control_fps = 1.0 / scene.params.dt;
  const auto demo = build_demo_transitions(demos, spec, parts, control_fps);

  std::vector<EnvSlot> slots;
  slots.reserve(cfg.envs);
  for (int e = 0; e < cfg.envs; ++e) {
    slots.emplace_back(spec, scene, cfg.seed, e);
    slots.back().z_all = VectorXd::Zero(P * ld);
  }
  const int obs_dim = slots[0].env.obs_dim();
  const int act_dim = slots[0].env.action_dim();
  const int in_dim = obs_dim + P * ld;

  Rng init_rng(cfg.seed, 1);
  nn::MlpSpec trunk_spec;
  trunk_spec.layer_sizes.push_back(in_dim);
  for (int h : cfg.policy_hidden) trunk_spec.layer_sizes.push_back(h);
  trunk_spec.layer_sizes.push_back(act_dim);

  PretrainResult result;
  result.controller.policy = rl::GaussianPolicy::init(trunk_spec, init_rng);
  result.controller.obs_norm = rl::RunningNorm(obs_dim);
  result.controller.partition = scheme;
  result.controller.embodiment = spec.name;
  result.controller.latent_dim = ld;

  nn::MlpSpec value_spec;
  value_spec.layer_sizes.push_back(in_dim);
  for (int h : cfg.value_hidden) value_spec.layer_sizes.push_back(h);
  value_spec.layer_sizes.push_back(1);
  rl::ValueNet value_net = rl::ValueNet::init(value_spec, init_rng);

  for (int p = 0; p < P; ++p) {
    result.discriminators.push_back(make_discriminator(
        parts.part_id(p), parts.transition_dim(p), cfg.disc_hidden, init_rng));
    result.encoders.push_back(make_encoder(parts.part_id(p),
                                           parts.transition_dim(p), ld,
                                           cfg.enc_hidden, init_rng));
  }

  Rng ppo_rng(cfg.seed, 2);
  Rng disc_rng(cfg.seed, 3);

  result.curve_header = {"env_steps", "combined_style"};
  for (int p = 0; p < P; ++p)
    result.curve_header.push_back("style_" + parts.part_id(p));
  for (int p = 0; p < P; ++p)
    result.curve_header.push_back("disc_acc_" + parts.part_id(p));
  result.curve_header.push_back("mean_reward");
  result.curve_header.push_back("policy_loss");
  result.curve_header.push_back("value_loss");
  result.curve_header.push_back("entropy");

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<EnvTrace> traces(cfg.envs);
    // snapshots are read-only during collection; updates land afterwards
    const rl::GaussianPolicy& policy = result.controller.policy;
    const rl::RunningNorm& norm = result.controller.obs_norm;
    const auto& discs = result.discriminators;
    const auto& encs = result.encoders;

    parallel_for(cfg.envs, cfg.workers, [&](int e) {
      EnvSlot& slot = slots[e];
      EnvTrace& trace = traces[e];
      trace.buffer.reset(in_dim, act_dim, cfg.horizon);
      trace.feats.resize(P);
      for (int p = 0; p < P; ++p)
        trace.feats[p].resize(parts.transition_dim(p), cfg.horizon);
      trace.zs.resize(P * ld, cfg.horizon);
      trace.accum.reset(obs_dim);
      trace.style_sum.assign(P, 0.0);

      FrameView view = view_from_state(spec, idx, slot.env.state());
      VectorXd raw_obs = slot.env.observation();
      bool done = false;
      for (int t = 0; t < cfg.horizon; ++t) {
        if (slot.episode_start) {
          slot.resample_latents(P, ld);
          slot.episode_start = false;
        } else if (slot.latent_rng.uniform() < cfg.p_switch) {
          slot.resample_latents(P, ld);
        }
        trace.accum.add(raw_obs);
        VectorXd input(in_dim);
        input.head(obs_dim) = norm.apply(raw_obs);
        input.tail(P * ld) = slot.z_all;
        double logp = 0.0;
        const VectorXd action = policy.sample(input, slot.action_rng, &logp);
        const double value = value_net.value(input);

        slot.env.step(action);
        FrameView next = view_from_state(spec, idx, slot.env.state());

        std::vector<double> part_style(P);
        double reward = 0.0;
        for (int p = 0; p < P; ++p) {
          const VectorXd feat = parts.transition_features(p, view, next);
          trace.feats[p].col(t) = feat;
          part_style[p] = style_reward(discs[p].eval(feat));
          trace.style_sum[p] += part_style[p];
          reward += encoder_reward(encs[p], feat, slot.z_all.segment(p * ld, ld),
                                   cfg.alpha_enc);
        }
        const double combined = combined_style_reward(part_style);
        trace.combined_sum += combined;
        reward += combined;
        trace.zs.col(t) = slot.z_all;

        done = slot.env.horizon_reached();
        trace.buffer.push(input, action, logp, reward, value, done);
        if (done) {
          slot.env.reset();
          slot.episode_start = true;
          view = view_from_state(spec, idx, slot.env.state());
          raw_obs = slot.env.observation();
        } else {
          view = std::move(next);
          raw_obs = slot.env.observation();
        }
      }
      if (!done) {
        VectorXd input(in_dim);
        input.head(obs_dim) = norm.apply(raw_obs);
        input.tail(P * ld) = slot.z_all;
        trace.buffer.bootstrap_value = value_net.value(input);
      }
      trace.buffer.attach_gae(cfg.ppo.gamma, cfg.ppo.lam);
    });

    // merge normalizer stats in env order so worker count is irrelevant
    for (const auto& trace : traces)
      result.controller.obs_norm.merge(trace.accum);

    // pool policy transitions env-major for the adversarial updates
    std::vector<MatrixXd> pool(P);
    MatrixXd z_pool(P * ld, cfg.envs * cfg.horizon);
    for (int p = 0; p < P; ++p)
      pool[p].resize(parts.transition_dim(p), cfg.envs * cfg.horizon);
    for (int e = 0; e < cfg.envs; ++e) {
      for (int p = 0; p < P; ++p)
        pool[p].middleCols(e * cfg.horizon, cfg.horizon) = traces[e].feats[p];
      z_pool.middleCols(e * cfg.horizon, cfg.horizon) = traces[e].zs;
    }

    std::vector<double> disc_acc(P, 0.0);
    for (int u = 0; u < cfg.disc_updates; ++u) {
      for (int p = 0; p < P; ++p) {
        const int nb = std::min<int>(cfg.disc_batch,
                                     static_cast<int>(pool[p].cols()));
        MatrixXd real(parts.transition_dim(p), nb);
        MatrixXd fake(parts.transition_dim(p), nb);
        for (int c = 0; c < nb; ++c) {
          real.col(c) = demo[p].col(
              disc_rng.uniform_int(static_cast<int>(demo[p].cols())));
          fake.col(c) = pool[p].col(
              disc_rng.uniform_int(static_cast<int>(pool[p].cols())));
        }
        // stop sharpening once the batch is separated; a saturated critic
        // scores every policy sample in the flat tail of the reward map
        const double acc =
            discriminator_accuracy(result.discriminators[p], real, fake);
        if (acc < cfg.disc.acc_gate) {
          const DiscReport rep = discriminator_update(result.discriminators[p],
                                                      real, fake, cfg.disc);
          disc_acc[p] = rep.accuracy;
        } else {
          disc_acc[p] = acc;
        }
      }
    }

    for (int p = 0; p < P; ++p)
      encoder_update(result.encoders[p], pool[p],
                     z_pool.middleRows(p * ld, ld), cfg.enc_lr);

    std::vector<rl::RolloutBuffer> buffers;
    buffers.reserve(cfg.envs);
    double reward_sum = 0.0;
    for (auto& trace : traces) {
      reward_sum += trace.buffer.rew.sum();
      buffers.push_back(std::move(trace.buffer));
    }
    const rl::RolloutBuffer merged = rl::RolloutBuffer::merge(buffers);
    const rl::PpoReport ppo =
        rl::ppo_update(result.controller.policy, value_net, merged, cfg.ppo,
                       ppo_rng);

    result.total_env_steps += static_cast<long>(cfg.envs) * cfg.horizon;
    const double steps = static_cast<double>(cfg.envs) * cfg.horizon;
    std::vector<double> row;
    row.push_back(static_cast<double>(result.total_env_steps));
    double combined_mean = 0.0;
    for (const auto& trace : traces) combined_mean += trace.combined_sum;
    row.push_back(combined_mean / steps);
    for (int p = 0; p < P; ++p) {
      double s = 0.0;
      for (const auto& trace : traces) s += trace.style_sum[p];
      row.push_back(s / steps);
    }
    for (int p = 0; p < P; ++p) row.push_back(disc_acc[p]);
    row.push_back(reward_sum / steps);
    row.push_back(ppo.policy_loss);
    row.push_back(ppo.value_loss);
    row.push_back(ppo.entropy);
    result.curves.push_back(std::move(row));
  }
  return result;
}

double eval_style_reward(const BehaviorController& ctrl,
                         const std::vector<PartDiscriminator>& discs,
                         const EmbodimentSpec& spec,
                         const sim::SceneConfig& scene, int episodes,
                         std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("need at least one episode");
  TreeIndex idx(spec);
  PartitionIndex parts(spec, ctrl.partition);
  const int P = parts.part_count();
  if (static_cast<int>(discs.size()) != P)
    throw std::invalid_argument("discriminator count does not match partition");
  const int ld = ctrl.latent_dim;
  double total = 0.0;
  long steps = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    sim::Environment env(spec, scene, seed, 9000 + static_cast<std::uint64_t>(ep));
    Rng latent_rng(seed, 9100 + static_cast<std::uint64_t>(ep));
    VectorXd z_all(P * ld);
    for (int p = 0; p < P; ++p)
      z_all.segment(p * ld, ld) = nn::sample_hypersphere(ld, latent_rng);
    FrameView view = view_from_state(spec, idx, env.state());
    while (!env.horizon_reached()) {
      const VectorXd action = ctrl.act(env.observation(), z_all);
      env.step(action);
      FrameView next = view_from_state(spec, idx, env.state());
      std::vector<double> part_style(P);
      for (int p = 0; p < P; ++p)
        part_style[p] =
            style_reward(discs[p].eval(parts.transition_features(p, view, next)));
      total += combined_style_reward(part_style);
      ++steps;
      view = std::move(next);
    }
  }
  return steps > 0 ? total / static_cast<double>(steps) : 0.0;
}

}  // namespace xembod::dail
