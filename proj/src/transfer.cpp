#include "xembod/transfer.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xembod/parallel.hpp"

namespace xembod::transfer {

using Eigen::MatrixXd;
using Eigen::VectorXd;

motion::MotionClip rollout_policy_to_clip(
    const skill::SkillPolicy& policy, const dail::BehaviorController& controller,
    const EmbodimentSpec& spec, const sim::SceneConfig& scene, int k,
    double contact_threshold, std::uint64_t seed,
    std::vector<VectorXd>* obs_log) {
  if (k <= 0) throw std::invalid_argument("decision stride must be positive");
  if (scene.objects.empty())
    throw std::invalid_argument("rollout recording needs a scene object");
  TreeIndex idx(spec);
  sim::Environment env(spec, scene, seed, 0);

  motion::MotionClip clip;
  clip.embodiment = spec.name;
  clip.fps = 1.0 / scene.params.dt;
  clip.label = "rollout";
  for (const auto& o : env.state().objects) {
    motion::ObjectTrack track;
    track.id = o.object_id;
    track.goal = o.goal;
    clip.objects.push_back(std::move(track));
  }

  auto record = [&] {
    const sim::SimState& s = env.state();
    motion::Frame fr;
    fr.t = s.t;
    fr.root = s.root;
    fr.q = s.joints.q;
    fr.q_dot = s.joints.q_dot;
    fr.root_lin_vel = s.root_lin_vel;
    fr.root_ang_vel = s.root_ang_vel;
    clip.frames.push_back(std::move(fr));
    for (size_t i = 0; i < clip.objects.size(); ++i)
      clip.objects[i].poses.push_back(s.objects[i].pose);
    if (obs_log) obs_log->push_back(env.observation());
  };

  record();
  Json latents = Json::array();
  while (!env.horizon_reached() && !env.task_success()) {
    const skill::InteractionState s = skill::interaction_state(
        skill::graph_from_sim(spec, idx, scene.hand_frames, env.state(),
                              contact_threshold));
    const VectorXd goal7 =
        skill::goal_in_root(env.state().root, env.state().objects[0].goal);
    const VectorXd z_all = policy.act(env.observation(), s, goal7);
    latents.push_back(
        std::vector<double>(z_all.data(), z_all.data() + z_all.size()));
    for (int step = 0; step < k; ++step) {
      env.step(controller.act(env.observation(), z_all));
      record();
      if (env.horizon_reached()) break;
    }
  }
  clip.meta = Json::object();
  clip.meta["success"] = env.task_success();
  clip.meta["decision_stride"] = k;
  clip.meta["latents"] = std::move(latents);
  return clip;
}

motion::MotionClip deploy_cross_embodiment(const motion::MotionClip& src_clip,
                                           const EmbodimentSpec& src_spec,
                                           const EmbodimentSpec& tgt_spec,
                                           const motion::RetargetConfig& cfg,
                                           motion::RetargetReport* report) {
  motion::MotionClip out =
      motion::retarget_clip(src_clip, src_spec, tgt_spec, cfg, report);
  // the task goal is a world-frame requirement, not body geometry: keep it
  for (size_t i = 0; i < out.objects.size(); ++i)
    out.objects[i].goal = src_clip.objects[i].goal;
  return out;
}

double tracking_reward(const EmbodimentSpec& spec, const TreeIndex& idx,
                       const motion::Frame& ref, const sim::SimState& state,
                       const TrackingWeights& w) {
  if (ref.q.size() != state.joints.q.size() ||
      ref.q.size() != spec.joint_count())
    throw std::invalid_argument("tracking reference dimension mismatch");
  const double q_err2 = (ref.q - state.joints.q).squaredNorm();
  const double ang = quat_angle(ref.root.orientation, state.root.orientation);
  const double root_err2 =
      (ref.root.position - state.root.position).squaredNorm() + ang * ang;
  const kin::LinkPoses ref_poses =
      kin::forward_kinematics(spec, idx, ref.root, ref.q);
  const kin::LinkPoses sim_poses =
      kin::forward_kinematics(spec, idx, state.root, state.joints.q);
  double end_err2 = 0.0;
  for (const auto& g : spec.groups) {
    const Vector3d d = ref_poses.of(spec, g.end_frame).position -
                       sim_poses.of(spec, g.end_frame).position;
    end_err2 += d.squaredNorm();
  }
  return w.w_j * std::exp(-q_err2) + w.w_r * std::exp(-root_err2) +
         w.w_e * std::exp(-end_err2);
}

VectorXd FineTuneLayer::input(double phase, const VectorXd& raw_obs) const {
  if (raw_obs.size() != obs_dim)
    throw std::invalid_argument("fine-tune layer observation mismatch");
  VectorXd raw(1 + obs_dim);
  raw[0] = std::clamp(phase, 0.0, 1.0);
  raw.tail(obs_dim) = raw_obs;
  return input_norm.apply(raw);
}

VectorXd FineTuneLayer::latents(const VectorXd& raw_action) const {
  return dail::project_latents(raw_action, parts, latent_dim);
}

VectorXd FineTuneLayer::act(double phase, const VectorXd& raw_obs) const {
  return latents(policy.mean(input(phase, raw_obs)));
}

namespace {

Json store_to_json(const nn::ParamStore& s) {
  Json j;
  j["p"] = std::vector<double>(s.p.data(), s.p.data() + s.p.size());
  j["m"] = std::vector<double>(s.m.data(), s.m.data() + s.m.size());
  j["v"] = std::vector<double>(s.v.data(), s.v.data() + s.v.size());
  j["step"] = s.step;
  return j;
}

nn::ParamStore store_from_json(const Json& j) {
  auto read = [&](const char* key) {
    auto vals = j.at(key).get<std::vector<double>>();
    return Eigen::Map<const VectorXd>(vals.data(),
                                      static_cast<long>(vals.size()))
        .eval();
  };
  nn::ParamStore s;
  s.p = read("p");
  s.m = read("m");
  s.v = read("v");
  s.step = j.at("step").get<long>();
  return s;
}

}  // namespace

Json fine_tune_layer_to_json(const FineTuneLayer& layer) {
  Json j;
  j["format"] = "xembod-finetune-v1";
  j["parts"] = layer.parts;
  j["latent_dim"] = layer.latent_dim;
  j["obs_dim"] = layer.obs_dim;
  j["trunk"] = nn::net_to_json(layer.policy.trunk, layer.policy.trunk_store);
  j["log_std"] = store_to_json(layer.policy.log_std);
  j["input_norm"] = layer.input_norm.to_json();
  return j;
}

FineTuneLayer fine_tune_layer_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "xembod-finetune-v1")
      throw std::runtime_error("unknown fine-tune layer format");
    FineTuneLayer layer;
    layer.parts = j.at("parts").get<int>();
    layer.latent_dim = j.at("latent_dim").get<int>();
    layer.obs_dim = j.at("obs_dim").get<int>();
    nn::net_from_json(j.at("trunk"), &layer.policy.trunk,
                      &layer.policy.trunk_store);
    layer.policy.log_std = store_from_json(j.at("log_std"));
    layer.input_norm = rl::RunningNorm::from_json(j.at("input_norm"));
    return layer;
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed fine-tune checkpoint: ") +
                             e.what());
  }
}

Json transfer_config_to_json(const TransferConfig& cfg) {
  Json j;
  j["tracking"] = {{"w_j", cfg.tracking.w_j},
                   {"w_r", cfg.tracking.w_r},
                   {"w_e", cfg.tracking.w_e}};
  j["style_weight"] = cfg.style_weight;
  j["use_task_reward"] = cfg.use_task_reward;
  j["task"] = {{"alpha", cfg.task.alpha},
               {"success_eps", cfg.task.success_eps},
               {"bonus", cfg.task.bonus}};
  j["k"] = cfg.k;
  j["layer_hidden"] = cfg.layer_hidden;
  j["value_hidden"] = cfg.value_hidden;
  j["envs"] = cfg.envs;
  j["workers"] = cfg.workers;
  j["horizon"] = cfg.horizon;
  j["iterations"] = cfg.iterations;
  j["ppo"] = {{"clip_eps", cfg.ppo.clip_eps},
              {"epochs", cfg.ppo.epochs},
              {"minibatch", cfg.ppo.minibatch},
              {"value_coef", cfg.ppo.value_coef},
              {"entropy_coef", cfg.ppo.entropy_coef},
              {"lr", cfg.ppo.lr},
              {"gamma", cfg.ppo.gamma},
              {"lam", cfg.ppo.lam}};
  j["seed"] = cfg.seed;
  return j;
}

TransferConfig transfer_config_from_json(const Json& j) {
  TransferConfig cfg;
  try {
    if (j.contains("tracking")) {
      const Json& t = j.at("tracking");
      cfg.tracking.w_j = t.value("w_j", cfg.tracking.w_j);
      cfg.tracking.w_r = t.value("w_r", cfg.tracking.w_r);
      cfg.tracking.w_e = t.value("w_e", cfg.tracking.w_e);
    }
    cfg.style_weight = j.value("style_weight", cfg.style_weight);
    cfg.use_task_reward = j.value("use_task_reward", cfg.use_task_reward);
    if (j.contains("task")) {
      const Json& t = j.at("task");
      cfg.task.alpha = t.value("alpha", cfg.task.alpha);
      cfg.task.success_eps = t.value("success_eps", cfg.task.success_eps);
      cfg.task.bonus = t.value("bonus", cfg.task.bonus);
    }
    cfg.k = j.value("k", cfg.k);
    cfg.layer_hidden = j.value("layer_hidden", cfg.layer_hidden);
    cfg.value_hidden = j.value("value_hidden", cfg.value_hidden);
    cfg.envs = j.value("envs", cfg.envs);
    cfg.workers = j.value("workers", cfg.workers);
    cfg.horizon = j.value("horizon", cfg.horizon);
    cfg.iterations = j.value("iterations", cfg.iterations);
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
    cfg.seed = j.value("seed", cfg.seed);
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed transfer config: ") +
                             e.what());
  }
  return cfg;
}

namespace {

struct TransferEnvSlot {
  sim::Environment env;
  Rng action_rng;
  bool bonus_paid = false;

  TransferEnvSlot(const EmbodimentSpec& spec, const sim::SceneConfig& scene,
                  std::uint64_t seed, int e)
      : env(spec, scene, seed, static_cast<std::uint64_t>(e)),
        action_rng(seed, 100 + static_cast<std::uint64_t>(e)) {}
};

struct TransferTrace {
  rl::RolloutBuffer buffer;
  rl::NormAccum accum;
  double tracking_sum = 0.0, style_sum = 0.0;
  long low_steps = 0;
  int episodes = 0, successes = 0;
};

}  // namespace

FineTuneResult fine_tune(const dail::BehaviorController& controller,
                         const std::vector<dail::PartDiscriminator>& discs,
                         const motion::MotionClip& reference,
                         const EmbodimentSpec& spec,
                         const sim::SceneConfig& scene,
                         const TransferConfig& cfg) {
  if (cfg.envs <= 0 || cfg.horizon <= 0 || cfg.k <= 0)
    throw std::invalid_argument("fine-tuning needs positive envs, horizon, k");
  if (reference.embodiment != spec.name)
    throw std::runtime_error("reference clip embodiment mismatch: clip is for '" +
                             reference.embodiment + "', fine-tuning on '" +
                             spec.name + "'");
  if (controller.embodiment != spec.name)
    throw std::invalid_argument("controller was trained for embodiment '" +
                                controller.embodiment + "'");
  if (reference.frame_count() < 2)
    throw std::invalid_argument("reference clip too short");
  TreeIndex idx(spec);
  dail::PartitionIndex parts(spec, controller.partition);
  const int P = parts.part_count();
  const int ld = controller.latent_dim;
  if (static_cast<int>(discs.size()) != P)
    throw std::invalid_argument("discriminator count does not match partition");
  const double ref_t0 = reference.frames.front().t;
  const double ref_dur = reference.duration();

  std::vector<TransferEnvSlot> slots;
  slots.reserve(cfg.envs);
  for (int e = 0; e < cfg.envs; ++e) slots.emplace_back(spec, scene, cfg.seed, e);
  const int obs_dim = slots[0].env.obs_dim();
  if (controller.obs_norm.dim() != obs_dim)
    throw std::invalid_argument(
        "controller observation layout does not match the scene");
  const int in_dim = 1 + obs_dim;
  const int act_dim = P * ld;

  Rng init_rng(cfg.seed, 1);
  nn::MlpSpec trunk_spec;
  trunk_spec.layer_sizes.push_back(in_dim);
  for (int h : cfg.layer_hidden) trunk_spec.layer_sizes.push_back(h);
  trunk_spec.layer_sizes.push_back(act_dim);

  FineTuneResult result;
  result.layer.policy = rl::GaussianPolicy::init(trunk_spec, init_rng);
  result.layer.input_norm = rl::RunningNorm(in_dim);
  result.layer.parts = P;
  result.layer.latent_dim = ld;
  result.layer.obs_dim = obs_dim;

  nn::MlpSpec value_spec;
  value_spec.layer_sizes.push_back(in_dim);
  for (int h : cfg.value_hidden) value_spec.layer_sizes.push_back(h);
  value_spec.layer_sizes.push_back(1);
  rl::ValueNet value_net = rl::ValueNet::init(value_spec, init_rng);

  Rng ppo_rng(cfg.seed, 2);

  result.curve_header = {"env_steps",   "success_rate", "tracking",
                         "style",       "mean_reward",  "policy_loss",
                         "value_loss",  "entropy"};

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<TransferTrace> traces(cfg.envs);
    const FineTuneLayer& layer = result.layer;

    parallel_for(cfg.envs, cfg.workers, [&](int e) {
      TransferEnvSlot& slot = slots[e];
      TransferTrace& trace = traces[e];
      trace.buffer.reset(in_dim, act_dim, cfg.horizon);
      trace.accum.reset(in_dim);

      bool done = false;
      for (int t = 0; t < cfg.horizon; ++t) {
        const double phase =
            std::clamp(slot.env.time() / ref_dur, 0.0, 1.0);
        VectorXd raw_in(in_dim);
        raw_in[0] = phase;
        raw_in.tail(obs_dim) = slot.env.observation();
        trace.accum.add(raw_in);
        const VectorXd input = layer.input_norm.apply(raw_in);
        double logp = 0.0;
        const VectorXd raw_action =
            layer.policy.sample(input, slot.action_rng, &logp);
        const double value = value_net.value(input);
        const VectorXd z_all = layer.latents(raw_action);

        double reward_sum = 0.0;
        int executed = 0;
        dail::FrameView view =
            dail::view_from_state(spec, idx, slot.env.state());
        for (int step = 0; step < cfg.k; ++step) {
          slot.env.step(controller.act(slot.env.observation(), z_all));
          dail::FrameView next =
              dail::view_from_state(spec, idx, slot.env.state());
          const motion::Frame ref = motion::sample_frame(
              reference, ref_t0 + std::min(slot.env.time(), ref_dur));
          const double track =
              tracking_reward(spec, idx, ref, slot.env.state(), cfg.tracking);
          std::vector<double> part_style(P);
          for (int p = 0; p < P; ++p)
            part_style[p] = dail::style_reward(
                discs[p].eval(parts.transition_features(p, view, next)));
          const double style = dail::combined_style_reward(part_style);
          trace.tracking_sum += track;
          trace.style_sum += style;
          reward_sum += track + cfg.style_weight * style;
          view = std::move(next);
          ++executed;
          if (slot.env.horizon_reached()) break;
        }
        trace.low_steps += executed;
        double r = reward_sum / executed;
        if (cfg.use_task_reward && !slot.env.state().objects.empty()) {
          const double d_og = slot.env.object_goal_distance();
          const bool first = d_og < cfg.task.success_eps && !slot.bonus_paid;
          if (first) slot.bonus_paid = true;
          r += skill::task_reward(d_og, first, cfg.task);
        }

        done = slot.env.horizon_reached() || slot.env.task_success();
        trace.buffer.push(input, raw_action, logp, r, value, done);
        if (done) {
          ++trace.episodes;
          if (slot.env.task_success()) ++trace.successes;
          slot.env.reset();
          slot.bonus_paid = false;
        }
      }
      if (!done) {
        const double phase =
            std::clamp(slot.env.time() / ref_dur, 0.0, 1.0);
        VectorXd raw_in(in_dim);
        raw_in[0] = phase;
        raw_in.tail(obs_dim) = slot.env.observation();
        trace.buffer.bootstrap_value =
            value_net.value(layer.input_norm.apply(raw_in));
      }
      trace.buffer.attach_gae(cfg.ppo.gamma, cfg.ppo.lam);
    });

    for (const auto& trace : traces) result.layer.input_norm.merge(trace.accum);

    std::vector<rl::RolloutBuffer> buffers;
    buffers.reserve(cfg.envs);
    double reward_sum = 0.0;
    double tracking = 0.0, style = 0.0;
    long low_steps = 0;
    int episodes = 0, successes = 0;
    for (auto& trace : traces) {
      reward_sum += trace.buffer.rew.sum();
      tracking += trace.tracking_sum;
      style += trace.style_sum;
      low_steps += trace.low_steps;
      episodes += trace.episodes;
      successes += trace.successes;
      buffers.push_back(std::move(trace.buffer));
    }
    const rl::RolloutBuffer merged = rl::RolloutBuffer::merge(buffers);
    const rl::PpoReport ppo = rl::ppo_update(result.layer.policy, value_net,
                                             merged, cfg.ppo, ppo_rng);

    result.total_env_steps += low_steps;
    const double decisions = static_cast<double>(cfg.envs) * cfg.horizon;
    result.curves.push_back(
        {static_cast<double>(result.total_env_steps),
         episodes > 0 ? static_cast<double>(successes) / episodes : 0.0,
         tracking / static_cast<double>(low_steps),
         style / static_cast<double>(low_steps), reward_sum / decisions,
         ppo.policy_loss, ppo.value_loss, ppo.entropy});
  }
  return result;
}

namespace {

// shared episode loop for the two deterministic evaluators
template <typename LatentFn>
TransferEvalReport eval_latent_stack(
    LatentFn&& choose_latents, const dail::BehaviorController& controller,
    const std::vector<dail::PartDiscriminator>& discs,
    const motion::MotionClip& reference, const EmbodimentSpec& spec,
    const sim::SceneConfig& scene, int k, int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("need at least one episode");
  if (k <= 0) throw std::invalid_argument("decision stride must be positive");
  TreeIndex idx(spec);
  dail::PartitionIndex parts(spec, controller.partition);
  const int P = parts.part_count();
  const double ref_t0 = reference.frames.front().t;
  const double ref_dur = reference.duration();
  TrackingWeights track_w;
  TransferEvalReport report;
  report.episodes = episodes;
  long steps = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    sim::Environment env(spec, scene, seed, 9000 + static_cast<std::uint64_t>(ep));
    int decision = 0;
    while (!env.horizon_reached() && !env.task_success()) {
      const VectorXd z_all = choose_latents(env, decision);
      ++decision;
      dail::FrameView view = dail::view_from_state(spec, idx, env.state());
      for (int step = 0; step < k; ++step) {
        env.step(controller.act(env.observation(), z_all));
        dail::FrameView next = dail::view_from_state(spec, idx, env.state());
        const motion::Frame ref = motion::sample_frame(
            reference, ref_t0 + std::min(env.time(), ref_dur));
        report.mean_tracking +=
            tracking_reward(spec, idx, ref, env.state(), track_w);
        std::vector<double> part_style(P);
        for (int p = 0; p < P; ++p)
          part_style[p] = dail::style_reward(
              discs[p].eval(parts.transition_features(p, view, next)));
        report.mean_style += dail::combined_style_reward(part_style);
        view = std::move(next);
        ++steps;
        if (env.horizon_reached()) break;
      }
    }
    if (env.task_success()) report.success_rate += 1.0;
  }
  report.success_rate /= episodes;
  if (steps > 0) {
    report.mean_tracking /= static_cast<double>(steps);
    report.mean_style /= static_cast<double>(steps);
  }
  return report;
}

}  // namespace

TransferEvalReport eval_fine_tuned(const FineTuneLayer& layer,
                                   const dail::BehaviorController& controller,
                                   const std::vector<dail::PartDiscriminator>&
                                       discs,
                                   const motion::MotionClip& reference,
                                   const EmbodimentSpec& spec,
                                   const sim::SceneConfig& scene, int k,
                                   int episodes, std::uint64_t seed) {
  const double ref_dur = reference.duration();
  return eval_latent_stack(
      [&](const sim::Environment& env, int) {
        const double phase = std::clamp(env.time() / ref_dur, 0.0, 1.0);
        return layer.act(phase, env.observation());
      },
      controller, discs, reference, spec, scene, k, episodes, seed);
}

TransferEvalReport latent_replay_baseline(
    const motion::MotionClip& reference,
    const dail::BehaviorController& controller,
    const std::vector<dail::PartDiscriminator>& discs,
    const EmbodimentSpec& spec, const sim::SceneConfig& scene, int k,
    int episodes, std::uint64_t seed) {
  if (!reference.meta.is_object() || !reference.meta.contains("latents") ||
      reference.meta["latents"].empty())
    throw std::runtime_error("reference clip has no recorded latents");
  std::vector<VectorXd> latents;
  for (const auto& lj : reference.meta["latents"]) {
    auto vals = lj.get<std::vector<double>>();
    latents.push_back(
        Eigen::Map<const VectorXd>(vals.data(), static_cast<long>(vals.size()))
            .eval());
  }
  const int n = static_cast<int>(latents.size());
  return eval_latent_stack(
      [&](const sim::Environment&, int decision) {
        return latents[std::min(decision, n - 1)];
      },
      controller, discs, reference, spec, scene, k, episodes, seed);
}

}  // namespace xembod::transfer
