#include "xembod/skill.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "xembod/parallel.hpp"

namespace xembod::skill {

using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

InteractionGraph extract_interaction_graph(
    const Transform& root,
    const std::vector<std::pair<std::string, Transform>>& hand_poses,
    const std::vector<ObjectInstant>& objects, double contact_threshold) {
  if (contact_threshold <= 0.0)
    throw std::invalid_argument("contact threshold must be positive");
  InteractionGraph graph;
  graph.contact_threshold = contact_threshold;
  const Eigen::Matrix3d rt = root.orientation.toRotationMatrix().transpose();

  const int H = static_cast<int>(hand_poses.size());
  const int O = static_cast<int>(objects.size());
  for (const auto& [name, pose] : hand_poses) {
    GraphNode node;
    node.node_id = name;
    node.kind = NodeKind::body_part;
    node.pose = pose;
    if (O > 0) {
      // nearest object; with the one task object this is just the object
      double best = std::numeric_limits<double>::infinity();
      for (const auto& obj : objects) {
        const Vector3d d = obj.pose.position - pose.position;
        if (d.norm() < best) {
          best = d.norm();
          node.aux = rt * d;
        }
      }
    }
    graph.nodes.push_back(std::move(node));
  }
  for (const auto& obj : objects) {
    GraphNode node;
    node.node_id = obj.id;
    node.kind = NodeKind::object;
    node.pose = obj.pose;
    node.aux = rt * (obj.goal.position - obj.pose.position);
    graph.nodes.push_back(std::move(node));
  }

  const int n = H + O;
  graph.edges = Eigen::MatrixXi::Zero(n, n);
  for (int h = 0; h < H; ++h) {
    for (int o = 0; o < O; ++o) {
      const double dist =
          (objects[o].pose.position - hand_poses[h].second.position).norm();
      const int contact = dist < contact_threshold ? 1 : 0;
      graph.edges(h, H + o) = contact;
      graph.edges(H + o, h) = contact;
    }
  }
  return graph;
}

namespace {

std::vector<std::pair<std::string, Transform>> hand_world_poses(
    const EmbodimentSpec& spec, const TreeIndex& idx,
    const std::vector<std::string>& hand_frames, const Transform& root,
    const VectorXd& q) {
  const kin::LinkPoses poses = kin::forward_kinematics(spec, idx, root, q);
  std::vector<std::pair<std::string, Transform>> out;
  out.reserve(hand_frames.size());
  for (const auto& name : hand_frames)
    out.emplace_back(name, poses.of(spec, name));
  return out;
}

}  // namespace

InteractionGraph graph_from_sim(const EmbodimentSpec& spec,
                                const TreeIndex& idx,
                                const std::vector<std::string>& hand_frames,
                                const sim::SimState& state,
                                double contact_threshold) {
  std::vector<ObjectInstant> objects;
  objects.reserve(state.objects.size());
  for (const auto& o : state.objects)
    objects.push_back({o.object_id, o.pose, o.goal});
  return extract_interaction_graph(
      state.root,
      hand_world_poses(spec, idx, hand_frames, state.root, state.joints.q),
      objects, contact_threshold);
}

InteractionGraph graph_from_frame(const EmbodimentSpec& spec,
                                  const TreeIndex& idx,
                                  const std::vector<std::string>& hand_frames,
                                  const motion::Frame& frame,
                                  const std::vector<ObjectInstant>& objects,
                                  double contact_threshold) {
  return extract_interaction_graph(
      frame.root, hand_world_poses(spec, idx, hand_frames, frame.root, frame.q),
      objects, contact_threshold);
}

VectorXd InteractionState::pack() const {
  VectorXd v(dim());
  int at = 0;
  for (const auto& d : d_ho) {
    v.segment<3>(at) = d;
    at += 3;
  }
  v.segment<3>(at) = d_og;
  at += 3;
  for (int e : e_ho) v[at++] = static_cast<double>(e);
  return v;
}

InteractionState interaction_state(const InteractionGraph& graph) {
  int object_node = -1;
  for (int i = 0; i < graph.node_count(); ++i) {
    if (graph.nodes[i].kind != NodeKind::object) continue;
    if (object_node >= 0)
      throw std::invalid_argument(
          "interaction state needs exactly one object node");
    object_node = i;
  }
  if (object_node < 0)
    throw std::invalid_argument(
        "interaction state needs exactly one object node");
  InteractionState s;
  s.d_og = graph.nodes[object_node].aux;
  for (int i = 0; i < graph.node_count(); ++i) {
    if (graph.nodes[i].kind != NodeKind::body_part) continue;
    s.d_ho.push_back(graph.nodes[i].aux);
    s.e_ho.push_back(graph.edges(i, object_node));
  }
  return s;
}

double task_reward(double object_goal_distance, bool first_success,
                   const TaskRewardConfig& cfg) {
  double r = std::exp(-cfg.alpha * object_goal_distance);
  if (first_success) r += cfg.bonus;
  return r;
}

double skill_style_reward(double d_interaction) {
  return dail::style_reward(d_interaction);
}

double skill_reward(double r_g, double r_s, double r_b,
                    const SkillRewardWeights& w) {
  return w.w_g * r_g + w.w_s * r_s + w.w_b * r_b;
}

VectorXd SkillPolicy::input(const VectorXd& raw_obs, const InteractionState& s,
                            const VectorXd& goal7) const {
  if (raw_obs.size() != obs_dim || s.hand_count() != hands ||
      goal7.size() != 7)
    throw std::invalid_argument("skill policy input layout mismatch");
  VectorXd raw(input_dim());
  raw.head(obs_dim) = raw_obs;
  raw.segment(obs_dim, s.dim()) = s.pack();
  raw.tail(7) = goal7;
  return input_norm.apply(raw);
}

VectorXd SkillPolicy::latents(const VectorXd& raw_action) const {
  return dail::project_latents(raw_action, parts, latent_dim);
}

VectorXd SkillPolicy::act(const VectorXd& raw_obs, const InteractionState& s,
                          const VectorXd& goal7) const {
  return latents(policy.mean(input(raw_obs, s, goal7)));
}

Json skill_policy_to_json(const SkillPolicy& p) {
  Json j;
  j["format"] = "xembod-skill-v1";
  j["parts"] = p.parts;
  j["latent_dim"] = p.latent_dim;
  j["obs_dim"] = p.obs_dim;
  j["hands"] = p.hands;
  j["trunk"] = nn::net_to_json(p.policy.trunk, p.policy.trunk_store);
  Json ls;
  ls["p"] = std::vector<double>(p.policy.log_std.p.data(),
                                p.policy.log_std.p.data() +
                                    p.policy.log_std.p.size());
  ls["m"] = std::vector<double>(p.policy.log_std.m.data(),
                                p.policy.log_std.m.data() +
                                    p.policy.log_std.m.size());
  ls["v"] = std::vector<double>(p.policy.log_std.v.data(),
                                p.policy.log_std.v.data() +
                                    p.policy.log_std.v.size());
  ls["step"] = p.policy.log_std.step;
  j["log_std"] = ls;
  j["input_norm"] = p.input_norm.to_json();
  return j;
}

SkillPolicy skill_policy_from_json(const Json& j) {
  try {
    if (j.at("format").get<std::string>() != "xembod-skill-v1")
      throw std::runtime_error("unknown skill policy format");
    SkillPolicy p;
    p.parts = j.at("parts").get<int>();
    p.latent_dim = j.at("latent_dim").get<int>();
    p.obs_dim = j.at("obs_dim").get<int>();
    p.hands = j.at("hands").get<int>();
    nn::net_from_json(j.at("trunk"), &p.policy.trunk, &p.policy.trunk_store);
    const Json& ls = j.at("log_std");
    auto read = [&](const char* key) {
      auto vals = ls.at(key).get<std::vector<double>>();
      return Eigen::Map<const VectorXd>(vals.data(),
                                        static_cast<long>(vals.size()))
          .eval();
    };
    p.policy.log_std.p = read("p");
    p.policy.log_std.m = read("m");
    p.policy.log_std.v = read("v");
    p.policy.log_std.step = ls.at("step").get<long>();
    p.input_norm = rl::RunningNorm::from_json(j.at("input_norm"));
    return p;
  } catch (const Json::exception& e) {
    throw std::runtime_error(std::string("malformed skill checkpoint: ") +
                             e.what());
  }
}

VectorXd goal_in_root(const Transform& root, const Transform& goal) {
  const Transform rel = root.inverse() * goal;
  VectorXd v(7);
  v.head<3>() = rel.position;
  const Eigen::Quaterniond qc = quat_canonical(rel.orientation);
  v[3] = qc.w();
  v[4] = qc.x();
  v[5] = qc.y();
  v[6] = qc.z();
  return v;
}

MatrixXd build_demo_interaction_transitions(
    const std::vector<motion::MotionClip>& clips, const EmbodimentSpec& spec,
    const std::vector<std::string>& hand_frames, double control_fps, int k,
    double contact_threshold) {
  if (k <= 0) throw std::invalid_argument("decision stride must be positive");
  if (hand_frames.empty()) throw std::invalid_argument("no hand frames");
  TreeIndex idx(spec);
  bool any_objects = false;
  std::vector<VectorXd> cols;
  for (const auto& clip : clips) {
    if (clip.objects.empty()) continue;
    any_objects = true;
    motion::MotionClip local;
    const motion::MotionClip* use = &clip;
    if (std::abs(clip.fps - control_fps) > 1e-9) {
      local = motion::resample_clip(clip, control_fps);
      use = &local;
    }
    const int n = use->frame_count();
    std::vector<VectorXd> packed(n);
    for (int i = 0; i < n; ++i) {
      std::vector<ObjectInstant> objects;
      objects.reserve(use->objects.size());
      for (const auto& track : use->objects)
        objects.push_back({track.id, track.poses[i], track.goal});
      const InteractionGraph graph =
          graph_from_frame(spec, idx, hand_frames, use->frames[i], objects,
                           contact_threshold);
      packed[i] = interaction_state(graph).pack();
    }
    for (int i = 0; i + k < n; i += k) {
      VectorXd col(2 * packed[i].size());
      col.head(packed[i].size()) = packed[i];
      col.tail(packed[i].size()) = packed[i + k];
      cols.push_back(std::move(col));
    }
  }
  if (!any_objects) throw std::runtime_error("dataset has no object tracks");
  if (cols.empty())
    throw std::runtime_error("object clips too short for interaction "
                             "transitions at the control rate");
  MatrixXd out(cols.front().size(), static_cast<int>(cols.size()));
  for (int c = 0; c < out.cols(); ++c) out.col(c) = cols[c];
  return out;
}

dail::DiscReport interaction_discriminator_update(
    dail::PartDiscriminator& d_interaction, const MatrixXd& demo_batch,
    const MatrixXd& policy_batch, const dail::DiscConfig& cfg) {
  return dail::discriminator_update(d_interaction, demo_batch, policy_batch,
                                    cfg);
}

Json skill_config_to_json(const SkillConfig& cfg) {
  Json j;
  j["k"] = cfg.k;
  j["policy_hidden"] = cfg.policy_hidden;
  j["value_hidden"] = cfg.value_hidden;
  j["disc_hidden"] = cfg.disc_hidden;
  j["weights"] = {{"w_g", cfg.weights.w_g},
                  {"w_s", cfg.weights.w_s},
                  {"w_b", cfg.weights.w_b}};
  j["task"] = {{"alpha", cfg.task.alpha},
               {"success_eps", cfg.task.success_eps},
               {"bonus", cfg.task.bonus}};
  j["contact_threshold"] = cfg.contact_threshold;
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

SkillConfig skill_config_from_json(const Json& j) {
  SkillConfig cfg;
  try {
    cfg.k = j.value("k", cfg.k);
    cfg.policy_hidden = j.value("policy_hidden", cfg.policy_hidden);
    cfg.value_hidden = j.value("value_hidden", cfg.value_hidden);
    cfg.disc_hidden = j.value("disc_hidden", cfg.disc_hidden);
    if (j.contains("weights")) {
      const Json& w = j.at("weights");
      cfg.weights.w_g = w.value("w_g", cfg.weights.w_g);
      cfg.weights.w_s = w.value("w_s", cfg.weights.w_s);
      cfg.weights.w_b = w.value("w_b", cfg.weights.w_b);
    }
    if (j.contains("task")) {
      const Json& t = j.at("task");
      cfg.task.alpha = t.value("alpha", cfg.task.alpha);
      cfg.task.success_eps = t.value("success_eps", cfg.task.success_eps);
      cfg.task.bonus = t.value("bonus", cfg.task.bonus);
    }
    cfg.contact_threshold = j.value("contact_threshold", cfg.contact_threshold);
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
    throw std::runtime_error(std::string("malformed skill config: ") + e.what());
  }
  return cfg;
}

namespace {

struct SkillEnvSlot {
  sim::Environment env;
  Rng action_rng;
  bool bonus_paid = false;

  SkillEnvSlot(const EmbodimentSpec& spec, const sim::SceneConfig& scene,
               std::uint64_t seed, int e)
      : env(spec, scene, seed, static_cast<std::uint64_t>(e)),
        action_rng(seed, 100 + static_cast<std::uint64_t>(e)) {}
};

struct SkillTrace {
  rl::RolloutBuffer buffer;
  MatrixXd s_trans;
  rl::NormAccum accum;
  double rg_sum = 0.0, rs_sum = 0.0, rb_sum = 0.0;
  long low_steps = 0;
  int episodes = 0, successes = 0;
};

}  // namespace

TrainSkillResult train_skill(const dail::BehaviorController& controller,
                             const std::vector<dail::PartDiscriminator>& discs,
                             const std::vector<motion::MotionClip>& demos,
                             const EmbodimentSpec& spec,
                             const sim::SceneConfig& scene,
                             const SkillConfig& cfg) {
  if (cfg.envs <= 0 || cfg.horizon <= 0 || cfg.k <= 0)
    throw std::invalid_argument("skill training needs positive envs, horizon, k");
  if (scene.objects.empty())
    throw std::invalid_argument("skill training needs a scene object");
  if (scene.hand_frames.empty())
    throw std::invalid_argument("skill training needs hand frames");
  if (controller.embodiment != spec.name)
    throw std::invalid_argument("controller was trained for embodiment '" +
                                controller.embodiment + "', scene uses '" +
                                spec.name + "'");
  TreeIndex idx(spec);
  dail::PartitionIndex parts(spec, controller.partition);
  const int P = parts.part_count();
  const int ld = controller.latent_dim;
  if (static_cast<int>(discs.size()) != P)
    throw std::invalid_argument("discriminator count does not match partition");
  const double control_fps = 1.0 / scene.params.dt;
  const MatrixXd demo_trans = build_demo_interaction_transitions(
      demos, spec, scene.hand_frames, control_fps, cfg.k,
      cfg.contact_threshold);

  std::vector<SkillEnvSlot> slots;
  slots.reserve(cfg.envs);
  for (int e = 0; e < cfg.envs; ++e) slots.emplace_back(spec, scene, cfg.seed, e);
  const int obs_dim = slots[0].env.obs_dim();
  if (controller.obs_norm.dim() != obs_dim)
    throw std::invalid_argument(
        "controller observation layout does not match the scene");
  if (controller.policy.act_dim() != slots[0].env.action_dim())
    throw std::invalid_argument(
        "controller action layout does not match the scene");
  const int H = static_cast<int>(scene.hand_frames.size());
  const int s_dim = 4 * H + 3;
  const int in_dim = obs_dim + s_dim + 7;
  const int act_dim = P * ld;

  Rng init_rng(cfg.seed, 1);
  nn::MlpSpec trunk_spec;
  trunk_spec.layer_sizes.push_back(in_dim);
  for (int h : cfg.policy_hidden) trunk_spec.layer_sizes.push_back(h);
  trunk_spec.layer_sizes.push_back(act_dim);

  TrainSkillResult result;
  result.policy.policy = rl::GaussianPolicy::init(trunk_spec, init_rng);
  result.policy.input_norm = rl::RunningNorm(in_dim);
  result.policy.parts = P;
  result.policy.latent_dim = ld;
  result.policy.obs_dim = obs_dim;
  result.policy.hands = H;

  nn::MlpSpec value_spec;
  value_spec.layer_sizes.push_back(in_dim);
  for (int h : cfg.value_hidden) value_spec.layer_sizes.push_back(h);
  value_spec.layer_sizes.push_back(1);
  rl::ValueNet value_net = rl::ValueNet::init(value_spec, init_rng);

  result.d_interaction = dail::make_discriminator("interaction", 2 * s_dim,
                                                  cfg.disc_hidden, init_rng);

  Rng ppo_rng(cfg.seed, 2);
  Rng disc_rng(cfg.seed, 3);

  result.curve_header = {"env_steps", "success_rate", "r_g",        "r_s",
                         "r_b",       "disc_acc",     "mean_reward",
                         "policy_loss", "value_loss", "entropy"};

  for (int iter = 0; iter < cfg.iterations; ++iter) {
    std::vector<SkillTrace> traces(cfg.envs);
    const SkillPolicy& policy = result.policy;
    const dail::PartDiscriminator& d_inter = result.d_interaction;

    parallel_for(cfg.envs, cfg.workers, [&](int e) {
      SkillEnvSlot& slot = slots[e];
      SkillTrace& trace = traces[e];
      trace.buffer.reset(in_dim, act_dim, cfg.horizon);
      trace.s_trans.resize(2 * s_dim, cfg.horizon);
      trace.accum.reset(in_dim);

      bool done = false;
      for (int t = 0; t < cfg.horizon; ++t) {
        const VectorXd raw_obs = slot.env.observation();
        const InteractionState s = interaction_state(graph_from_sim(
            spec, idx, scene.hand_frames, slot.env.state(),
            cfg.contact_threshold));
        const VectorXd goal7 = goal_in_root(slot.env.state().root,
                                            slot.env.state().objects[0].goal);
        VectorXd raw_in(in_dim);
        raw_in.head(obs_dim) = raw_obs;
        raw_in.segment(obs_dim, s_dim) = s.pack();
        raw_in.tail(7) = goal7;
        trace.accum.add(raw_in);
        const VectorXd input = policy.input_norm.apply(raw_in);
        double logp = 0.0;
        const VectorXd raw_action =
            policy.policy.sample(input, slot.action_rng, &logp);
        const double value = value_net.value(input);
        const VectorXd z_all = policy.latents(raw_action);

        double rb_sum = 0.0;
        int executed = 0;
        dail::FrameView view =
            dail::view_from_state(spec, idx, slot.env.state());
        for (int step = 0; step < cfg.k; ++step) {
          const VectorXd a = controller.act(slot.env.observation(), z_all);
          slot.env.step(a);
          dail::FrameView next =
              dail::view_from_state(spec, idx, slot.env.state());
          std::vector<double> part_style(P);
          for (int p = 0; p < P; ++p)
            part_style[p] = dail::style_reward(
                discs[p].eval(parts.transition_features(p, view, next)));
          rb_sum += dail::combined_style_reward(part_style);
          view = std::move(next);
          ++executed;
          if (slot.env.horizon_reached()) break;
        }
        trace.low_steps += executed;

        const InteractionState s_next = interaction_state(graph_from_sim(
            spec, idx, scene.hand_frames, slot.env.state(),
            cfg.contact_threshold));
        VectorXd trans(2 * s_dim);
        trans.head(s_dim) = s.pack();
        trans.tail(s_dim) = s_next.pack();
        trace.s_trans.col(t) = trans;

        const double r_s = skill_style_reward(d_inter.eval(trans));
        const double d_og = slot.env.object_goal_distance();
        const bool first =
            d_og < cfg.task.success_eps && !slot.bonus_paid;
        if (first) slot.bonus_paid = true;
        const double r_g = task_reward(d_og, first, cfg.task);
        const double r_b = rb_sum / executed;
        const double r = skill_reward(r_g, r_s, r_b, cfg.weights);
        trace.rg_sum += r_g;
        trace.rs_sum += r_s;
        trace.rb_sum += r_b;

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
        const VectorXd raw_obs = slot.env.observation();
        const InteractionState s = interaction_state(graph_from_sim(
            spec, idx, scene.hand_frames, slot.env.state(),
            cfg.contact_threshold));
        VectorXd raw_in(in_dim);
        raw_in.head(obs_dim) = raw_obs;
        raw_in.segment(obs_dim, s_dim) = s.pack();
        raw_in.tail(7) = goal_in_root(slot.env.state().root,
                                      slot.env.state().objects[0].goal);
        trace.buffer.bootstrap_value =
            value_net.value(policy.input_norm.apply(raw_in));
      }
      trace.buffer.attach_gae(cfg.ppo.gamma, cfg.ppo.lam);
    });

    for (const auto& trace : traces) result.policy.input_norm.merge(trace.accum);

    MatrixXd pool(2 * s_dim, cfg.envs * cfg.horizon);
    for (int e = 0; e < cfg.envs; ++e)
      pool.middleCols(e * cfg.horizon, cfg.horizon) = traces[e].s_trans;

    double disc_acc = 0.0;
    for (int u = 0; u < cfg.disc_updates; ++u) {
      const int nb = std::min<int>(cfg.disc_batch, static_cast<int>(pool.cols()));
      MatrixXd real(2 * s_dim, nb);
      MatrixXd fake(2 * s_dim, nb);
      for (int c = 0; c < nb; ++c) {
        real.col(c) = demo_trans.col(
            disc_rng.uniform_int(static_cast<int>(demo_trans.cols())));
        fake.col(c) =
            pool.col(disc_rng.uniform_int(static_cast<int>(pool.cols())));
      }
      // same saturation guard as the behavior pretraining loop
      const double acc =
          dail::discriminator_accuracy(result.d_interaction, real, fake);
      if (acc < cfg.disc.acc_gate) {
        const dail::DiscReport rep = dail::discriminator_update(
            result.d_interaction, real, fake, cfg.disc);
        disc_acc = rep.accuracy;
      } else {
        disc_acc = acc;
      }
    }

    std::vector<rl::RolloutBuffer> buffers;
    buffers.reserve(cfg.envs);
    double reward_sum = 0.0;
    long low_steps = 0;
    int episodes = 0, successes = 0;
    double rg = 0.0, rs = 0.0, rb = 0.0;
    for (auto& trace : traces) {
      reward_sum += trace.buffer.rew.sum();
      low_steps += trace.low_steps;
      episodes += trace.episodes;
      successes += trace.successes;
      rg += trace.rg_sum;
      rs += trace.rs_sum;
      rb += trace.rb_sum;
      buffers.push_back(std::move(trace.buffer));
    }
    const rl::RolloutBuffer merged = rl::RolloutBuffer::merge(buffers);
    const rl::PpoReport ppo =
        rl::ppo_update(result.policy.policy, value_net, merged, cfg.ppo,
                       ppo_rng);

    result.total_env_steps += low_steps;
    const double decisions = static_cast<double>(cfg.envs) * cfg.horizon;
    result.curves.push_back(
        {static_cast<double>(result.total_env_steps),
         episodes > 0 ? static_cast<double>(successes) / episodes : 0.0,
         rg / decisions, rs / decisions, rb / decisions, disc_acc,
         reward_sum / decisions, ppo.policy_loss, ppo.value_loss,
         ppo.entropy});
  }
  return result;
}

SkillEvalReport eval_skill(const SkillPolicy& policy,
                           const dail::BehaviorController& controller,
                           const dail::PartDiscriminator& d_interaction,
                           const std::vector<dail::PartDiscriminator>& discs,
                           const EmbodimentSpec& spec,
                           const sim::SceneConfig& scene,
                           const SkillConfig& cfg, int episodes,
                           std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("need at least one episode");
  if (scene.objects.empty())
    throw std::invalid_argument("evaluation needs a scene object");
  TreeIndex idx(spec);
  dail::PartitionIndex parts(spec, controller.partition);
  const int P = parts.part_count();
  SkillEvalReport report;
  report.episodes = episodes;
  long decisions = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    sim::Environment env(spec, scene, seed, 9000 + static_cast<std::uint64_t>(ep));
    bool bonus_paid = false;
    while (!env.horizon_reached() && !env.task_success()) {
      const InteractionState s = interaction_state(graph_from_sim(
          spec, idx, scene.hand_frames, env.state(), cfg.contact_threshold));
      const VectorXd goal7 =
          goal_in_root(env.state().root, env.state().objects[0].goal);
      const VectorXd z_all = policy.act(env.observation(), s, goal7);

      double rb_sum = 0.0;
      int executed = 0;
      dail::FrameView view = dail::view_from_state(spec, idx, env.state());
      for (int step = 0; step < cfg.k; ++step) {
        env.step(controller.act(env.observation(), z_all));
        dail::FrameView next = dail::view_from_state(spec, idx, env.state());
        std::vector<double> part_style(P);
        for (int p = 0; p < P; ++p)
          part_style[p] = dail::style_reward(
              discs[p].eval(parts.transition_features(p, view, next)));
        rb_sum += dail::combined_style_reward(part_style);
        view = std::move(next);
        ++executed;
        if (env.horizon_reached()) break;
      }

      const InteractionState s_next = interaction_state(graph_from_sim(
          spec, idx, scene.hand_frames, env.state(), cfg.contact_threshold));
      VectorXd trans(2 * s.dim());
      trans.head(s.dim()) = s.pack();
      trans.tail(s.dim()) = s_next.pack();
      const double r_s = skill_style_reward(d_interaction.eval(trans));
      const double d_og = env.object_goal_distance();
      const bool first = d_og < cfg.task.success_eps && !bonus_paid;
      if (first) bonus_paid = true;
      const double r_g = task_reward(d_og, first, cfg.task);
      const double r_b = rb_sum / executed;
      report.mean_r_g += r_g;
      report.mean_r_s += r_s;
      report.mean_r_b += r_b;
      report.mean_reward += skill_reward(r_g, r_s, r_b, cfg.weights);
      ++decisions;
    }
    if (env.task_success()) report.success_rate += 1.0;
  }
  report.success_rate /= episodes;
  if (decisions > 0) {
    report.mean_r_g /= static_cast<double>(decisions);
    report.mean_r_s /= static_cast<double>(decisions);
    report.mean_r_b /= static_cast<double>(decisions);
    report.mean_reward /= static_cast<double>(decisions);
  }
  return report;
}

PerturbationReport perturbation_recovery(
    const SkillPolicy& policy, const dail::BehaviorController& controller,
    const EmbodimentSpec& spec, const sim::SceneConfig& scene,
    const SkillConfig& cfg, double speed_threshold, double window_s,
    int episodes, std::uint64_t seed) {
  if (episodes <= 0) throw std::invalid_argument("need at least one episode");
  if (scene.perturbations.empty())
    throw std::invalid_argument("perturbation recovery needs a perturbed scene");
  if (scene.objects.empty())
    throw std::invalid_argument("evaluation needs a scene object");
  double t_imp = scene.perturbations.front().apply_time;
  for (const auto& p : scene.perturbations)
    t_imp = std::min(t_imp, p.apply_time);

  TreeIndex idx(spec);
  PerturbationReport report;
  report.episodes = episodes;
  int recovered = 0;
  for (int ep = 0; ep < episodes; ++ep) {
    sim::Environment env(spec, scene, seed,
                         9000 + static_cast<std::uint64_t>(ep));
    double t_rec = -1.0;
    while (!env.horizon_reached() && !env.task_success()) {
      const InteractionState s = interaction_state(graph_from_sim(
          spec, idx, scene.hand_frames, env.state(), cfg.contact_threshold));
      const VectorXd goal7 =
          goal_in_root(env.state().root, env.state().objects[0].goal);
      const VectorXd z_all = policy.act(env.observation(), s, goal7);
      for (int step = 0; step < cfg.k; ++step) {
        env.step(controller.act(env.observation(), z_all));
        const double speed = env.state().root_lin_vel.head<2>().norm();
        if (env.time() > t_imp && t_rec < 0.0 && speed < speed_threshold)
          t_rec = env.time();
        if (env.horizon_reached()) break;
      }
    }
    if (env.task_success()) report.success_rate += 1.0;
    if (t_rec >= 0.0 && t_rec - t_imp <= window_s) {
      ++recovered;
      const double dt_rec = t_rec - t_imp;
      report.mean_recovery_s += dt_rec;
      report.max_recovery_s = std::max(report.max_recovery_s, dt_rec);
    }
  }
  report.success_rate /= episodes;
  report.recovered_rate = static_cast<double>(recovered) / episodes;
  if (recovered > 0) report.mean_recovery_s /= recovered;
  return report;
}

}  // namespace xembod::skill
