#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "../src/rigs.hpp"
#include "xembod/transfer.hpp"

using namespace xembod;

namespace {

// minimal trained stack on a short-horizon carry scene
struct TransferStack {
  EmbodimentSpec spec = rigs::mobile_arm();
  sim::SceneConfig scene;
  std::vector<motion::MotionClip> demos;
  dail::PretrainResult pre;
  skill::TrainSkillResult trained;
  motion::MotionClip rollout;

  TransferStack() {
    scene = rigs::carry_box_scene(spec);
    scene.horizon = 1.5;
    demos = rigs::carry_box_demos(spec, scene);

    dail::PretrainConfig pcfg;
    pcfg.latent_dim = 4;
    pcfg.policy_hidden = {16};
    pcfg.value_hidden = {16};
    pcfg.disc_hidden = {16};
    pcfg.enc_hidden = {16};
    pcfg.envs = 2;
    pcfg.workers = 2;
    pcfg.horizon = 16;
    pcfg.iterations = 2;
    pcfg.disc_batch = 32;
    pcfg.ppo.minibatch = 16;
    pcfg.seed = 3;
    pre = dail::pretrain_behavior(demos, spec,
                                  rigs::whole_body_partition(spec, true),
                                  scene, pcfg);

    skill::SkillConfig scfg;
    scfg.policy_hidden = {16};
    scfg.value_hidden = {16};
    scfg.disc_hidden = {16};
    scfg.envs = 2;
    scfg.workers = 2;
    scfg.horizon = 6;
    scfg.iterations = 1;
    scfg.disc_batch = 16;
    scfg.ppo.minibatch = 16;
    scfg.seed = 5;
    trained = skill::train_skill(pre.controller, pre.discriminators, demos,
                                 spec, scene, scfg);

    rollout = transfer::rollout_policy_to_clip(trained.policy, pre.controller,
                                               spec, scene, 2, 0.05, 17);
  }

  transfer::TransferConfig tiny_config() const {
    transfer::TransferConfig cfg;
    cfg.layer_hidden = {16};
    cfg.value_hidden = {16};
    cfg.envs = 2;
    cfg.workers = 2;
    cfg.horizon = 6;
    cfg.iterations = 2;
    cfg.ppo.minibatch = 16;
    cfg.seed = 21;
    return cfg;
  }
};

const TransferStack& stack() {
  static TransferStack s;
  return s;
}

}  // namespace

TEST_CASE("tracking reward is exact on a perfect match and decays by terms") {
  const auto spec = rigs::three_link_arm();
  const TreeIndex idx(spec);
  Rng rng(7);

  motion::Frame ref;
  ref.q = Eigen::VectorXd::Zero(spec.joint_count());
  for (int j = 0; j < spec.joint_count(); ++j)
    ref.q[j] = rng.uniform(spec.joints[j].lower_limit,
                           spec.joints[j].upper_limit);
  ref.q_dot = Eigen::VectorXd::Zero(spec.joint_count());
  ref.root = Transform::translation({0.1, 0.2, 0.7});

  sim::SimState state;
  state.joints = JointState(spec.joint_count());
  state.joints.q = ref.q;
  state.root = ref.root;

  transfer::TrackingWeights w;
  CHECK(transfer::tracking_reward(spec, idx, ref, state, w) ==
        doctest::Approx(w.w_j + w.w_r + w.w_e).epsilon(1e-12));

  SUBCASE("joint error only hits the joint term") {
    state.joints.q[0] += 0.3;
    const double got = transfer::tracking_reward(spec, idx, ref, state, w);
    const double q_err2 = 0.09;
    const auto rp = kin::forward_kinematics(spec, idx, ref.root, ref.q);
    const auto sp = kin::forward_kinematics(spec, idx, state.root,
                                            state.joints.q);
    double end_err2 = 0.0;
    for (const auto& g : spec.groups)
      end_err2 += (rp.of(spec, g.end_frame).position -
                   sp.of(spec, g.end_frame).position)
                      .squaredNorm();
    const double want = w.w_j * std::exp(-q_err2) + w.w_r +
                        w.w_e * std::exp(-end_err2);
    CHECK(got == doctest::Approx(want).epsilon(1e-12));
  }

  SUBCASE("root displacement and rotation combine in the root term") {
    state.root.position.x() += 0.2;
    state.root.orientation = quat_exp(Vector3d(0.0, 0.0, 0.1));
    const double got = transfer::tracking_reward(spec, idx, ref, state, w);
    // the arm rides the root, so end frames move with it too
    const auto rp = kin::forward_kinematics(spec, idx, ref.root, ref.q);
    const auto sp = kin::forward_kinematics(spec, idx, state.root,
                                            state.joints.q);
    double end_err2 = 0.0;
    for (const auto& g : spec.groups)
      end_err2 += (rp.of(spec, g.end_frame).position -
                   sp.of(spec, g.end_frame).position)
                      .squaredNorm();
    const double want = w.w_j + w.w_r * std::exp(-(0.04 + 0.01)) +
                        w.w_e * std::exp(-end_err2);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }

  SUBCASE("dimension mismatch is rejected") {
    motion::Frame bad = ref;
    bad.q = Eigen::VectorXd::Zero(2);
    CHECK_THROWS_AS(transfer::tracking_reward(spec, idx, bad, state, w),
                    std::invalid_argument);
  }
}

TEST_CASE("policy rollouts record clips with latent metadata") {
  const auto& s = stack();
  const auto& clip = s.rollout;

  CHECK(clip.embodiment == s.spec.name);
  CHECK(clip.fps == doctest::Approx(1.0 / s.scene.params.dt));
  CHECK(clip.frame_count() ==
        static_cast<int>(s.scene.horizon / s.scene.params.dt) + 1);
  REQUIRE(clip.objects.size() == 1);
  CHECK(clip.objects[0].poses.size() ==
        static_cast<size_t>(clip.frame_count()));
  CHECK((clip.objects[0].goal.position -
         s.scene.objects[0].goal.position)
            .norm() == 0.0);

  REQUIRE(clip.meta.is_object());
  CHECK(clip.meta.contains("success"));
  CHECK(clip.meta["decision_stride"] == 2);
  REQUIRE(clip.meta.contains("latents"));
  // one latent decision per k low-level steps, last one possibly short
  const int steps = clip.frame_count() - 1;
  CHECK(clip.meta["latents"].size() == static_cast<size_t>((steps + 1) / 2));
  const auto z0 = clip.meta["latents"][0].get<std::vector<double>>();
  CHECK(z0.size() == static_cast<size_t>(s.trained.policy.parts *
                                         s.trained.policy.latent_dim));

  // deterministic per seed, observation log aligned with frames
  std::vector<Eigen::VectorXd> obs_log;
  const auto again = transfer::rollout_policy_to_clip(
      s.trained.policy, s.pre.controller, s.spec, s.scene, 2, 0.05, 17,
      &obs_log);
  REQUIRE(again.frame_count() == clip.frame_count());
  for (int f = 0; f < clip.frame_count(); ++f)
    CHECK((again.frames[f].q - clip.frames[f].q).norm() == 0.0);
  CHECK(obs_log.size() == static_cast<size_t>(clip.frame_count()));
  CHECK(obs_log[0].size() == sim::observation_dim(
                                 s.spec,
                                 static_cast<int>(s.scene.key_frames.size())));

  const auto other = transfer::rollout_policy_to_clip(
      s.trained.policy, s.pre.controller, s.spec, s.scene, 2, 0.05, 18);
  bool same = true;
  for (int f = 0; f < clip.frame_count() && same; ++f)
    same = (other.frames[f].q - clip.frames[f].q).norm() == 0.0;
  CHECK_FALSE(same);
}

TEST_CASE("deployment rescales geometry but keeps the task goal") {
  const auto& s = stack();
  motion::RetargetConfig cfg;
  cfg.scale = 0.5;
  motion::RetargetReport rep;
  const auto out = transfer::deploy_cross_embodiment(s.rollout, s.spec, s.spec,
                                                     cfg, &rep);
  CHECK(out.embodiment == s.spec.name);
  REQUIRE(out.objects.size() == 1);
  // the object track shrinks toward the anchor, the goal does not move
  CHECK((out.objects[0].goal.position - s.rollout.objects[0].goal.position)
            .norm() == 0.0);
  bool track_moved = false;
  for (size_t f = 0; f < out.objects[0].poses.size(); ++f)
    if ((out.objects[0].poses[f].position -
         s.rollout.objects[0].poses[f].position)
            .norm() > 1e-9)
      track_moved = true;
  CHECK(track_moved);

  // onto the smaller body at natural scale
  motion::RetargetConfig natural;
  const auto small = transfer::deploy_cross_embodiment(
      s.rollout, s.spec, rigs::mobile_arm_small(), natural, &rep);
  CHECK(small.embodiment == rigs::mobile_arm_small().name);
  CHECK(small.frame_count() == s.rollout.frame_count());
  CHECK((small.objects[0].goal.position -
         s.rollout.objects[0].goal.position)
            .norm() == 0.0);
}

TEST_CASE("the fine-tune layer clamps phase and projects latents") {
  Rng rng(9);
  transfer::FineTuneLayer layer;
  layer.parts = 2;
  layer.latent_dim = 3;
  layer.obs_dim = 4;
  nn::MlpSpec trunk;
  trunk.layer_sizes = {5, 8, 6};
  layer.policy = rl::GaussianPolicy::init(trunk, rng);
  layer.input_norm = rl::RunningNorm(5);

  const Eigen::VectorXd obs = rng.normal_vector(4);
  CHECK((layer.input(1.7, obs) - layer.input(1.0, obs)).norm() == 0.0);
  CHECK((layer.input(-0.3, obs) - layer.input(0.0, obs)).norm() == 0.0);
  const auto in = layer.input(0.25, obs);
  CHECK(in[0] == 0.25);
  CHECK((in.tail(4) - obs).norm() == 0.0);

  const auto z = layer.act(0.25, obs);
  CHECK(z.segment(0, 3).norm() == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(z.segment(3, 3).norm() == doctest::Approx(1.0).epsilon(1e-12));

  const auto back =
      transfer::fine_tune_layer_from_json(transfer::fine_tune_layer_to_json(layer));
  CHECK(back.parts == 2);
  CHECK(back.latent_dim == 3);
  CHECK(back.obs_dim == 4);
  CHECK((back.act(0.25, obs) - z).norm() == 0.0);

  Eigen::VectorXd wrong(3);
  wrong.setZero();
  CHECK_THROWS_AS(layer.input(0.5, wrong), std::invalid_argument);
}

TEST_CASE("transfer configs round trip through json") {
  transfer::TransferConfig cfg;
  cfg.style_weight = 0.4;
  cfg.use_task_reward = true;
  cfg.k = 3;
  cfg.iterations = 9;
  cfg.seed = 31;
  const auto back =
      transfer::transfer_config_from_json(transfer::transfer_config_to_json(cfg));
  CHECK(back.style_weight == 0.4);
  CHECK(back.use_task_reward);
  CHECK(back.k == 3);
  CHECK(back.iterations == 9);
  CHECK(back.seed == 31);
}

TEST_CASE("fine-tuning trains the latent layer deterministically") {
  const auto& s = stack();
  const auto cfg = s.tiny_config();

  const auto r1 = transfer::fine_tune(s.pre.controller, s.pre.discriminators,
                                      s.rollout, s.spec, s.scene, cfg);
  CHECK(r1.total_env_steps == 2L * 6L * cfg.k * 2L);
  CHECK(r1.curves.size() == 2);
  REQUIRE_FALSE(r1.curve_header.empty());
  CHECK(r1.curve_header[0] == "env_steps");
  for (const auto& row : r1.curves)
    CHECK(row.size() == r1.curve_header.size());
  CHECK(r1.layer.parts == s.pre.controller.partition.part_count());
  CHECK(r1.layer.latent_dim == s.pre.controller.latent_dim);

  const auto r2 = transfer::fine_tune(s.pre.controller, s.pre.discriminators,
                                      s.rollout, s.spec, s.scene, cfg);
  CHECK((r1.layer.policy.trunk_store.p - r2.layer.policy.trunk_store.p)
            .norm() == 0.0);
  CHECK(r1.curves == r2.curves);

  auto serial = cfg;
  serial.workers = 1;
  const auto r3 = transfer::fine_tune(s.pre.controller, s.pre.discriminators,
                                      s.rollout, s.spec, s.scene, serial);
  CHECK((r1.layer.policy.trunk_store.p - r3.layer.policy.trunk_store.p)
            .norm() == 0.0);
  CHECK(r1.curves == r3.curves);

  SUBCASE("evaluation reports deterministic bounded means") {
    const auto e1 = transfer::eval_fine_tuned(r1.layer, s.pre.controller,
                                              s.pre.discriminators, s.rollout,
                                              s.spec, s.scene, cfg.k, 2, 7);
    const auto e2 = transfer::eval_fine_tuned(r1.layer, s.pre.controller,
                                              s.pre.discriminators, s.rollout,
                                              s.spec, s.scene, cfg.k, 2, 7);
    CHECK(e1.episodes == 2);
    CHECK(e1.mean_tracking > 0.0);
    CHECK(e1.mean_tracking <= 1.0);
    CHECK(e1.mean_style >= 0.0);
    CHECK(e1.mean_style <= 1.0);
    CHECK(e1.mean_tracking == e2.mean_tracking);
    CHECK(e1.mean_style == e2.mean_style);
  }
}

TEST_CASE("latent replay needs recorded latents and replays them verbatim") {
  const auto& s = stack();
  const auto rep = transfer::latent_replay_baseline(
      s.rollout, s.pre.controller, s.pre.discriminators, s.spec, s.scene, 2, 2,
      7);
  CHECK(rep.episodes == 2);
  CHECK(rep.mean_tracking > 0.0);
  const auto rep2 = transfer::latent_replay_baseline(
      s.rollout, s.pre.controller, s.pre.discriminators, s.spec, s.scene, 2, 2,
      7);
  CHECK(rep.mean_tracking == rep2.mean_tracking);

  auto bare = s.rollout;
  bare.meta = Json::object();
  CHECK_THROWS_WITH_AS(
      transfer::latent_replay_baseline(bare, s.pre.controller,
                                       s.pre.discriminators, s.spec, s.scene,
                                       2, 2, 7),
      doctest::Contains("no recorded latents"), std::runtime_error);
}
