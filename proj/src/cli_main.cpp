#include <CLI11.hpp>

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "rigs.hpp"
#include "xembod/dail.hpp"
#include "xembod/json_io.hpp"
#include "xembod/kinematics.hpp"
#include "xembod/manifest.hpp"
#include "xembod/motion.hpp"
#include "xembod/sim.hpp"
#include "xembod/skill.hpp"
#include "xembod/transfer.hpp"

namespace fs = std::filesystem;
using namespace xembod;

namespace {

using Clock = std::chrono::steady_clock;

struct RunScope {
  // collects everything the manifest needs while a command runs
  RunManifest manifest;
  fs::path out;
  Clock::time_point start = Clock::now();

  RunScope(const std::string& command, const fs::path& out_dir)
      : out(out_dir) {
    fs::create_directories(out);
    manifest.command = command;
    manifest.git_revision = git_revision_for(fs::current_path().string());
    manifest.created_at = utc_timestamp_now();
  }

  void input(const std::string& label, const std::string& path) {
    manifest.inputs[label] = path;
  }

  fs::path artifact(const std::string& rel) { return out / rel; }

  void record_artifact(const std::string& rel) {
    manifest.artifacts[rel] = hash_file((out / rel).string());
  }

  void finish() {
    manifest.wall_clock_s =
        std::chrono::duration<double>(Clock::now() - start).count();
    save_manifest((out / "manifest.json").string(), manifest);
    std::cout << "wrote " << (out / "manifest.json").string() << "\n";
  }
};

EmbodimentSpec load_spec_checked(const std::string& path) {
  EmbodimentSpec spec = load_spec(path);
  const auto issues = kin::validate_spec(spec);
  if (!issues.empty()) {
    std::string msg = path + ": invalid embodiment spec";
    for (const auto& s : issues) msg += "\n  " + s;
    throw std::runtime_error(msg);
  }
  return spec;
}

void print_curve_tail(const std::vector<std::string>& header,
                      const std::vector<std::vector<double>>& curves) {
  if (curves.empty()) return;
  const auto& last = curves.back();
  std::cout << "final:";
  for (std::size_t i = 0; i < header.size() && i < last.size(); ++i)
    std::cout << " " << header[i] << "=" << last[i];
  std::cout << "\n";
}

std::string sanitize_id(const std::string& id) {
  std::string s = id;
  for (char& c : s)
    if (!std::isalnum(static_cast<unsigned char>(c))) c = '_';
  return s;
}

// ---- training runs, shared between direct invocation and `rerun` ----------

void run_pretrain(const Json& config,
                  const std::map<std::string, std::string>& inputs,
                  const fs::path& out) {
  RunScope rs("pretrain", out);
  rs.manifest.config = config;
  for (const auto& [k, v] : inputs) rs.input(k, v);

  const dail::PretrainConfig cfg = dail::pretrain_config_from_json(config);
  rs.manifest.seeds["train"] = cfg.seed;

  const EmbodimentSpec spec = load_spec_checked(inputs.at("spec"));
  const dail::PartitionScheme scheme =
      dail::load_partition(inputs.at("partition"));
  const sim::SceneConfig scene = sim::load_scene(inputs.at("scene"), spec);
  std::vector<motion::MotionClip> demos;
  for (int i = 0; inputs.count("demo" + std::to_string(i)); ++i)
    demos.push_back(motion::load_clip(inputs.at("demo" + std::to_string(i))));
  if (demos.empty()) throw std::runtime_error("pretrain needs at least one demo clip");

  dail::PretrainResult res =
      dail::pretrain_behavior(demos, spec, scheme, scene, cfg);

  save_json_file(dail::controller_to_json(res.controller),
                 rs.artifact("controller.json").string());
  rs.record_artifact("controller.json");
  for (std::size_t p = 0; p < res.discriminators.size(); ++p) {
    const std::string id = sanitize_id(res.discriminators[p].part_id);
    const std::string dname = "disc_" + id + ".json";
    save_json_file(dail::discriminator_to_json(res.discriminators[p]),
                   rs.artifact(dname).string());
    rs.record_artifact(dname);
    const std::string ename = "enc_" + id + ".json";
    save_json_file(dail::encoder_to_json(res.encoders[p]),
                   rs.artifact(ename).string());
    rs.record_artifact(ename);
  }
  write_curves_csv(rs.artifact("curves.csv").string(), res.curve_header,
                   res.curves);
  rs.record_artifact("curves.csv");
  rs.finish();
  std::cout << "env steps: " << res.total_env_steps << "\n";
  print_curve_tail(res.curve_header, res.curves);
}

void run_train_skill(const Json& config,
                     const std::map<std::string, std::string>& inputs,
                     const fs::path& out) {
  RunScope rs("train-skill", out);
  rs.manifest.config = config;
  for (const auto& [k, v] : inputs) rs.input(k, v);

  const skill::SkillConfig cfg = skill::skill_config_from_json(config);
  rs.manifest.seeds["train"] = cfg.seed;

  const EmbodimentSpec spec = load_spec_checked(inputs.at("spec"));
  const sim::SceneConfig scene = sim::load_scene(inputs.at("scene"), spec);
  const dail::BehaviorController controller =
      dail::controller_from_json(load_json_file(inputs.at("controller")));
  std::vector<dail::PartDiscriminator> discs;
  for (int i = 0; inputs.count("disc" + std::to_string(i)); ++i)
    discs.push_back(dail::discriminator_from_json(
        load_json_file(inputs.at("disc" + std::to_string(i)))));
  std::vector<motion::MotionClip> demos;
  for (int i = 0; inputs.count("demo" + std::to_string(i)); ++i)
    demos.push_back(motion::load_clip(inputs.at("demo" + std::to_string(i))));
  if (demos.empty())
    throw std::runtime_error("train-skill needs at least one demo clip");

  skill::TrainSkillResult res =
      skill::train_skill(controller, discs, demos, spec, scene, cfg);

  save_json_file(skill::skill_policy_to_json(res.policy),
                 rs.artifact("skill_policy.json").string());
  rs.record_artifact("skill_policy.json");
  save_json_file(dail::discriminator_to_json(res.d_interaction),
                 rs.artifact("d_interaction.json").string());
  rs.record_artifact("d_interaction.json");
  write_curves_csv(rs.artifact("curves.csv").string(), res.curve_header,
                   res.curves);
  rs.record_artifact("curves.csv");
  rs.finish();
  std::cout << "env steps: " << res.total_env_steps << "\n";
  print_curve_tail(res.curve_header, res.curves);
}

void run_transfer(const Json& config,
                  const std::map<std::string, std::string>& inputs,
                  const fs::path& out) {
  RunScope rs("transfer", out);
  rs.manifest.config = config;
  for (const auto& [k, v] : inputs) rs.input(k, v);

  const Json roll = config.value("rollout", Json::object());
  const int rollout_k = roll.value("k", 2);
  const double contact_threshold = roll.value("contact_threshold", 0.05);
  const std::uint64_t rollout_seed = roll.value("seed", std::uint64_t{1});
  const double scale =
      config.value("retarget", Json::object()).value("scale", 0.0);
  const transfer::TransferConfig cfg = transfer::transfer_config_from_json(
      config.value("fine_tune", Json::object()));
  rs.manifest.seeds["rollout"] = rollout_seed;
  rs.manifest.seeds["fine_tune"] = cfg.seed;

  const EmbodimentSpec src_spec = load_spec_checked(inputs.at("source_spec"));
  const EmbodimentSpec tgt_spec = load_spec_checked(inputs.at("target_spec"));
  const skill::SkillPolicy sp =
      skill::skill_policy_from_json(load_json_file(inputs.at("skill")));
  const dail::BehaviorController src_ctrl =
      dail::controller_from_json(load_json_file(inputs.at("controller")));
  const dail::BehaviorController tgt_ctrl = dail::controller_from_json(
      load_json_file(inputs.at("target_controller")));
  std::vector<dail::PartDiscriminator> tgt_discs;
  for (int i = 0; inputs.count("target_disc" + std::to_string(i)); ++i)
    tgt_discs.push_back(dail::discriminator_from_json(
        load_json_file(inputs.at("target_disc" + std::to_string(i)))));
  const sim::SceneConfig scene_src =
      sim::load_scene(inputs.at("scene"), src_spec);
  const sim::SceneConfig scene_tgt =
      sim::load_scene(inputs.at("scene"), tgt_spec);

  motion::MotionClip rollout = transfer::rollout_policy_to_clip(
      sp, src_ctrl, src_spec, scene_src, rollout_k, contact_threshold,
      rollout_seed);
  save_clip(rollout, rs.artifact("rollout_source.json").string());
  rs.record_artifact("rollout_source.json");
  std::cout << "source rollout: " << rollout.frames.size() << " frames, success="
            << rollout.meta.value("success", false) << "\n";

  motion::RetargetConfig rcfg;
  rcfg.scale = scale;
  motion::RetargetReport rrep;
  motion::MotionClip reference = transfer::deploy_cross_embodiment(
      rollout, src_spec, tgt_spec, rcfg, &rrep);
  save_clip(reference, rs.artifact("reference.json").string());
  rs.record_artifact("reference.json");
  std::cout << "retarget: mean_pos_error=" << rrep.mean_pos_error
            << " max_pos_error=" << rrep.max_pos_error
            << " ik_failures=" << rrep.ik_failures << "\n";

  transfer::FineTuneResult res =
      transfer::fine_tune(tgt_ctrl, tgt_discs, reference, tgt_spec, scene_tgt,
                          cfg);
  save_json_file(transfer::fine_tune_layer_to_json(res.layer),
                 rs.artifact("finetune_layer.json").string());
  rs.record_artifact("finetune_layer.json");
  write_curves_csv(rs.artifact("curves.csv").string(), res.curve_header,
                   res.curves);
  rs.record_artifact("curves.csv");
  rs.finish();
  std::cout << "env steps: " << res.total_env_steps << "\n";
  print_curve_tail(res.curve_header, res.curves);
}

// ---- flag plumbing --------------------------------------------------------

struct CommonOverrides {
  std::int64_t seed = -1;
  int iterations = -1;
  int envs = -1;
  int workers = -1;
  int horizon = -1;

  void add_to(CLI::App* cmd) {
    cmd->add_option("--seed", seed, "override config seed");
    cmd->add_option("--iterations", iterations, "override training iterations");
    cmd->add_option("--envs", envs, "override environment count");
    cmd->add_option("--workers", workers, "override worker thread cap");
    cmd->add_option("--horizon", horizon, "override per-iteration horizon");
  }

  void apply(Json& cfg) const {
    if (seed >= 0) cfg["seed"] = static_cast<std::uint64_t>(seed);
    if (iterations >= 0) cfg["iterations"] = iterations;
    if (envs >= 0) cfg["envs"] = envs;
    if (workers >= 0) cfg["workers"] = workers;
    if (horizon >= 0) cfg["horizon"] = horizon;
  }
};

Json load_config_or_empty(const std::string& path) {
  if (path.empty()) return Json::object();
  return load_json_file(path);
}

std::map<std::string, std::string> indexed_inputs(
    const std::string& prefix, const std::vector<std::string>& paths) {
  std::map<std::string, std::string> m;
  for (std::size_t i = 0; i < paths.size(); ++i)
    m[prefix + std::to_string(i)] = paths[i];
  return m;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"cross-embodiment skill transfer toolkit"};
  app.require_subcommand(1);
  int rc = 0;

  // validate-spec
  {
    auto* cmd = app.add_subcommand("validate-spec",
                                   "check an embodiment spec for structural errors");
    auto spec_path = std::make_shared<std::string>();
    cmd->add_option("--spec", *spec_path, "embodiment spec json")
        ->required()->check(CLI::ExistingFile);
    cmd->callback([spec_path, &rc]() {
      const EmbodimentSpec spec = load_spec(*spec_path);
      const auto issues = kin::validate_spec(spec);
      if (issues.empty()) {
        std::cout << "ok: " << spec.name << " (" << spec.joint_count()
                  << " joints, " << spec.links.size() << " links)\n";
      } else {
        for (const auto& s : issues) std::cout << "issue: " << s << "\n";
        rc = 1;
      }
    });
  }

  // retarget
  {
    auto* cmd = app.add_subcommand("retarget",
                                   "map a motion clip onto another body");
    struct Args {
      std::string clip, src, tgt, out;
      double scale = 0.0;
      std::vector<std::string> map;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--clip", a->clip, "source motion clip json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--source-spec", a->src, "source embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--target-spec", a->tgt, "target embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a->out, "output directory")->required();
    cmd->add_option("--scale", a->scale,
                    "world scale, 0 = root height ratio");
    cmd->add_option("--map", a->map,
                    "part mapping source=target (repeatable)");
    cmd->callback([a]() {
      RunScope rs("retarget", a->out);
      rs.input("clip", a->clip);
      rs.input("source_spec", a->src);
      rs.input("target_spec", a->tgt);

      const EmbodimentSpec src = load_spec_checked(a->src);
      const EmbodimentSpec tgt = load_spec_checked(a->tgt);
      const motion::MotionClip clip = motion::load_clip(a->clip);
      motion::RetargetConfig cfg;
      cfg.scale = a->scale;
      for (const auto& m : a->map) {
        const auto eq = m.find('=');
        if (eq == std::string::npos)
          throw std::runtime_error("--map expects source=target, got: " + m);
        cfg.part_map.emplace_back(m.substr(0, eq), m.substr(eq + 1));
      }
      Json jc;
      jc["scale"] = a->scale;
      jc["part_map"] = Json::array();
      for (const auto& [s, t] : cfg.part_map)
        jc["part_map"].push_back(Json::array({s, t}));
      rs.manifest.config = jc;

      motion::RetargetReport rep;
      const motion::MotionClip out_clip =
          motion::retarget_clip(clip, src, tgt, cfg, &rep);
      save_clip(out_clip, rs.artifact("retargeted.json").string());
      rs.record_artifact("retargeted.json");
      rs.finish();
      std::cout << "mean_pos_error: " << rep.mean_pos_error << "\n"
                << "max_pos_error: " << rep.max_pos_error << "\n"
                << "ik_failures: " << rep.ik_failures << "\n";
    });
  }

  // pretrain
  {
    auto* cmd = app.add_subcommand(
        "pretrain", "adversarial imitation pretraining of a behavior controller");
    struct Args {
      std::vector<std::string> demos;
      std::string spec, partition, scene, config, out;
      CommonOverrides ov;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--demos", a->demos, "demo clip jsons")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--spec", a->spec, "embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--partition", a->partition, "body partition json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--scene", a->scene, "scene json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", a->config, "pretraining config json")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", a->out, "output directory")->required();
    a->ov.add_to(cmd);
    cmd->callback([a]() {
      Json cfg = load_config_or_empty(a->config);
      a->ov.apply(cfg);
      const Json frozen =
          dail::pretrain_config_to_json(dail::pretrain_config_from_json(cfg));
      auto inputs = indexed_inputs("demo", a->demos);
      inputs["spec"] = a->spec;
      inputs["partition"] = a->partition;
      inputs["scene"] = a->scene;
      run_pretrain(frozen, inputs, a->out);
    });
  }

  // train-skill
  {
    auto* cmd = app.add_subcommand(
        "train-skill", "train a task policy on top of a frozen controller");
    struct Args {
      std::string controller;
      std::vector<std::string> discs, demos;
      std::string spec, scene, config, out;
      CommonOverrides ov;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--controller", a->controller, "behavior controller json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--discs", a->discs,
                    "behavior discriminators, partition order")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--demos", a->demos, "demo clips with object tracks")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--spec", a->spec, "embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--scene", a->scene, "scene json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", a->config, "skill training config json")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", a->out, "output directory")->required();
    a->ov.add_to(cmd);
    cmd->callback([a]() {
      Json cfg = load_config_or_empty(a->config);
      a->ov.apply(cfg);
      const Json frozen =
          skill::skill_config_to_json(skill::skill_config_from_json(cfg));
      auto inputs = indexed_inputs("demo", a->demos);
      for (const auto& [k, v] : indexed_inputs("disc", a->discs))
        inputs[k] = v;
      inputs["controller"] = a->controller;
      inputs["spec"] = a->spec;
      inputs["scene"] = a->scene;
      run_train_skill(frozen, inputs, a->out);
    });
  }

  // transfer
  {
    auto* cmd = app.add_subcommand(
        "transfer",
        "roll out a trained skill, retarget it, fine-tune the target body");
    struct Args {
      std::string skill, controller, src, tgt, tgt_controller;
      std::vector<std::string> tgt_discs;
      std::string scene, config, out;
      CommonOverrides ov;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--skill", a->skill, "trained skill policy json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--controller", a->controller,
                    "source behavior controller json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--source-spec", a->src, "source embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--target-spec", a->tgt, "target embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--target-controller", a->tgt_controller,
                    "pretrained target behavior controller")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--target-discs", a->tgt_discs,
                    "target behavior discriminators, partition order")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--scene", a->scene, "scene json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", a->config,
                    "transfer config json (rollout/retarget/fine_tune)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--out", a->out, "output directory")->required();
    a->ov.add_to(cmd);
    cmd->callback([a]() {
      Json cfg = load_config_or_empty(a->config);
      Json ft = cfg.value("fine_tune", Json::object());
      a->ov.apply(ft);
      Json frozen;
      Json roll = cfg.value("rollout", Json::object());
      frozen["rollout"] = Json::object();
      frozen["rollout"]["k"] = roll.value("k", 2);
      frozen["rollout"]["contact_threshold"] =
          roll.value("contact_threshold", 0.05);
      frozen["rollout"]["seed"] = roll.value("seed", std::uint64_t{1});
      frozen["retarget"] = Json::object();
      frozen["retarget"]["scale"] =
          cfg.value("retarget", Json::object()).value("scale", 0.0);
      frozen["fine_tune"] = transfer::transfer_config_to_json(
          transfer::transfer_config_from_json(ft));
      auto inputs = indexed_inputs("target_disc", a->tgt_discs);
      inputs["skill"] = a->skill;
      inputs["controller"] = a->controller;
      inputs["source_spec"] = a->src;
      inputs["target_spec"] = a->tgt;
      inputs["target_controller"] = a->tgt_controller;
      inputs["scene"] = a->scene;
      run_transfer(frozen, inputs, a->out);
    });
  }

  // eval
  {
    auto* cmd = app.add_subcommand(
        "eval", "evaluate a trained artifact with deterministic rollouts");
    struct Args {
      std::string policy, controller, d_interaction, reference;
      std::vector<std::string> discs;
      std::string spec, scene, config, out;
      int episodes = 20;
      std::uint64_t seed = 7;
      int k = 2;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--policy", a->policy,
                    "controller, skill policy, or fine-tune layer json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--controller", a->controller,
                    "behavior controller (skill / fine-tune eval)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--discs", a->discs,
                    "behavior discriminators, partition order")
        ->check(CLI::ExistingFile);
    cmd->add_option("--d-interaction", a->d_interaction,
                    "interaction discriminator (skill eval)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--reference", a->reference,
                    "reference clip (fine-tune eval)")
        ->check(CLI::ExistingFile);
    cmd->add_option("--spec", a->spec, "embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--scene", a->scene, "scene json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", a->config, "skill config json")
        ->check(CLI::ExistingFile);
    cmd->add_option("--episodes", a->episodes, "episode count");
    cmd->add_option("--seed", a->seed, "evaluation seed");
    cmd->add_option("--k", a->k, "decision stride (fine-tune eval)");
    cmd->add_option("--out", a->out, "output directory")->required();
    cmd->callback([a]() {
      RunScope rs("eval", a->out);
      rs.input("policy", a->policy);
      rs.input("spec", a->spec);
      rs.input("scene", a->scene);
      rs.manifest.seeds["eval"] = a->seed;

      const EmbodimentSpec spec = load_spec_checked(a->spec);
      const sim::SceneConfig scene = sim::load_scene(a->scene, spec);
      const Json pj = load_json_file(a->policy);
      const std::string kind = pj.value("format", "");
      Json report;
      report["episodes"] = a->episodes;
      report["seed"] = a->seed;

      auto load_discs = [&]() {
        std::vector<dail::PartDiscriminator> discs;
        for (std::size_t i = 0; i < a->discs.size(); ++i) {
          rs.input("disc" + std::to_string(i), a->discs[i]);
          discs.push_back(
              dail::discriminator_from_json(load_json_file(a->discs[i])));
        }
        return discs;
      };

      if (kind == "xembod-controller-v1") {
        const auto ctrl = dail::controller_from_json(pj);
        const auto discs = load_discs();
        if (discs.empty())
          throw std::runtime_error("behavior eval needs --discs");
        const double style = dail::eval_style_reward(ctrl, discs, spec, scene,
                                                     a->episodes, a->seed);
        report["kind"] = "behavior";
        report["mean_style"] = style;
        std::cout << "mean_style: " << style << "\n";
      } else if (kind == "xembod-skill-v1") {
        if (a->controller.empty() || a->d_interaction.empty())
          throw std::runtime_error(
              "skill eval needs --controller and --d-interaction");
        rs.input("controller", a->controller);
        rs.input("d_interaction", a->d_interaction);
        const auto sp = skill::skill_policy_from_json(pj);
        const auto ctrl =
            dail::controller_from_json(load_json_file(a->controller));
        const auto di = dail::discriminator_from_json(
            load_json_file(a->d_interaction));
        const auto discs = load_discs();
        if (discs.empty()) throw std::runtime_error("skill eval needs --discs");
        const skill::SkillConfig cfg =
            skill::skill_config_from_json(load_config_or_empty(a->config));
        const auto rep = skill::eval_skill(sp, ctrl, di, discs, spec, scene,
                                           cfg, a->episodes, a->seed);
        report["kind"] = "skill";
        report["success_rate"] = rep.success_rate;
        report["mean_r_g"] = rep.mean_r_g;
        report["mean_r_s"] = rep.mean_r_s;
        report["mean_r_b"] = rep.mean_r_b;
        report["mean_reward"] = rep.mean_reward;
        std::cout << "success_rate: " << rep.success_rate << "\n"
                  << "mean_r_g: " << rep.mean_r_g << "\n"
                  << "mean_r_s: " << rep.mean_r_s << "\n"
                  << "mean_r_b: " << rep.mean_r_b << "\n"
                  << "mean_reward: " << rep.mean_reward << "\n";
      } else if (kind == "xembod-finetune-v1") {
        if (a->controller.empty() || a->reference.empty())
          throw std::runtime_error(
              "fine-tune eval needs --controller and --reference");
        rs.input("controller", a->controller);
        rs.input("reference", a->reference);
        const auto layer = transfer::fine_tune_layer_from_json(pj);
        const auto ctrl =
            dail::controller_from_json(load_json_file(a->controller));
        const auto discs = load_discs();
        if (discs.empty())
          throw std::runtime_error("fine-tune eval needs --discs");
        const auto ref = motion::load_clip(a->reference);
        const auto rep =
            transfer::eval_fine_tuned(layer, ctrl, discs, ref, spec, scene,
                                      a->k, a->episodes, a->seed);
        report["kind"] = "transfer";
        report["success_rate"] = rep.success_rate;
        report["mean_tracking"] = rep.mean_tracking;
        report["mean_style"] = rep.mean_style;
        std::cout << "success_rate: " << rep.success_rate << "\n"
                  << "mean_tracking: " << rep.mean_tracking << "\n"
                  << "mean_style: " << rep.mean_style << "\n";
      } else {
        throw std::runtime_error("unrecognized policy artifact format: \"" +
                                 kind + "\"");
      }
      save_json_file(report, rs.artifact("eval.json").string());
      rs.record_artifact("eval.json");
      rs.manifest.config = report;
      rs.finish();
    });
  }

  // perturb
  {
    auto* cmd = app.add_subcommand(
        "perturb", "impulse-recovery evaluation of a trained skill policy");
    struct Args {
      std::string skill, controller, spec, scene, config, out;
      std::vector<double> impulse{1.0, 0.0};
      double at = 2.0;
      double threshold = 0.1;
      double window = 2.0;
      int episodes = 20;
      std::uint64_t seed = 7;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--skill", a->skill, "trained skill policy json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--controller", a->controller, "behavior controller json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--spec", a->spec, "embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--scene", a->scene, "scene json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--config", a->config, "skill config json")
        ->check(CLI::ExistingFile);
    cmd->add_option("--impulse", a->impulse, "planar impulse fx fy, N*s")
        ->expected(2);
    cmd->add_option("--at", a->at, "impulse time, s");
    cmd->add_option("--threshold", a->threshold, "recovery speed, m/s");
    cmd->add_option("--window", a->window, "recovery window, s");
    cmd->add_option("--episodes", a->episodes, "episode count");
    cmd->add_option("--seed", a->seed, "evaluation seed");
    cmd->add_option("--out", a->out, "output directory")->required();
    cmd->callback([a]() {
      RunScope rs("perturb", a->out);
      rs.input("skill", a->skill);
      rs.input("controller", a->controller);
      rs.input("spec", a->spec);
      rs.input("scene", a->scene);
      rs.manifest.seeds["eval"] = a->seed;

      const EmbodimentSpec spec = load_spec_checked(a->spec);
      sim::SceneConfig scene = sim::load_scene(a->scene, spec);
      sim::Perturbation p;
      p.impulse = Vector3d(a->impulse[0], a->impulse[1], 0.0);
      p.apply_time = a->at;
      scene.perturbations.push_back(p);

      const auto sp =
          skill::skill_policy_from_json(load_json_file(a->skill));
      const auto ctrl =
          dail::controller_from_json(load_json_file(a->controller));
      const skill::SkillConfig cfg =
          skill::skill_config_from_json(load_config_or_empty(a->config));
      const auto rep = skill::perturbation_recovery(
          sp, ctrl, spec, scene, cfg, a->threshold, a->window, a->episodes,
          a->seed);

      Json report;
      report["impulse"] = Json::array({a->impulse[0], a->impulse[1]});
      report["apply_time"] = a->at;
      report["threshold"] = a->threshold;
      report["window_s"] = a->window;
      report["episodes"] = rep.episodes;
      report["seed"] = a->seed;
      report["success_rate"] = rep.success_rate;
      report["recovered_rate"] = rep.recovered_rate;
      report["mean_recovery_s"] = rep.mean_recovery_s;
      report["max_recovery_s"] = rep.max_recovery_s;
      rs.manifest.config = report;
      save_json_file(report, rs.artifact("perturb.json").string());
      rs.record_artifact("perturb.json");
      rs.finish();
      std::cout << "success_rate: " << rep.success_rate << "\n"
                << "recovered_rate: " << rep.recovered_rate << "\n"
                << "mean_recovery_s: " << rep.mean_recovery_s << "\n"
                << "max_recovery_s: " << rep.max_recovery_s << "\n";
    });
  }

  // export-anim
  {
    auto* cmd = app.add_subcommand(
        "export-anim", "per-frame link positions of a clip as csv");
    struct Args {
      std::string clip, spec, out;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--clip", a->clip, "motion clip json")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--spec", a->spec, "embodiment spec")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a->out, "output directory")->required();
    cmd->callback([a]() {
      RunScope rs("export-anim", a->out);
      rs.input("clip", a->clip);
      rs.input("spec", a->spec);
      const EmbodimentSpec spec = load_spec_checked(a->spec);
      const motion::MotionClip clip = motion::load_clip(a->clip);
      if (clip.embodiment != spec.name)
        throw std::runtime_error("clip embodiment \"" + clip.embodiment +
                                 "\" does not match spec \"" + spec.name +
                                 "\"");
      const TreeIndex idx(spec);
      const fs::path csv = rs.artifact("anim.csv");
      std::ofstream out_file(csv);
      if (!out_file)
        throw std::runtime_error("cannot write " + csv.string());
      out_file << "frame,t,link,x,y,z\n";
      char buf[40];
      for (std::size_t i = 0; i < clip.frames.size(); ++i) {
        const auto& fr = clip.frames[i];
        const kin::LinkPoses poses =
            kin::forward_kinematics(spec, idx, fr.root, fr.q);
        for (std::size_t l = 0; l < spec.links.size(); ++l) {
          out_file << i << ",";
          std::snprintf(buf, sizeof(buf), "%.17g", fr.t);
          out_file << buf << "," << spec.links[l].name;
          for (int c = 0; c < 3; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", poses.at(static_cast<int>(l)).position[c]);
            out_file << "," << buf;
          }
          out_file << "\n";
        }
      }
      out_file.close();
      rs.record_artifact("anim.csv");
      rs.manifest.config = Json::object();
      rs.finish();
      std::cout << "rows: " << clip.frames.size() * spec.links.size() << "\n";
    });
  }

  // rerun
  {
    auto* cmd = app.add_subcommand(
        "rerun", "replay a training command from its manifest");
    struct Args {
      std::string manifest, out;
    };
    auto a = std::make_shared<Args>();
    cmd->add_option("--manifest", a->manifest, "manifest json of a past run")
        ->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", a->out, "output directory")->required();
    cmd->callback([a]() {
      const RunManifest m = load_manifest(a->manifest);
      for (const auto& [label, path] : m.inputs)
        if (!fs::exists(path))
          throw std::runtime_error("manifest input \"" + label +
                                   "\" missing on disk: " + path);
      if (m.command == "pretrain") {
        run_pretrain(m.config, m.inputs, a->out);
      } else if (m.command == "train-skill") {
        run_train_skill(m.config, m.inputs, a->out);
      } else if (m.command == "transfer") {
        run_transfer(m.config, m.inputs, a->out);
      } else {
        throw std::runtime_error("rerun supports training commands only, got: " +
                                 m.command);
      }
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return rc;
}
