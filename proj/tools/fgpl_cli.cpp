#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "fgpl/pipeline/checkpoint.hpp"
#include "fgpl/pipeline/config.hpp"
#include "fgpl/pipeline/metrics.hpp"
#include "fgpl/pipeline/stages.hpp"

namespace fs = std::filesystem;
using namespace fgpl;
using namespace fgpl::pipe;

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string task;
  std::optional<std::size_t> iters;
  std::optional<std::size_t> group_size;
  std::optional<double> clip;
  std::optional<double> beta_kl;
  std::string weights;
  bool wall_time = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "INI config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "global seed");
  cmd->add_option("--out", c.out, "output directory");
  cmd->add_option("--task", c.task, "point or sequence (when no config sets it)");
  cmd->add_flag("--wall-time", c.wall_time, "fill the metrics seconds column");
}

void add_overrides(CLI::App* cmd, Common& c) {
  cmd->add_option("--iters", c.iters, "iterations of this stage");
  cmd->add_option("--group-size", c.group_size, "GRPO group size");
  cmd->add_option("--clip", c.clip, "ratio clip range");
  cmd->add_option("--beta-kl", c.beta_kl, "KL weight (pe)");
  cmd->add_option("--weights", c.weights, "reward weights a,v,i,m");
}

std::string str(double v) {
  std::ostringstream s;
  s.precision(17);
  s << v;
  return s.str();
}

ExperimentConfig build_config(const Common& c, const std::string& command) {
  ExperimentConfig cfg;
  if (!c.config.empty()) {
    cfg = load_config(c.config);
    if (!c.task.empty() && gen::parse_task(c.task) != cfg.task) {
      throw ConfigError("--task " + c.task + " contradicts the config file");
    }
  } else {
    cfg = default_config(c.task.empty() ? gen::Task::Point : gen::parse_task(c.task));
  }
  if (c.seed) set_key(cfg, "global", "seed", std::to_string(*c.seed));
  if (!c.out.empty()) set_key(cfg, "global", "out", c.out);
  if (c.wall_time) cfg.record_wall_time = true;
  if (!c.weights.empty()) set_key(cfg, "rewards", "weights", c.weights);

  const bool grpo_like = command == "rlhf" || command == "pe";
  const auto needs = [&](bool ok, const char* flag) {
    if (!ok) throw ConfigError(std::string(flag) + " does not apply to " + command);
  };
  if (c.iters) {
    const std::string n = std::to_string(*c.iters);
    if (command == "distill") {
      set_key(cfg, "distill", "stage1_iters", n);
      set_key(cfg, "distill", "stage2_iters", n);
      set_key(cfg, "distill", "stage3_iters", n);
    } else {
      needs(command != "eval", "--iters");
      set_key(cfg, command, "iters", n);
    }
  }
  if (c.group_size) {
    needs(grpo_like, "--group-size");
    set_key(cfg, command, "group_size", std::to_string(*c.group_size));
  }
  if (c.clip) {
    needs(grpo_like, "--clip");
    set_key(cfg, command, "clip", str(*c.clip));
  }
  if (c.beta_kl) {
    needs(command == "pe", "--beta-kl");
    set_key(cfg, "pe", "beta_kl", str(*c.beta_kl));
  }
  cfg.validate();
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"flow generator post-training laboratory"};
  app.require_subcommand(1);
  Common common;

  std::vector<CLI::App*> stage_cmds;
  for (const char* name : {"pretrain", "sft", "rlhf", "pe", "distill"}) {
    auto* cmd = app.add_subcommand(name, std::string("run the ") + name + " stage");
    add_common(cmd, common);
    add_overrides(cmd, common);
    stage_cmds.push_back(cmd);
  }

  auto* eval = app.add_subcommand("eval", "paired GSB comparison of two checkpoints");
  add_common(eval, common);
  std::string ckpt_a, ckpt_b, report;
  std::vector<int> prompt_ids;
  std::optional<double> delta;
  std::optional<std::size_t> samples;
  eval->add_option("--a", ckpt_a, "checkpoint A (default <out>/rlhf.ckpt)");
  eval->add_option("--b", ckpt_b, "checkpoint B (default <out>/sft.ckpt)");
  eval->add_option("--prompts", prompt_ids, "prompt ids (default: all)")->delimiter(',');
  eval->add_option("--delta", delta, "GSB threshold");
  eval->add_option("--samples", samples, "samples per prompt");
  eval->add_option("--report", report, "report path prefix (default <out>/eval)");
  eval->add_option("--weights", common.weights, "reward weights a,v,i,m");

  auto* plot = app.add_subcommand("plot", "render a metrics CSV as SVG");
  std::string csv, svg;
  plot->add_option("csv", csv, "metrics CSV")->required()->check(CLI::ExistingFile);
  plot->add_option("svg", svg, "output SVG (default: CSV path with .svg)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (plot->parsed()) {
      if (svg.empty()) svg = fs::path(csv).replace_extension(".svg").string();
      plot_metrics(csv, svg);
      std::cout << "wrote " << svg << "\n";
      return 0;
    }
    for (auto* cmd : stage_cmds) {
      if (!cmd->parsed()) continue;
      const auto cfg = build_config(common, cmd->get_name());
      const auto out = run_stage(parse_stage(cmd->get_name()), cfg, std::cerr);
      std::cout << out.summary << "\n";
      for (const auto& a : out.artifacts) std::cout << "  " << a << "\n";
      return 0;
    }
    if (eval->parsed()) {
      auto cfg = build_config(common, "eval");
      if (samples) set_key(cfg, "eval", "samples", std::to_string(*samples));
      if (ckpt_a.empty()) ckpt_a = checkpoint_path(cfg, Stage::Rlhf);
      if (ckpt_b.empty()) ckpt_b = checkpoint_path(cfg, Stage::Sft);
      if (report.empty()) report = (fs::path(cfg.out_dir) / "eval").string();
      if (prompt_ids.empty() && eval->count("--prompts") == 0) {
        prompt_ids = gen::default_prompts(cfg.task).ids();
      }
      const auto rep = evaluate(ckpt_a, ckpt_b, cfg, prompt_ids, delta.value_or(cfg.eval.delta), std::cerr);
      std::ofstream(report + ".csv") << eval_csv(rep);
      std::ofstream(report + "_summary.txt") << eval_summary(rep);
      std::cout << eval_summary(rep) << "wrote " << report << ".csv\n";
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
