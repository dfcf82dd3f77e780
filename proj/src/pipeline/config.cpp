#include "fgpl/pipeline/config.hpp"

#include <algorithm>
#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

#include "fgpl/diffcore/rng.hpp"
#include "fgpl/promptenh/vocab.hpp"

namespace fgpl::pipe {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

template <typename T>
T parse_number(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  T v{};
  const auto [end, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || end != s.data() + s.size() || s.empty()) {
    throw ConfigError(where + ": cannot parse '" + raw + "'");
  }
  return v;
}

bool parse_bool(const std::string& raw, const std::string& where) {
  const std::string s = trim(raw);
  if (s == "true" || s == "1" || s == "yes") return true;
  if (s == "false" || s == "0" || s == "no") return false;
  throw ConfigError(where + ": expected true or false, got '" + raw + "'");
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Field {
  std::string section;
  std::string key;
  std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Getters reuse the mutable accessor; they never write through it.
template <typename T>
Field num(std::string section, std::string key, std::function<T&(ExperimentConfig&)> ref) {
  auto cref = [ref](const ExperimentConfig& c) -> T { return ref(const_cast<ExperimentConfig&>(c)); };
  Field f{section, key, {}, {}};
  f.set = [ref](ExperimentConfig& c, const std::string& v, const std::string& where) {
    ref(c) = parse_number<T>(v, where);
  };
  if constexpr (std::is_floating_point_v<T>) {
    f.get = [cref](const ExperimentConfig& c) { return fmt(cref(c)); };
  } else {
    f.get = [cref](const ExperimentConfig& c) { return std::to_string(cref(c)); };
  }
  return f;
}

#define FGPL_SIZE(sec, key, expr) \
  num<std::size_t>(sec, key, [](ExperimentConfig& c) -> std::size_t& { return expr; })
#define FGPL_REAL(sec, key, expr) \
  num<double>(sec, key, [](ExperimentConfig& c) -> double& { return expr; })

Field flag(std::string section, std::string key, std::function<bool&(ExperimentConfig&)> ref) {
  Field f{section, key, {}, {}};
  f.set = [ref](ExperimentConfig& c, const std::string& v, const std::string& where) {
    ref(c) = parse_bool(v, where);
  };
  f.get = [ref](const ExperimentConfig& c) {
    return std::string(ref(const_cast<ExperimentConfig&>(c)) ? "true" : "false");
  };
  return f;
}

void apply_task_shapes(ExperimentConfig& c) {
  const auto prompts = gen::default_prompts(c.task);
  c.net.state_dim = prompts.state_dim();
  c.net.num_prompts = prompts.size();
  c.distill.student.frames = prompts.frames();
  c.distill.student.frame_dim = prompts.frame_dim();
  c.distill.student.num_prompts = prompts.size();
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = [] {
    std::vector<Field> t;
    Field seed{"global", "seed", {}, {}};
    seed.set = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
      c.seed = parse_number<std::uint64_t>(v, w);
    };
    seed.get = [](const ExperimentConfig& c) { return std::to_string(c.seed); };
    t.push_back(seed);
    Field task{"global", "task", {}, {}};
    task.set = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
      try {
        c.task = gen::parse_task(trim(v));
      } catch (const std::exception& e) {
        throw ConfigError(w + ": " + e.what());
      }
      apply_task_shapes(c);
    };
    task.get = [](const ExperimentConfig& c) { return gen::task_name(c.task); };
    t.push_back(task);
    Field out{"global", "out", {}, {}};
    out.set = [](ExperimentConfig& c, const std::string& v, const std::string&) { c.out_dir = trim(v); };
    out.get = [](const ExperimentConfig& c) { return c.out_dir; };
    t.push_back(out);
    t.push_back(flag("global", "record_wall_time",
                     [](ExperimentConfig& c) -> bool& { return c.record_wall_time; }));

    t.push_back(FGPL_SIZE("schedule", "steps", c.schedule.steps));
    t.push_back(FGPL_REAL("schedule", "eta", c.schedule.eta));
    t.push_back(FGPL_REAL("schedule", "t_min", c.schedule.t_min));
    t.push_back(FGPL_REAL("schedule", "t_max", c.schedule.t_max));

    t.push_back(FGPL_SIZE("data", "per_prompt", c.data.per_prompt));
    t.push_back(FGPL_REAL("data", "corruption", c.data.corruption));

    t.push_back(FGPL_SIZE("net", "hidden", c.net.hidden));
    t.push_back(FGPL_SIZE("net", "depth", c.net.depth));
    t.push_back(FGPL_SIZE("net", "prompt_dim", c.net.prompt_dim));
    t.push_back(FGPL_SIZE("net", "time_features", c.net.time_features));

    t.push_back(FGPL_SIZE("pretrain", "iters", c.pretrain.steps));
    t.push_back(FGPL_SIZE("pretrain", "batch", c.pretrain.batch));
    t.push_back(FGPL_REAL("pretrain", "lr", c.pretrain.lr));
    t.push_back(FGPL_REAL("pretrain", "grad_clip", c.pretrain.grad_clip));
    t.push_back(FGPL_SIZE("sft", "iters", c.sft.steps));
    t.push_back(FGPL_SIZE("sft", "batch", c.sft.batch));
    t.push_back(FGPL_REAL("sft", "lr", c.sft.lr));
    t.push_back(FGPL_REAL("sft", "grad_clip", c.sft.grad_clip));
    t.push_back(FGPL_SIZE("sft", "stats_samples", c.stats_samples));

    Field weights{"rewards", "weights", {}, {}};
    weights.set = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
      try {
        c.weights.w = rw::parse_weights(trim(v));
      } catch (const std::exception& e) {
        throw ConfigError(w + ": " + e.what());
      }
    };
    weights.get = [](const ExperimentConfig& c) {
      return fmt(c.weights.w[0]) + "," + fmt(c.weights.w[1]) + "," + fmt(c.weights.w[2]) + "," +
             fmt(c.weights.w[3]);
    };
    t.push_back(weights);

    t.push_back(FGPL_SIZE("rlhf", "iters", c.rlhf.iterations));
    t.push_back(FGPL_SIZE("rlhf", "group_size", c.rlhf.group_size));
    t.push_back(FGPL_SIZE("rlhf", "groups", c.rlhf.groups));
    t.push_back(FGPL_REAL("rlhf", "clip", c.rlhf.clip));
    t.push_back(FGPL_REAL("rlhf", "lr", c.rlhf.lr));
    t.push_back(FGPL_SIZE("rlhf", "inner_steps", c.rlhf.inner_steps));
    t.push_back(FGPL_REAL("rlhf", "grad_clip", c.rlhf.grad_clip));
    t.push_back(flag("rlhf", "cycle_indices",
                     [](ExperimentConfig& c) -> bool& { return c.rlhf.cycle_indices; }));

    t.push_back(FGPL_SIZE("pe", "iters", c.pe.iterations));
    t.push_back(FGPL_SIZE("pe", "group_size", c.pe.group_size));
    t.push_back(FGPL_REAL("pe", "clip", c.pe.clip));
    t.push_back(FGPL_REAL("pe", "beta_kl", c.pe.beta_kl));
    t.push_back(FGPL_REAL("pe", "lr", c.pe.lr));
    t.push_back(FGPL_SIZE("pe", "samples", c.pe.samples));
    t.push_back(FGPL_REAL("pe", "vagueness", c.pe.vagueness));
    t.push_back(FGPL_REAL("pe", "w_alignment", c.pe.weights.alignment));
    t.push_back(FGPL_REAL("pe", "w_aesthetic", c.pe.weights.aesthetic));
    t.push_back(FGPL_REAL("pe", "w_structure", c.pe.weights.structure));
    Field vocab{"pe", "vocab", {}, {}};
    vocab.set = [](ExperimentConfig& c, const std::string& v, const std::string& w) {
      try {
        pe::parse_vocab(trim(v));
      } catch (const std::exception& e) {
        throw ConfigError(w + ": " + e.what());
      }
      c.vocab = trim(v);
    };
    vocab.get = [](const ExperimentConfig& c) { return c.vocab; };
    t.push_back(vocab);

    t.push_back(FGPL_SIZE("distill", "denoise_steps", c.distill.student.steps));
    t.push_back(FGPL_SIZE("distill", "hidden", c.distill.student.hidden));
    t.push_back(FGPL_SIZE("distill", "stage1_iters", c.distill.stage1.iterations));
    t.push_back(FGPL_SIZE("distill", "stage1_warmup", c.distill.stage1.regression_warmup));
    t.push_back(FGPL_REAL("distill", "stage1_lr", c.distill.stage1.lr_gen));
    t.push_back(FGPL_SIZE("distill", "stage1_batch", c.distill.stage1.batch));
    t.push_back(FGPL_SIZE("distill", "fake_ratio", c.distill.stage1.fake_ratio));
    t.push_back(FGPL_REAL("distill", "fake_lr", c.distill.stage1.lr_fake));
    t.push_back(FGPL_REAL("distill", "regression_weight", c.distill.stage1.regression_weight));
    t.push_back(FGPL_SIZE("distill", "pairs", c.distill.pairs));
    t.push_back(FGPL_SIZE("distill", "stage2_iters", c.distill.stage2.steps));
    t.push_back(FGPL_REAL("distill", "stage2_lr", c.distill.stage2.lr));
    t.push_back(FGPL_SIZE("distill", "stage3_iters", c.distill.stage3.iterations));
    t.push_back(FGPL_REAL("distill", "stage3_lr", c.distill.stage3.lr_gen));
    t.push_back(FGPL_SIZE("distill", "stage3_batch", c.distill.stage3.batch));
    t.push_back(FGPL_SIZE("distill", "exposure_rollouts", c.distill.exposure_rollouts));
    t.push_back(FGPL_SIZE("distill", "gsb_pairs", c.distill.gsb_pairs));
    t.push_back(FGPL_REAL("distill", "delta", c.distill.delta));

    t.push_back(FGPL_SIZE("eval", "samples", c.eval.samples));
    t.push_back(FGPL_REAL("eval", "delta", c.eval.delta));
    t.push_back(FGPL_REAL("eval", "vagueness", c.eval.vagueness));
    return t;
  }();
  return table;
}

#undef FGPL_SIZE
#undef FGPL_REAL

}  // namespace

void ExperimentConfig::validate() const {
  auto wrap = [](const char* what, const std::function<void()>& f) {
    try {
      f();
    } catch (const std::invalid_argument& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    } catch (const std::domain_error& e) {
      throw ConfigError(std::string(what) + ": " + e.what());
    }
  };
  wrap("schedule", [&] { schedule.validate(); });
  wrap("rewards", [&] { weights.validate(); });
  wrap("rlhf", [&] { rlhf.validate(); });
  wrap("pe", [&] { pe.validate(); });
  wrap("pe.vocab", [&] { pe::parse_vocab(vocab); });
  wrap("distill", [&] {
    distill.student.validate();
    distill.stage1.validate();
    distill.stage3.validate();
  });
  if (out_dir.empty()) throw ConfigError("global.out: empty output directory");
  if (data.per_prompt == 0) throw ConfigError("data.per_prompt must be positive");
  if (!(data.corruption >= 0.0 && data.corruption <= 1.0)) {
    throw ConfigError("data.corruption must lie in [0, 1]");
  }
  if (stats_samples < 2) throw ConfigError("sft.stats_samples must be at least 2");
  if (eval.samples == 0) throw ConfigError("eval.samples must be positive");
  if (eval.delta < 0.0 || distill.delta < 0.0) throw ConfigError("GSB delta must be >= 0");
  if (!(eval.vagueness >= 0.0 && eval.vagueness < 1.0)) {
    throw ConfigError("eval.vagueness must lie in [0, 1)");
  }
}

ExperimentConfig default_config(gen::Task task) {
  ExperimentConfig c;
  c.task = task;
  c.vocab = pe::kDefaultVocabSpec;
  c.pretrain.steps = 3000;
  c.sft.steps = 1000;
  c.sft.lr = 1e-3;
  c.stats_samples = 250;

  c.distill.stage1.iterations = 300;
  c.distill.stage1.batch = 64;
  c.distill.stage1.lr_gen = 3e-4;
  c.distill.stage1.regression_warmup = 300;
  c.distill.stage1.regression_weight = 300;
  c.distill.stage3 = c.distill.stage1;
  c.distill.stage3.iterations = 200;
  c.distill.stage3.regression_warmup = 0;
  c.distill.stage2.steps = 1500;

  if (task == gen::Task::Sequence) {
    c.data.per_prompt = 1500;
    c.pretrain.steps = 2000;
    c.sft.steps = 800;
    // Sequence rewards are heavy-tailed; the point-task rate oscillates here.
    c.rlhf.lr = 1e-4;
  }
  apply_task_shapes(c);
  return c;
}

void set_key(ExperimentConfig& config, const std::string& section, const std::string& key,
             const std::string& value) {
  const std::string sec = section.empty() ? "global" : section;
  for (const Field& f : fields()) {
    if (f.section == sec && f.key == key) {
      f.set(config, value, sec + "." + key);
      // The fake-score settings and the regression weight are shared by both DMD stages.
      config.distill.stage3.fake_ratio = config.distill.stage1.fake_ratio;
      config.distill.stage3.lr_fake = config.distill.stage1.lr_fake;
      config.distill.stage3.regression_weight = config.distill.stage1.regression_weight;
      return;
    }
  }
  throw ConfigError("unknown config key: [" + sec + "] " + key);
}

ExperimentConfig parse_config(const std::string& text) {
  namespace bpt = boost::property_tree;
  bpt::ptree tree;
  std::istringstream in(text);
  try {
    bpt::read_ini(in, tree);
  } catch (const bpt::ini_parser_error& e) {
    throw ConfigError("config line " + std::to_string(e.line()) + ": " + e.message());
  }
  struct Entry {
    std::string section, key, value;
  };
  std::vector<Entry> entries;
  for (const auto& [name, node] : tree) {
    if (node.empty()) {
      entries.push_back({"global", name, node.data()});
      continue;
    }
    for (const auto& [key, leaf] : node) {
      if (!leaf.empty()) throw ConfigError("nested key under [" + name + "]: " + key);
      entries.push_back({name, key, leaf.data()});
    }
  }
  gen::Task task = gen::Task::Point;
  for (const auto& e : entries) {
    if (e.section == "global" && e.key == "task") {
      try {
        task = gen::parse_task(trim(e.value));
      } catch (const std::exception& ex) {
        throw ConfigError(std::string("global.task: ") + ex.what());
      }
    }
  }
  ExperimentConfig c = default_config(task);
  for (const auto& e : entries) set_key(c, e.section, e.key, e.value);
  c.validate();
  return c;
}

ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string config_text(const ExperimentConfig& config) {
  std::string out, current;
  for (const Field& f : fields()) {
    if (f.section != current) {
      if (!current.empty()) out += "\n";
      out += "[" + f.section + "]\n";
      current = f.section;
    }
    out += f.key + " = " + f.get(config) + "\n";
  }
  return out;
}

std::uint64_t config_hash(const ExperimentConfig& config) { return fnv1a64(config_text(config)); }

std::uint64_t config_hash(const ExperimentConfig& config, std::span<const std::string> sections) {
  std::string text;
  for (const Field& f : fields()) {
    if (std::find(sections.begin(), sections.end(), f.section) == sections.end()) continue;
    // Where results go and whether wall time is logged never change them.
    if (f.section == "global" && (f.key == "out" || f.key == "record_wall_time")) continue;
    text += "[" + f.section + "] " + f.key + " = " + f.get(config) + "\n";
  }
  return fnv1a64(text);
}

}  // namespace fgpl::pipe
