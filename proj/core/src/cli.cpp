#include "pact/cli.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace pact::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string fmt_g(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

int line_of_byte(const std::string& text, size_t byte) {
  int line = 1;
  for (size_t i = 0; i < byte && i < text.size(); ++i)
    if (text[i] == '\n') ++line;
  return line;
}

void reject_unknown_keys(const json& obj, const std::set<std::string>& allowed,
                         const std::string& section) {
  for (auto it = obj.begin(); it != obj.end(); ++it)
    if (!allowed.count(it.key()))
      throw ConfigError("unknown key '" + it.key() + "' in " + section);
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
  out << content;
}

std::map<std::string, std::string> checkpoint_meta(const ExperimentConfig& cfg) {
  return {
      {"estimator", train_method_name(cfg.train.method)},
      {"optimizer", optimizer_name(cfg.train.resolved_optimizer())},
      {"mode", block_mode_name(cfg.train.training_mode())},
      {"tau", fmt_g(cfg.train.tau)},
      {"lambda", fmt_g(cfg.train.lambda)},
      {"delta", fmt_g(cfg.train.delta)},
      {"epsilon", fmt_g(cfg.train.epsilon)},
      {"seed", std::to_string(cfg.train.seed)},
      {"task", make_task_for(cfg.model)->name()},
  };
}

BlockOptions options_from_meta(const std::map<std::string, std::string>& meta) {
  BlockOptions opts;
  if (auto it = meta.find("lambda"); it != meta.end()) opts.lambda = std::stod(it->second);
  if (auto it = meta.find("delta"); it != meta.end()) opts.delta = std::stod(it->second);
  if (auto it = meta.find("epsilon"); it != meta.end()) opts.epsilon = std::stod(it->second);
  return opts;
}

}  // namespace

std::string default_out_dir() {
  if (const char* env = std::getenv("PACT_OUT_DIR")) return env;
  return "runs";
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  return from_json_text(read_file(path), path);
}

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text,
                                                  const std::string& origin) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ConfigError(origin + ":" + std::to_string(line_of_byte(text, e.byte)) +
                      ": malformed config: " + e.what());
  }
  if (!doc.is_object()) throw ConfigError(origin + ": config root must be an object");

  ExperimentConfig cfg;
  try {
    reject_unknown_keys(doc, {"model", "train", "eval", "output"}, "config root");
    if (doc.contains("model")) {
      const json& m = doc["model"];
      reject_unknown_keys(m,
                          {"kind", "blocks", "max_iterations", "width", "input_dim", "classes",
                           "channels", "height", "grouping", "hidden", "embed"},
                          "model section");
      cfg.model.kind = m.value("kind", std::string("residual_stack"));
      for (auto it = m.begin(); it != m.end(); ++it)
        if (it.key() != "kind") cfg.model.fields[it.key()] = it.value().get<int>();
    } else {
      cfg.model.kind = "residual_stack";
    }

    if (doc.contains("train")) {
      const json& t = doc["train"];
      reject_unknown_keys(t,
                          {"estimator", "optimizer", "learning_rate", "momentum", "steps",
                           "batch_size", "tau", "lambda", "delta", "epsilon", "weight_decay",
                           "seed", "log_every", "decay_milestones", "decay_factor"},
                          "train section");
      if (t.contains("estimator"))
        cfg.train.method = train_method_from_name(t["estimator"].get<std::string>());
      if (t.contains("optimizer"))
        cfg.train.optimizer = optimizer_from_name(t["optimizer"].get<std::string>());
      if (t.contains("learning_rate")) cfg.train.learning_rate = t["learning_rate"].get<double>();
      cfg.train.momentum = t.value("momentum", cfg.train.momentum);
      cfg.train.steps = t.value("steps", cfg.train.steps);
      cfg.train.batch_size = t.value("batch_size", cfg.train.batch_size);
      cfg.train.tau = t.value("tau", cfg.train.tau);
      cfg.train.lambda = t.value("lambda", cfg.train.lambda);
      cfg.train.delta = t.value("delta", cfg.train.delta);
      cfg.train.epsilon = t.value("epsilon", cfg.train.epsilon);
      cfg.train.weight_decay = t.value("weight_decay", cfg.train.weight_decay);
      cfg.train.seed = t.value("seed", cfg.train.seed);
      cfg.train.log_every = t.value("log_every", cfg.train.log_every);
      cfg.train.decay_factor = t.value("decay_factor", cfg.train.decay_factor);
      if (t.contains("decay_milestones"))
        cfg.train.decay_milestones = t["decay_milestones"].get<std::vector<double>>();
    }

    if (doc.contains("eval")) {
      const json& e = doc["eval"];
      reject_unknown_keys(e, {"modes", "examples", "seed"}, "eval section");
      if (e.contains("modes")) cfg.eval.modes = e["modes"].get<std::vector<std::string>>();
      cfg.eval.examples = e.value("examples", cfg.eval.examples);
      cfg.eval.seed = e.value("seed", cfg.eval.seed);
    }

    if (doc.contains("output")) {
      const json& o = doc["output"];
      reject_unknown_keys(o, {"dir"}, "output section");
      cfg.out_dir = o.value("dir", std::string());
    }
    if (cfg.out_dir.empty()) cfg.out_dir = default_out_dir();
    // model-kind sanity: instantiating validates the fields
    make_model(cfg.model, 0);
    make_task_for(cfg.model);
    for (const auto& mode : cfg.eval.modes) block_mode_from_name(mode);
  } catch (const ConfigError&) {
    throw;
  } catch (const std::exception& e) {
    throw ConfigError(origin + ": invalid config value: " + std::string(e.what()));
  }
  return cfg;
}

std::string ExperimentConfig::resolved_json() const {
  json j;
  ModelSpec resolved = make_model(model, 0)->spec();
  j["model"]["kind"] = resolved.kind;
  for (const auto& [k, v] : resolved.fields) j["model"][k] = v;
  j["train"] = {{"estimator", train_method_name(train.method)},
                {"optimizer", optimizer_name(train.resolved_optimizer())},
                {"learning_rate", train.resolved_learning_rate()},
                {"momentum", train.momentum},
                {"steps", train.steps},
                {"batch_size", train.batch_size},
                {"tau", train.tau},
                {"lambda", train.lambda},
                {"delta", train.delta},
                {"epsilon", train.epsilon},
                {"weight_decay", train.weight_decay},
                {"seed", train.seed},
                {"log_every", train.log_every},
                {"decay_milestones", train.decay_milestones},
                {"decay_factor", train.decay_factor}};
  j["eval"] = {{"modes", eval.modes}, {"examples", eval.examples}, {"seed", eval.seed}};
  j["output"] = {{"dir", out_dir}};
  return j.dump(2) + "\n";
}

namespace {

// Shared by train/sweep: trains one model and writes metrics, checkpoint and
// resolved config under `dir`. Returns the result plus the trained model.
struct RunOutput {
  TrainResult result;
  std::unique_ptr<Model> model;
  std::unique_ptr<Task> task;
};

RunOutput run_training(const ExperimentConfig& cfg, const fs::path& dir) {
  fs::create_directories(dir);
  write_file(dir / "resolved_config.json", cfg.resolved_json());

  RunOutput out;
  out.model = make_model(cfg.model, RngStream::root(cfg.train.seed).derive("model-init").next_u64());
  out.task = make_task_for(cfg.model);

  std::ofstream metrics(dir / "metrics.csv", std::ios::binary);
  if (!metrics) throw std::runtime_error("cannot write metrics.csv under " + dir.string());
  out.result = train(*out.model, cfg.train, *out.task, &metrics);
  metrics.close();

  save_checkpoint((dir / "checkpoint.pact").string(), *out.model, checkpoint_meta(cfg));
  return out;
}

}  // namespace

int cmd_train(const std::string& config_path, const CommonOverrides& ov) {
  try {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    if (ov.seed) cfg.train.seed = *ov.seed;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;

    RunOutput run = run_training(cfg, cfg.out_dir);
    if (run.result.diverged) {
      std::cerr << "training diverged at step " << run.result.final_step
                << " (non-finite loss); see metrics.csv diagnostic row\n";
      return 1;
    }
    size_t head_params = 0;
    for (const auto& e : run.model->params().entries())
      if (e.is_head) head_params += e.value.size();
    const size_t total = run.model->params().total_size();
    const MetricsRow& last = run.result.rows.back();
    std::cout << "trained " << run.result.final_step << " steps; train accuracy "
              << last.accuracy << "; parameters " << total << " (" << total - head_params
              << " body, " << head_params << " halting head); outputs in " << cfg.out_dir
              << "\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_eval(const std::string& checkpoint_path, const std::string& mode_name, int examples,
             uint64_t seed, const std::optional<std::string>& out_dir) {
  try {
    if (!fs::exists(checkpoint_path)) throw ConfigError("checkpoint '" + checkpoint_path + "' not found");
    Checkpoint ckpt = load_checkpoint(checkpoint_path);
    const BlockMode mode = block_mode_from_name(mode_name);
    const BlockOptions opts = options_from_meta(ckpt.meta);
    auto task = make_task_for(ckpt.spec);

    if (auto it = ckpt.meta.find("mode"); it != ckpt.meta.end() && it->second != mode_name)
      std::cout << "note: mode switch (trained " << it->second << ", evaluating " << mode_name
                << ")\n";

    EvalResult res = evaluate(*ckpt.model, mode, opts, *task, examples, seed);
    const std::string header = eval_header(ckpt.model->block_count());
    const std::string row = eval_row_csv(res);
    std::cout << header << "\n" << row << "\n";

    fs::path dir = out_dir ? fs::path(*out_dir) : fs::path(checkpoint_path).parent_path();
    if (dir.empty()) dir = ".";
    fs::create_directories(dir);
    write_file(dir / ("eval_" + mode_name + ".csv"), header + "\n" + row + "\n");
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_sweep_tau(const std::string& config_path, const std::vector<double>& taus,
                  const CommonOverrides& ov) {
  try {
    if (taus.empty()) throw ConfigError("sweep-tau: need at least one tau value");
    ExperimentConfig base = ExperimentConfig::from_file(config_path);
    if (ov.seed) base.train.seed = *ov.seed;
    if (ov.out_dir) base.out_dir = *ov.out_dir;
    const fs::path root = base.out_dir;
    fs::create_directories(root);

    std::string csv = "tau,accuracy,mean_flops,mean_n\n";
    for (double tau : taus) {
      ExperimentConfig cfg = base;
      cfg.train.tau = tau;
      cfg.out_dir = (root / ("tau_" + fmt_g(tau))).string();
      RunOutput run = run_training(cfg, cfg.out_dir);
      if (run.result.diverged) {
        std::cerr << "sweep-tau: run tau=" << tau << " diverged\n";
        return 1;
      }
      const BlockMode eval_mode = cfg.train.method == TrainMethod::kAct
                                      ? BlockMode::kAct
                                      : BlockMode::kDiscrete;
      EvalResult res = evaluate(*run.model, eval_mode, cfg.train.block_options(), *run.task,
                                cfg.eval.examples, cfg.eval.seed);
      double total_n = 0.0;
      for (double n : res.mean_n) total_n += n;
      csv += fmt_g(tau) + "," + fmt_g(res.accuracy) + "," + fmt_g(res.mean_flops) + "," +
             fmt_g(total_n) + "\n";
    }
    write_file(root / "sweep_tau.csv", csv);
    std::cout << csv;
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_variance(const std::string& config_path, const std::vector<int>& groupings,
                 const CommonOverrides& ov) {
  try {
    ExperimentConfig cfg = ExperimentConfig::from_file(config_path);
    if (ov.seed) cfg.train.seed = *ov.seed;
    if (ov.out_dir) cfg.out_dir = *ov.out_dir;
    if (cfg.model.kind != "grid")
      throw ConfigError("variance: config model kind must be 'grid', got '" + cfg.model.kind +
                        "'");
    if (groupings.empty()) throw ConfigError("variance: need at least one grouping");
    for (int g : groupings) {
      ModelSpec probe = cfg.model;
      probe.fields["grouping"] = g;
      try {
        make_model(probe, 0);
      } catch (const std::exception& e) {
        throw ConfigError("variance: grouping " + std::to_string(g) + " rejected: " + e.what());
      }
    }

    fs::create_directories(cfg.out_dir);
    write_file(fs::path(cfg.out_dir) / "resolved_config.json", cfg.resolved_json());

    std::vector<VarianceRun> runs = variance_bench(cfg.model, cfg.train, groupings);
    std::string csv = "m,estimator,step,grad_logvar,final_accuracy,flops\n";
    for (const auto& run : runs)
      for (const auto& [step, lv] : run.probe)
        csv += std::to_string(run.latent_count) + "," + train_method_name(run.method) + "," +
               std::to_string(step) + "," + fmt_g(lv) + "," + fmt_g(run.final_accuracy) + "," +
               fmt_g(run.final_flops) + "\n";
    write_file(fs::path(cfg.out_dir) / "variance.csv", csv);
    std::cout << "variance benchmark: " << runs.size() << " runs; wrote " << cfg.out_dir
              << "/variance.csv\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

int cmd_ponder_demo(const std::vector<double>& tail, const std::optional<std::string>& out_dir) {
  try {
    std::vector<double> t = tail;
    if (t.empty()) t = {1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0};
    for (double h : t)
      if (!(h >= 0.0 && h <= 1.0)) throw ConfigError("ponder-demo: tail probabilities must be in [0,1]");
    auto curve = ponder_demo(t);
    std::string csv = "h1,rho\n";
    for (const auto& [h1, rho] : curve) csv += fmt_g(h1) + "," + fmt_g(rho) + "\n";
    const fs::path dir = out_dir ? fs::path(*out_dir) : fs::path(default_out_dir());
    fs::create_directories(dir);
    write_file(dir / "ponder_demo.csv", csv);
    std::cout << "wrote " << (dir / "ponder_demo.csv").string() << " (" << curve.size()
              << " rows)\n";
    return 0;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace pact::cli
