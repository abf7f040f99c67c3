// Command-line harness: run experiments, sweep one axis, execute the
// acceptance suite, probe projection distortion, inspect buffer checkpoints.
//
// Every flag of `run` and `sweep` can come from a key-value config file
// (--config); keys are the long option names without dashes. Precedence:
// explicit flag > UDS_OUT_DIR (output directory only) > config file > default.

#include <CLI11.hpp>

#include <cstdlib>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "uds/acceptance.hpp"
#include "uds/harness.hpp"

namespace {

using namespace uds;

struct RunOptions {
  RunConfig config;
  std::string policy = "uds";
  std::string arch = "tiny-mlp";
  std::string optimizer = "adam";
  std::string out;
};

void finalize(RunOptions& opts, bool out_flag_given) {
  if (auto scorer = scorer_from_string(opts.policy))
    opts.config.sel.scorer = *scorer;
  else
    throw CLI::ValidationError("--policy", "unknown policy '" + opts.policy + "'");
  if (opts.arch == "tiny-mlp")
    opts.config.model.arch = ToyArch::TinyMLP;
  else if (opts.arch == "linear-softmax")
    opts.config.model.arch = ToyArch::LinearSoftmax;
  else
    throw CLI::ValidationError("--arch", "unknown architecture '" + opts.arch + "'");
  if (opts.optimizer == "adam")
    opts.config.optimizer = OptKind::Adam;
  else if (opts.optimizer == "sgd")
    opts.config.optimizer = OptKind::SGD;
  else
    throw CLI::ValidationError("--optimizer", "unknown optimizer '" + opts.optimizer + "'");
  const char* env_out = std::getenv("UDS_OUT_DIR");
  if (!out_flag_given && env_out && *env_out) opts.out = env_out;
  opts.config.out_dir = opts.out;
  opts.config.corpus.vocab = opts.config.model.vocab;
  opts.config.validate();
}

// One named setter per config-file key; CLI flags reuse the same storage, so
// command-line values override file values parsed beforehand.
std::map<std::string, std::function<void(const std::string&)>> file_appliers(
    RunOptions& o) {
  auto as_int = [](const std::string& v) { return std::stoi(v); };
  auto as_i64 = [](const std::string& v) { return std::stoll(v); };
  auto as_double = [](const std::string& v) { return std::stod(v); };
  auto as_bool = [](const std::string& v) {
    if (v == "true" || v == "1" || v == "yes") return true;
    if (v == "false" || v == "0" || v == "no") return false;
    throw std::invalid_argument("config: boolean expected, got '" + v + "'");
  };
  return {
      {"policy", [&o](const std::string& v) { o.policy = v; }},
      {"arch", [&o](const std::string& v) { o.arch = v; }},
      {"optimizer", [&o](const std::string& v) { o.optimizer = v; }},
      {"out", [&o](const std::string& v) { o.out = v; }},
      {"alpha", [&o, as_double](const std::string& v) { o.config.sel.alpha = as_double(v); }},
      {"batch-size", [&o, as_int](const std::string& v) { o.config.sel.batch_size = as_int(v); }},
      {"select-k", [&o, as_int](const std::string& v) { o.config.sel.select_k = as_int(v); }},
      {"buffer-capacity",
       [&o, as_int](const std::string& v) { o.config.sel.buffer_capacity = as_int(v); }},
      {"d1", [&o, as_int](const std::string& v) { o.config.sel.d1 = as_int(v); }},
      {"d2", [&o, as_int](const std::string& v) { o.config.sel.d2 = as_int(v); }},
      {"normalize-intra",
       [&o, as_bool](const std::string& v) { o.config.sel.normalize_intra_by_rows = as_bool(v); }},
      {"response-only",
       [&o, as_bool](const std::string& v) { o.config.sel.response_only_scoring = as_bool(v); }},
      {"vocab", [&o, as_int](const std::string& v) { o.config.model.vocab = as_int(v); }},
      {"context", [&o, as_int](const std::string& v) { o.config.model.context = as_int(v); }},
      {"embed-dim", [&o, as_int](const std::string& v) { o.config.model.embed_dim = as_int(v); }},
      {"hidden-dim", [&o, as_int](const std::string& v) { o.config.model.hidden_dim = as_int(v); }},
      {"clusters", [&o, as_int](const std::string& v) { o.config.corpus.num_clusters = as_int(v); }},
      {"duplication", [&o, as_int](const std::string& v) { o.config.corpus.duplication = as_int(v); }},
      {"distinct", [&o, as_int](const std::string& v) { o.config.corpus.num_distinct = as_int(v); }},
      {"repetitive",
       [&o, as_int](const std::string& v) { o.config.corpus.num_repetitive = as_int(v); }},
      {"eval-samples",
       [&o, as_int](const std::string& v) { o.config.corpus.eval_samples = as_int(v); }},
      {"sample-len", [&o, as_int](const std::string& v) { o.config.corpus.sample_len = as_int(v); }},
      {"prompt-len", [&o, as_int](const std::string& v) { o.config.corpus.prompt_len = as_int(v); }},
      {"dup-noise", [&o, as_double](const std::string& v) { o.config.corpus.dup_noise = as_double(v); }},
      {"chain-noise",
       [&o, as_double](const std::string& v) { o.config.corpus.chain_noise = as_double(v); }},
      {"lr", [&o, as_double](const std::string& v) { o.config.lr = as_double(v); }},
      {"beta1", [&o, as_double](const std::string& v) { o.config.beta1 = as_double(v); }},
      {"beta2", [&o, as_double](const std::string& v) { o.config.beta2 = as_double(v); }},
      {"adam-eps", [&o, as_double](const std::string& v) { o.config.adam_eps = as_double(v); }},
      {"steps", [&o, as_int](const std::string& v) { o.config.steps = as_int(v); }},
      {"eval-interval",
       [&o, as_int](const std::string& v) { o.config.eval_interval = as_int(v); }},
      {"probe-correlation",
       [&o, as_bool](const std::string& v) { o.config.probe_correlation = as_bool(v); }},
      {"seed", [&o, as_i64](const std::string& v) {
         o.config.master_seed = static_cast<std::uint64_t>(as_i64(v));
       }},
  };
}

void apply_config_file(const std::string& path, RunOptions& opts) {
  const auto kv = parse_config_file(path);
  auto appliers = file_appliers(opts);
  for (const auto& [key, value] : kv) {
    const auto it = appliers.find(key);
    if (it == appliers.end())
      throw std::invalid_argument("config: unknown key '" + key + "'");
    it->second(value);
  }
}

void add_run_options(CLI::App* cmd, RunOptions& o, std::string& config_path) {
  cmd->add_option("--config", config_path, "key-value config file");
  cmd->add_option("--policy", o.policy, "uds | maxloss | maxgrad | random | regular");
  cmd->add_option("--arch", o.arch, "tiny-mlp | linear-softmax");
  cmd->add_option("--optimizer", o.optimizer, "adam | sgd");
  cmd->add_option("--alpha", o.config.sel.alpha, "diversity trade-off factor");
  cmd->add_option("--batch-size", o.config.sel.batch_size, "candidate batch size B");
  cmd->add_option("--select-k", o.config.sel.select_k, "samples trained per step K");
  cmd->add_option("--buffer-capacity", o.config.sel.buffer_capacity, "FIFO capacity M");
  cmd->add_option("--d1", o.config.sel.d1, "projected vocabulary dimension");
  cmd->add_option("--d2", o.config.sel.d2, "projected sequence dimension");
  cmd->add_flag("--normalize-intra", o.config.sel.normalize_intra_by_rows,
                "divide the nuclear norm by the scored row count");
  cmd->add_flag("--response-only", o.config.sel.response_only_scoring,
                "score response positions only");
  cmd->add_option("--vocab", o.config.model.vocab, "vocabulary size");
  cmd->add_option("--context", o.config.model.context, "context window");
  cmd->add_option("--embed-dim", o.config.model.embed_dim, "embedding width");
  cmd->add_option("--hidden-dim", o.config.model.hidden_dim, "hidden width (tiny-mlp)");
  cmd->add_option("--clusters", o.config.corpus.num_clusters, "near-duplicate clusters");
  cmd->add_option("--duplication", o.config.corpus.duplication, "members per cluster");
  cmd->add_option("--distinct", o.config.corpus.num_distinct, "distinct walks");
  cmd->add_option("--repetitive", o.config.corpus.num_repetitive, "motif-tiled samples");
  cmd->add_option("--eval-samples", o.config.corpus.eval_samples, "held-out eval size");
  cmd->add_option("--sample-len", o.config.corpus.sample_len, "tokens per sample");
  cmd->add_option("--prompt-len", o.config.corpus.prompt_len, "prompt prefix length");
  cmd->add_option("--dup-noise", o.config.corpus.dup_noise, "within-cluster substitution rate");
  cmd->add_option("--chain-noise", o.config.corpus.chain_noise, "walk deviation rate");
  cmd->add_option("--lr", o.config.lr, "learning rate");
  cmd->add_option("--beta1", o.config.beta1, "Adam beta1");
  cmd->add_option("--beta2", o.config.beta2, "Adam beta2");
  cmd->add_option("--adam-eps", o.config.adam_eps, "Adam epsilon");
  cmd->add_option("--steps", o.config.steps, "training steps");
  cmd->add_option("--eval-interval", o.config.eval_interval, "steps between metric rows");
  cmd->add_flag("--probe-correlation", o.config.probe_correlation,
                "log per-sample loss deltas and per-batch correlations");
  cmd->add_option("--seed", o.config.master_seed, "master seed");
  cmd->add_option("--out", o.out, "output directory for logs and checkpoints");
}

int do_run(RunOptions& opts) {
  const RunSummary summary = run_experiment(opts.config);
  std::cout << "policy            " << summary.policy << "\n"
            << "steps             " << summary.steps << "\n"
            << "trained samples   " << summary.trained_samples << "\n"
            << "final eval loss   " << summary.final_eval_loss << "\n";
  if (!summary.batch_correlations.empty())
    std::cout << "median batch corr " << summary.median_batch_correlation << "\n";
  if (!opts.config.out_dir.empty())
    std::cout << "artifacts in      " << opts.config.out_dir << "\n";
  return 0;
}

int do_sweep(RunOptions& opts, const std::string& axis_name,
             const std::vector<double>& values) {
  const auto axis = sweep_axis_from_string(axis_name);
  if (!axis) {
    std::cerr << "unknown sweep axis '" << axis_name << "'\n";
    return 1;
  }
  const SweepSummary summary = run_sweep(opts.config, *axis, values);
  std::cout << summary.render();
  return 0;
}

int do_accept(const std::vector<int>& only, const std::string& report_path) {
  const auto print = [](const CriterionResult& r) {
    std::printf("[%s] %02d %-24s (%7.2fs)  %s\n", r.pass ? "PASS" : "FAIL", r.id,
                r.name.c_str(), r.seconds, r.detail.c_str());
    std::fflush(stdout);
  };
  const auto results = run_acceptance(20260801ull, only, print);
  if (!report_path.empty()) {
    std::ofstream out(report_path);
    out << format_report(results);
    std::cout << "report written to " << report_path << "\n";
  }
  bool all_pass = true;
  for (const auto& r : results) all_pass = all_pass && r.pass;
  std::cout << (all_pass ? "ACCEPTANCE PASS" : "ACCEPTANCE FAIL") << "\n";
  return all_pass ? 0 : 1;
}

int do_probe_jl(Index rows, Index cols, int points, int seeds,
                const std::vector<Index>& d1s, const std::vector<Index>& d2s) {
  if (d1s.size() != d2s.size())
    throw std::invalid_argument("probe-jl: --d1 and --d2 need the same number of values");
  std::cout << "d1\td2\td\tmedian_max_distortion\tworst_max_distortion\n";
  for (std::size_t di = 0; di < d1s.size(); ++di) {
    std::vector<double> maxes;
    for (int s = 0; s < seeds; ++s) {
      Rng rng(std::uint64_t(s), "probe-jl-points");
      std::vector<LogitsMatrix<double>> cloud;
      for (int p = 0; p < points; ++p) {
        MatrixX<double> m(rows, cols);
        for (Index c = 0; c < cols; ++c)
          for (Index r = 0; r < rows; ++r) m(r, c) = rng.gauss();
        cloud.emplace_back(std::move(m));
      }
      const auto [g1, g2] =
          build_projection<double>(cols, rows, d1s[di], d2s[di], 5000 + std::uint64_t(s));
      maxes.push_back(jl_distortion_probe(cloud, g1, g2).max_distortion);
    }
    std::sort(maxes.begin(), maxes.end());
    const double median = maxes.size() % 2
                              ? maxes[maxes.size() / 2]
                              : 0.5 * (maxes[maxes.size() / 2 - 1] + maxes[maxes.size() / 2]);
    std::cout << d1s[di] << "\t" << d2s[di] << "\t" << d1s[di] * d2s[di] << "\t"
              << median << "\t" << maxes.back() << "\n";
  }
  return 0;
}

int do_inspect_buffer(const std::string& path) {
  const auto buffer = buffer_from_json(load_json(path));
  std::cout << "capacity       " << buffer.capacity() << "\n"
            << "dimension      " << buffer.dim() << "\n"
            << "occupancy      " << buffer.size() << "\n"
            << "total pushed   " << buffer.total_pushed() << "\n";
  const Index show = std::min<Index>(buffer.size(), 8);
  for (Index i = 0; i < show; ++i) {
    const auto& e = buffer.entries()[std::size_t(i)];
    std::cout << "  [" << i << "] step " << e.source_step << " sample "
              << e.source_sample << " |z| " << e.data.norm() << "\n";
  }
  if (buffer.size() > show) std::cout << "  ... " << buffer.size() - show << " more\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"UDS online batch selection harness"};
  app.require_subcommand(1);

  RunOptions run_opts, sweep_opts;
  std::string run_config_path, sweep_config_path;
  auto* run_cmd = app.add_subcommand("run", "run one experiment");
  add_run_options(run_cmd, run_opts, run_config_path);

  auto* sweep_cmd = app.add_subcommand("sweep", "run one experiment per axis value");
  std::string sweep_axis = "alpha";
  std::vector<double> sweep_values;
  add_run_options(sweep_cmd, sweep_opts, sweep_config_path);
  sweep_cmd->add_option("--axis", sweep_axis, "alpha | K | d1 | d2 | M")->required();
  sweep_cmd->add_option("--values", sweep_values, "axis values")
      ->required()
      ->delimiter(',');

  auto* accept_cmd = app.add_subcommand("accept", "run the acceptance suite");
  std::vector<int> accept_only;
  std::string report_path;
  accept_cmd->add_option("--only", accept_only, "criterion ids to run")->delimiter(',');
  accept_cmd->add_option("--report", report_path, "write a JSONL report here");

  auto* probe_cmd = app.add_subcommand("probe-jl", "projection distortion study");
  Index probe_rows = 64, probe_cols = 128;
  int probe_points = 32, probe_seeds = 20;
  std::vector<Index> probe_d1{8, 16, 32, 64}, probe_d2{8, 16, 32, 64};
  probe_cmd->add_option("--rows", probe_rows, "sequence length N");
  probe_cmd->add_option("--cols", probe_cols, "vocabulary size V");
  probe_cmd->add_option("--points", probe_points, "points per cloud");
  probe_cmd->add_option("--seeds", probe_seeds, "independent factor seeds");
  probe_cmd->add_option("--d1", probe_d1, "projected vocab dims")->delimiter(',');
  probe_cmd->add_option("--d2", probe_d2, "projected sequence dims")->delimiter(',');

  auto* inspect_cmd = app.add_subcommand("inspect-buffer", "dump a buffer checkpoint");
  std::string buffer_path;
  inspect_cmd->add_option("--file", buffer_path, "buffer checkpoint JSON")->required();

  // config files are applied before CLI11 writes flag values, so flags win
  try {
    // manual pre-scan for --config (CLI11 config support does not know the
    // space-separated form the file format allows)
    for (int i = 1; i < argc; ++i) {
      const std::string arg = argv[i];
      std::string path;
      if (arg == "--config" && i + 1 < argc)
        path = argv[i + 1];
      else if (arg.rfind("--config=", 0) == 0)
        path = arg.substr(9);
      if (!path.empty()) {
        apply_config_file(path, run_opts);
        apply_config_file(path, sweep_opts);
      }
    }
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }

  try {
    if (run_cmd->parsed()) {
      finalize(run_opts, run_cmd->count("--out") > 0);
      return do_run(run_opts);
    }
    if (sweep_cmd->parsed()) {
      finalize(sweep_opts, sweep_cmd->count("--out") > 0);
      return do_sweep(sweep_opts, sweep_axis, sweep_values);
    }
    if (accept_cmd->parsed()) return do_accept(accept_only, report_path);
    if (probe_cmd->parsed())
      return do_probe_jl(probe_rows, probe_cols, probe_points, probe_seeds,
                         probe_d1, probe_d2);
    if (inspect_cmd->parsed()) return do_inspect_buffer(buffer_path);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
