#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "uds/selector.hpp"
#include "uds/serialize.hpp"
#include "uds/taylor.hpp"
#include "uds/toy_lm.hpp"

namespace uds {

enum class OptKind { SGD, Adam };

inline std::string to_string(OptKind k) { return k == OptKind::SGD ? "sgd" : "adam"; }

// Everything that determines a run. Two runs with an equal RunConfig produce
// identical logs on one platform (wall-clock fields aside).
struct RunConfig {
  SelectionConfig sel;
  ToyModelConfig model;
  CorpusSpec corpus;
  OptKind optimizer = OptKind::Adam;
  double lr = 0.01;
  double beta1 = 0.9, beta2 = 0.999, adam_eps = 1e-8;
  int steps = 300;
  int eval_interval = 50;
  bool probe_correlation = false;
  std::string out_dir;  // empty: keep everything in memory only
  std::uint64_t master_seed = 0;

  void validate() const {
    sel.validate();
    corpus.validate();
    if (corpus.vocab != model.vocab)
      throw std::invalid_argument("RunConfig: corpus and model vocab differ");
    if (corpus.sample_len > model.context)
      throw std::invalid_argument("RunConfig: sample_len exceeds model context");
    if (sel.d1 > model.vocab || sel.d2 > model.context)
      throw std::invalid_argument("RunConfig: projection dims exceed (vocab, context)");
    if (steps < 1) throw std::invalid_argument("RunConfig: steps must be >= 1");
    if (eval_interval < 1)
      throw std::invalid_argument("RunConfig: eval_interval must be >= 1");
    const int train_size =
        corpus.num_clusters * corpus.duplication + corpus.num_distinct +
        corpus.num_repetitive;
    if (train_size < static_cast<int>(sel.batch_size))
      throw std::invalid_argument("RunConfig: corpus smaller than one batch");
  }
};

struct MetricsRow {
  int step = 0;
  std::string policy;
  double train_loss = 0;         // mean loss over the selected samples
  double eval_loss = 0;
  double selected_fraction = 0;  // K / B
  Index buffer_occupancy = 0;
  double batch_correlation = std::numeric_limits<double>::quiet_NaN();
  double step_wall_ms = 0;       // mean over the interval
};

struct StepScore {
  int step = 0;
  ScoreRecord record;
};

struct StepDelta {
  int step = 0;
  LossDeltaRecord record;
  UtilityClass utility = UtilityClass::TooEasy;  // cutoff: batch-median loss
};

struct RunSummary {
  std::string policy;
  int steps = 0;
  double final_eval_loss = std::numeric_limits<double>::quiet_NaN();
  double median_batch_correlation = std::numeric_limits<double>::quiet_NaN();
  std::uint64_t trained_samples = 0;
  VectorXd final_params;
  std::vector<std::uint64_t> trajectory_digests;  // per-step parameter digest
  std::vector<MetricsRow> metrics;
  std::vector<StepScore> score_log;
  std::vector<StepDelta> delta_log;
  std::vector<double> batch_correlations;
};

namespace detail {

inline std::uint64_t digest_bytes(const void* data, std::size_t len) {
  const auto* p = static_cast<const unsigned char*>(data);
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < len; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline void shuffle_indices(std::vector<std::size_t>& idx, Rng& rng) {
  for (std::size_t i = idx.size(); i > 1; --i)
    std::swap(idx[i - 1], idx[rng.below(i)]);
}

inline double median(std::vector<double> xs) {
  if (xs.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(xs.begin(), xs.end());
  const std::size_t mid = xs.size() / 2;
  return xs.size() % 2 ? xs[mid] : 0.5 * (xs[mid - 1] + xs[mid]);
}

inline json metrics_to_json(const MetricsRow& row) {
  return json{{"step", row.step},
              {"policy", row.policy},
              {"train_loss", row.train_loss},
              {"eval_loss", row.eval_loss},
              {"selected_fraction", row.selected_fraction},
              {"buffer_occupancy", row.buffer_occupancy},
              {"batch_correlation", std::isnan(row.batch_correlation)
                                        ? json(nullptr)
                                        : json(row.batch_correlation)},
              {"step_wall_ms", row.step_wall_ms}};
}

inline json score_to_json(const StepScore& s) {
  return json{{"step", s.step},
              {"sample_id", s.record.sample_id},
              {"s_intra", s.record.s_intra},
              {"s_inter", s.record.s_inter},
              {"alpha", s.record.alpha},
              {"s_total", s.record.s_total},
              {"selected", s.record.selected}};
}

inline json delta_to_json(const StepDelta& d) {
  return json{{"step", d.step},
              {"sample_id", d.record.sample_id},
              {"loss_before", d.record.loss_before},
              {"loss_after", d.record.loss_after},
              {"predicted_delta", d.record.predicted_delta},
              {"actual_delta", d.record.actual_delta},
              {"nuclear", d.record.nuclear},
              {"utility", to_string(d.utility)}};
}

}  // namespace detail

inline double mean_eval_loss(const ToyModel& model, const SyntheticCorpus& corpus) {
  if (corpus.eval.empty()) return std::numeric_limits<double>::quiet_NaN();
  double sum = 0;
  for (const auto& s : corpus.eval) sum += sample_loss(model, s);
  return sum / static_cast<double>(corpus.eval.size());
}

// Runs one experiment: draw batch, forward, score with the configured
// policy, select top-K, backprop on the selected samples only, update the
// buffer (UDS), periodic eval. All randomness comes from named substreams of
// the master seed, so policy changes never perturb corpus or batch order.
inline RunSummary run_experiment(const RunConfig& config) {
  config.validate();
  const SyntheticCorpus corpus = make_corpus(config.corpus, config.master_seed);
  ToyModel model(config.model, config.master_seed);
  const auto [g1, g2] = build_projection<double>(
      config.model.vocab, config.model.context, config.sel.d1, config.sel.d2,
      substream_seed(config.master_seed, "projection"));
  MemoryBuffer<double> buffer(config.sel.buffer_capacity,
                              config.sel.d1 * config.sel.d2);
  OptimizerState opt =
      config.optimizer == OptKind::SGD
          ? OptimizerState::sgd(config.lr)
          : OptimizerState::adam(config.lr, model.param_count(), config.beta1,
                                 config.beta2, config.adam_eps);
  Rng order_rng(config.master_seed, "batch-order");
  Rng policy_rng(config.master_seed, "policy-random");

  const Index b = config.sel.batch_size;
  const Index k_eff = config.sel.scorer == Scorer::Regular ? b : config.sel.select_k;
  const int vocab = config.model.vocab;

  RunSummary summary;
  summary.policy = to_string(config.sel.scorer);
  summary.steps = config.steps;

  std::vector<std::size_t> order(corpus.train.size());
  std::iota(order.begin(), order.end(), std::size_t(0));
  detail::shuffle_indices(order, order_rng);
  std::size_t cursor = 0;

  double wall_acc_ms = 0;
  int wall_count = 0;
  double train_loss_acc = 0;
  int train_loss_count = 0;

  for (int step = 0; step < config.steps; ++step) {
    const auto t0 = std::chrono::steady_clock::now();
    if (cursor + static_cast<std::size_t>(b) > order.size()) {
      detail::shuffle_indices(order, order_rng);
      cursor = 0;
    }
    std::vector<const Sample*> batch;
    std::vector<std::int64_t> ids;
    for (Index i = 0; i < b; ++i) {
      const Sample& s = corpus.train[order[cursor++]];
      batch.push_back(&s);
      ids.push_back(s.id);
    }

    std::vector<LogitsMatrix<double>> logits;
    std::vector<double> losses;
    logits.reserve(batch.size());
    losses.reserve(batch.size());
    for (const Sample* s : batch) {
      logits.push_back(model.forward(s->tokens));
      double loss = 0;
      for (Index r : target_rows(*s))
        loss += detail::row_cross_entropy(
            logits.back().data.row(r), s->tokens[static_cast<std::size_t>(r) + 1]);
      losses.push_back(loss / static_cast<double>(target_rows(*s).size()));
    }

    // policy scoring
    std::vector<Index> selected;
    std::vector<ScoreRecord> records;
    std::vector<VectorXd> grads(batch.size());
    std::vector<bool> have_grad(batch.size(), false);
    if (config.sel.scorer == Scorer::UDS) {
      std::vector<std::vector<Index>> masks;
      if (config.sel.response_only_scoring) {
        masks.reserve(batch.size());
        for (const Sample* s : batch) masks.push_back(target_rows(*s));
      }
      SelectionConfig sel = config.sel;
      auto result = uds_step(logits, sel, buffer, g1, g2, step, &ids,
                             config.sel.response_only_scoring ? &masks : nullptr);
      selected = std::move(result.selected);
      records = std::move(result.records);
    } else {
      std::vector<double> grad_norms;
      if (config.sel.scorer == Scorer::MaxGrad) {
        grad_norms.reserve(batch.size());
        for (std::size_t i = 0; i < batch.size(); ++i) {
          auto [loss, grad] = loss_and_grad(model, *batch[i]);
          grad_norms.push_back(grad.norm());
          grads[i] = std::move(grad);
          have_grad[i] = true;
        }
      }
      records = baseline_score(b, &losses,
                               config.sel.scorer == Scorer::MaxGrad ? &grad_norms
                                                                    : nullptr,
                               config.sel.scorer, &policy_rng);
      for (std::size_t i = 0; i < records.size(); ++i) records[i].sample_id = ids[i];
      selected = select_topk(records, k_eff);
      for (Index idx : selected)
        records[static_cast<std::size_t>(idx)].selected = true;
    }

    for (std::size_t i = 0; i < records.size(); ++i)
      summary.score_log.push_back({step, records[i]});

    // backprop on the selected samples only, in ascending batch order
    VectorXd grad_sum = VectorXd::Zero(model.param_count());
    for (Index idx : selected) {
      const std::size_t i = static_cast<std::size_t>(idx);
      if (!have_grad[i]) {
        auto [loss, grad] = loss_and_grad(model, *batch[i]);
        grads[i] = std::move(grad);
        have_grad[i] = true;
      }
      grad_sum += grads[i];
      train_loss_acc += losses[i];
      ++train_loss_count;
    }
    const VectorXd batch_grad = grad_sum / static_cast<double>(selected.size());
    summary.trained_samples += selected.size();

    // first-order predictions are made at the pre-update parameters
    std::vector<LossDeltaRecord> step_records;
    if (config.probe_correlation) {
      const VectorXd update_delta = opt.preview_delta(batch_grad);
      step_records.reserve(batch.size());
      for (std::size_t i = 0; i < batch.size(); ++i) {
        const Sample& s = *batch[i];
        LossDeltaRecord rec;
        rec.sample_id = s.id;
        rec.loss_before = losses[i];
        const MatrixXd dl = model.logits_jvp(s.tokens, update_delta);
        const auto probs = softmax_rows(logits[i]);
        rec.predicted_delta =
            predicted_loss_delta(dl, probs.data, targets_onehot(s, vocab)) /
            static_cast<double>(target_rows(s).size());
        rec.nuclear = static_cast<double>(nuclear_norm(logits[i]).nuclear);
        step_records.push_back(rec);
      }
    }

    apply_update(opt, model.params(), batch_grad);
    summary.trajectory_digests.push_back(detail::digest_bytes(
        model.params().data(),
        static_cast<std::size_t>(model.param_count()) * sizeof(double)));

    if (config.probe_correlation) {
      const double cutoff = std::max(detail::median(losses), 1e-12);
      for (std::size_t i = 0; i < batch.size(); ++i) {
        LossDeltaRecord& rec = step_records[i];
        rec.loss_after = sample_loss(model, *batch[i]);
        rec.actual_delta = rec.loss_after - rec.loss_before;
        summary.delta_log.push_back(
            {step, rec, classify_utility(rec.loss_before, rec.loss_after, cutoff)});
      }
      if (auto rho = correlation_probe(step_records))
        summary.batch_correlations.push_back(*rho);
    }

    const auto t1 = std::chrono::steady_clock::now();
    wall_acc_ms += std::chrono::duration<double, std::milli>(t1 - t0).count();
    ++wall_count;

    if ((step + 1) % config.eval_interval == 0 || step + 1 == config.steps) {
      MetricsRow row;
      row.step = step + 1;
      row.policy = summary.policy;
      row.train_loss = train_loss_count ? train_loss_acc / train_loss_count
                                        : std::numeric_limits<double>::quiet_NaN();
      row.eval_loss = mean_eval_loss(model, corpus);
      row.selected_fraction =
          static_cast<double>(k_eff) / static_cast<double>(b);
      row.buffer_occupancy = buffer.size();
      row.batch_correlation = summary.batch_correlations.empty()
                                  ? std::numeric_limits<double>::quiet_NaN()
                                  : summary.batch_correlations.back();
      row.step_wall_ms = wall_count ? wall_acc_ms / wall_count : 0.0;
      summary.metrics.push_back(row);
      wall_acc_ms = 0;
      wall_count = 0;
      train_loss_acc = 0;
      train_loss_count = 0;
    }
  }

  summary.final_eval_loss = summary.metrics.back().eval_loss;
  summary.median_batch_correlation = detail::median(summary.batch_correlations);
  summary.final_params = model.params();

  if (!config.out_dir.empty()) {
    namespace fs = std::filesystem;
    fs::create_directories(config.out_dir);
    const fs::path dir(config.out_dir);
    {
      std::ofstream out(dir / "metrics.jsonl");
      for (const auto& row : summary.metrics)
        out << detail::metrics_to_json(row).dump() << "\n";
    }
    {
      std::ofstream out(dir / "scores.jsonl");
      for (const auto& s : summary.score_log)
        out << detail::score_to_json(s).dump() << "\n";
    }
    if (!summary.delta_log.empty()) {
      std::ofstream out(dir / "deltas.jsonl");
      for (const auto& d : summary.delta_log)
        out << detail::delta_to_json(d).dump() << "\n";
    }
    save_json(factor_to_json(g1), (dir / "factor_g1.json").string());
    save_json(factor_to_json(g2), (dir / "factor_g2.json").string());
    save_json(buffer_to_json(buffer), (dir / "buffer.json").string());
    save_json(corpus_spec_to_json(config.corpus, config.master_seed),
              (dir / "corpus.json").string());
    save_model(model, (dir / "model.bin").string());
    json final_summary{{"policy", summary.policy},
                       {"steps", summary.steps},
                       {"final_eval_loss", summary.final_eval_loss},
                       {"trained_samples", summary.trained_samples},
                       {"median_batch_correlation",
                        std::isnan(summary.median_batch_correlation)
                            ? json(nullptr)
                            : json(summary.median_batch_correlation)}};
    save_json(final_summary, (dir / "summary.json").string());
  }
  return summary;
}

// --------------------------------------------------------------------------
// One-axis sweeps

enum class SweepAxis { Alpha, K, D1, D2, M };

inline std::string to_string(SweepAxis a) {
  switch (a) {
    case SweepAxis::Alpha: return "alpha";
    case SweepAxis::K: return "K";
    case SweepAxis::D1: return "d1";
    case SweepAxis::D2: return "d2";
    case SweepAxis::M: return "M";
  }
  return "unknown";
}

inline std::optional<SweepAxis> sweep_axis_from_string(std::string_view s) {
  if (s == "alpha") return SweepAxis::Alpha;
  if (s == "K" || s == "k") return SweepAxis::K;
  if (s == "d1") return SweepAxis::D1;
  if (s == "d2") return SweepAxis::D2;
  if (s == "M" || s == "m") return SweepAxis::M;
  return std::nullopt;
}

struct SweepRow {
  double value = 0;
  bool valid = false;
  std::string note;
  double final_eval_loss = std::numeric_limits<double>::quiet_NaN();
  double distortion = std::numeric_limits<double>::quiet_NaN();
};

struct SweepSummary {
  SweepAxis axis = SweepAxis::Alpha;
  std::vector<SweepRow> rows;

  std::string render() const {
    std::ostringstream os;
    os << "axis: " << to_string(axis) << "\n";
    os << "value\tfinal_eval_loss\tdistortion\tnote\n";
    for (const auto& r : rows) {
      os << r.value << "\t";
      if (r.valid)
        os << r.final_eval_loss << "\t" << r.distortion << "\t" << r.note;
      else
        os << "-\t-\tskipped: " << r.note;
      os << "\n";
    }
    return os.str();
  }
};

// Measures projection distortion for the run's dims on a fresh synthetic
// point cloud; reported alongside eval loss in d1/d2 sweeps.
inline double sweep_distortion(const RunConfig& config) {
  Rng rng(config.master_seed, "sweep-distortion");
  const auto [g1, g2] = build_projection<double>(
      config.model.vocab, config.model.context, config.sel.d1, config.sel.d2,
      substream_seed(config.master_seed, "projection"));
  std::vector<LogitsMatrix<double>> points;
  for (int i = 0; i < 16; ++i) {
    MatrixX<double> m(config.model.context, config.model.vocab);
    for (Index c = 0; c < m.cols(); ++c)
      for (Index r = 0; r < m.rows(); ++r) m(r, c) = rng.gauss();
    points.emplace_back(std::move(m));
  }
  return jl_distortion_probe(points, g1, g2).max_distortion;
}

inline SweepSummary run_sweep(const RunConfig& base, SweepAxis axis,
                              const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("run_sweep: no values given");
  SweepSummary summary;
  summary.axis = axis;
  for (double value : values) {
    SweepRow row;
    row.value = value;
    RunConfig config = base;
    try {
      switch (axis) {
        case SweepAxis::Alpha: config.sel.alpha = value; break;
        case SweepAxis::K: config.sel.select_k = static_cast<Index>(value); break;
        case SweepAxis::D1: config.sel.d1 = static_cast<Index>(value); break;
        case SweepAxis::D2: config.sel.d2 = static_cast<Index>(value); break;
        case SweepAxis::M: config.sel.buffer_capacity = static_cast<Index>(value); break;
      }
      config.validate();
      const RunSummary rs = run_experiment(config);
      row.valid = true;
      row.final_eval_loss = rs.final_eval_loss;
      if (axis == SweepAxis::D1 || axis == SweepAxis::D2)
        row.distortion = sweep_distortion(config);
    } catch (const std::exception& e) {
      row.valid = false;
      row.note = e.what();
    }
    summary.rows.push_back(std::move(row));
  }
  return summary;
}

}  // namespace uds
