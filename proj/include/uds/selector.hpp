#pragma once

#include <algorithm>
#include <cstdint>
#include <numeric>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "uds/diversity_buffer.hpp"
#include "uds/norm_score.hpp"
#include "uds/srft.hpp"

namespace uds {

enum class Scorer { UDS, MaxLoss, MaxGrad, Random, Regular };

inline std::string to_string(Scorer s) {
  switch (s) {
    case Scorer::UDS: return "uds";
    case Scorer::MaxLoss: return "maxloss";
    case Scorer::MaxGrad: return "maxgrad";
    case Scorer::Random: return "random";
    case Scorer::Regular: return "regular";
  }
  return "unknown";
}

inline std::optional<Scorer> scorer_from_string(std::string_view s) {
  if (s == "uds") return Scorer::UDS;
  if (s == "maxloss") return Scorer::MaxLoss;
  if (s == "maxgrad") return Scorer::MaxGrad;
  if (s == "random") return Scorer::Random;
  if (s == "regular") return Scorer::Regular;
  return std::nullopt;
}

struct ScoreRecord {
  std::int64_t sample_id = 0;
  double s_intra = 0;  // nuclear norm
  double s_inter = 0;  // diversity distance
  double alpha = 0;
  double s_total = 0;  // s_intra + alpha * s_inter
  bool selected = false;
};

struct SelectionConfig {
  Index batch_size = 8;       // B
  Index select_k = 4;         // K
  double alpha = 3e-3;        // trade-off factor
  Index buffer_capacity = 1024;  // M
  Index d1 = 32;
  Index d2 = 32;
  std::uint64_t seed = 0;
  Scorer scorer = Scorer::UDS;
  bool normalize_intra_by_rows = false;  // divide nuclear norm by scored rows
  bool response_only_scoring = false;    // score response positions only

  void validate() const {
    if (select_k < 1 || select_k > batch_size || batch_size > buffer_capacity)
      throw std::invalid_argument(
          "SelectionConfig: need 1 <= K <= B <= M, got K=" +
          std::to_string(select_k) + " B=" + std::to_string(batch_size) +
          " M=" + std::to_string(buffer_capacity));
    if (!(alpha >= 0))
      throw std::invalid_argument("SelectionConfig: alpha must be >= 0");
  }
};

inline double combine_scores(double s_intra, double s_inter, double alpha) {
  return s_intra + alpha * s_inter;
}

// Indices of the k largest s_total. Ties break toward the lower batch index;
// the result is sorted by original index.
inline std::vector<Index> select_topk(const std::vector<ScoreRecord>& scores, Index k) {
  const Index n = static_cast<Index>(scores.size());
  if (k < 1 || k > n) {
    std::ostringstream os;
    os << "select_topk: k=" << k << " out of range for " << n << " scores";
    throw std::invalid_argument(os.str());
  }
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Index(0));
  std::partial_sort(order.begin(), order.begin() + k, order.end(),
                    [&](Index a, Index b) {
                      const double sa = scores[static_cast<std::size_t>(a)].s_total;
                      const double sb = scores[static_cast<std::size_t>(b)].s_total;
                      if (sa != sb) return sa > sb;
                      return a < b;
                    });
  order.resize(static_cast<std::size_t>(k));
  std::sort(order.begin(), order.end());
  return order;
}

struct UdsStepResult {
  std::vector<Index> selected;       // ascending batch indices
  std::vector<ScoreRecord> records;  // one per candidate, batch order
};

// One full selection step over a candidate batch: score every sample against
// the frozen pre-step buffer, take the top-K, then push the selected
// embeddings. Candidates inside a batch do not repel each other; the buffer
// mutates only after selection.
template <class Scalar>
UdsStepResult uds_step(const std::vector<LogitsMatrix<Scalar>>& batch,
                       const SelectionConfig& config,
                       MemoryBuffer<Scalar>& buffer,
                       const ProjectionFactor<Scalar>& g1,
                       const ProjectionFactor<Scalar>& g2,
                       std::int64_t step = -1,
                       const std::vector<std::int64_t>* sample_ids = nullptr,
                       const std::vector<std::vector<Index>>* row_masks = nullptr) {
  config.validate();
  if (static_cast<Index>(batch.size()) != config.batch_size)
    throw std::invalid_argument("uds_step: batch size does not match config");
  if (sample_ids && sample_ids->size() != batch.size())
    throw std::invalid_argument("uds_step: sample id count does not match batch");
  if (row_masks && row_masks->size() != batch.size())
    throw std::invalid_argument("uds_step: row mask count does not match batch");

  UdsStepResult result;
  result.records.reserve(batch.size());
  std::vector<Embedding<Scalar>> embeddings;
  embeddings.reserve(batch.size());

  for (std::size_t i = 0; i < batch.size(); ++i) {
    const std::int64_t id =
        sample_ids ? (*sample_ids)[i] : static_cast<std::int64_t>(i);
    try {
      NormReport<Scalar> norms =
          (row_masks && !(*row_masks)[i].empty())
              ? nuclear_norm(batch[i], (*row_masks)[i])
              : nuclear_norm(batch[i]);
      double s_intra = static_cast<double>(norms.nuclear);
      if (config.normalize_intra_by_rows) {
        const Index scored_rows = (row_masks && !(*row_masks)[i].empty())
                                      ? static_cast<Index>((*row_masks)[i].size())
                                      : batch[i].valid_rows;
        s_intra /= static_cast<double>(scored_rows);
      }

      Embedding<Scalar> z = project_fast(batch[i], g1, g2);
      z.source_step = step;
      z.source_sample = id;
      const double s_inter = static_cast<double>(diversity_distance(z, buffer));
      embeddings.push_back(std::move(z));

      ScoreRecord rec;
      rec.sample_id = id;
      rec.s_intra = s_intra;
      rec.s_inter = s_inter;
      rec.alpha = config.alpha;
      rec.s_total = combine_scores(s_intra, s_inter, config.alpha);
      result.records.push_back(rec);
    } catch (const std::exception& e) {
      std::ostringstream os;
      os << "uds_step: scoring failed for sample " << id << ": " << e.what();
      throw std::runtime_error(os.str());
    }
  }

  result.selected = select_topk(result.records, config.select_k);
  std::vector<Embedding<Scalar>> chosen;
  chosen.reserve(result.selected.size());
  for (Index idx : result.selected) {
    result.records[static_cast<std::size_t>(idx)].selected = true;
    chosen.push_back(embeddings[static_cast<std::size_t>(idx)]);
  }
  push_selected(buffer, chosen);
  return result;
}

// Baseline scorers from the comparison suite. MaxLoss and MaxGrad consume
// precomputed side inputs; Random draws from the policy substream; Regular
// assigns a constant so top-K with the index tie-break selects the batch
// prefix (the harness runs it with K = B).
inline std::vector<ScoreRecord> baseline_score(Index batch_size,
                                               const std::vector<double>* losses,
                                               const std::vector<double>* grad_norms,
                                               Scorer scorer, Rng* rng = nullptr) {
  std::vector<ScoreRecord> records(static_cast<std::size_t>(batch_size));
  auto require = [&](const std::vector<double>* side, const char* what) {
    if (!side || static_cast<Index>(side->size()) != batch_size) {
      std::ostringstream os;
      os << "baseline_score: " << to_string(scorer) << " requires " << what
         << " for every sample in the batch";
      throw std::invalid_argument(os.str());
    }
  };
  for (Index i = 0; i < batch_size; ++i) {
    ScoreRecord& rec = records[static_cast<std::size_t>(i)];
    rec.sample_id = i;
    switch (scorer) {
      case Scorer::MaxLoss:
        require(losses, "per-sample losses");
        rec.s_total = (*losses)[static_cast<std::size_t>(i)];
        break;
      case Scorer::MaxGrad:
        require(grad_norms, "per-sample gradient norms");
        rec.s_total = (*grad_norms)[static_cast<std::size_t>(i)];
        break;
      case Scorer::Random:
        if (!rng)
          throw std::invalid_argument("baseline_score: random scorer requires an rng");
        rec.s_total = rng->unit();
        break;
      case Scorer::Regular:
        rec.s_total = 1.0;
        break;
      case Scorer::UDS:
        throw std::invalid_argument("baseline_score: UDS is scored by uds_step");
    }
    rec.s_intra = rec.s_total;
  }
  return records;
}

}  // namespace uds
