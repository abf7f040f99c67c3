#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "uds/selector.hpp"

using namespace uds;

namespace {

std::vector<ScoreRecord> records_of(const std::vector<double>& totals) {
  std::vector<ScoreRecord> records(totals.size());
  for (std::size_t i = 0; i < totals.size(); ++i) {
    records[i].sample_id = static_cast<std::int64_t>(i);
    records[i].s_total = totals[i];
  }
  return records;
}

LogitsMatrix<double> rand_logits(Index n, Index v, Rng& rng, double scale = 1.0) {
  return LogitsMatrix<double>(oracles::random_matrix(n, v, rng, scale));
}

}  // namespace

TEST_CASE("score combination is the weighted sum") {
  CHECK(combine_scores(10.0, 5.0, 0.0) == 10.0);
  CHECK(combine_scores(10.0, 5.0, 2.0) == 20.0);
  // at milli-scale alpha the diversity term stays a small correction
  const double total = combine_scores(350.0, 40.0, 1.5e-3);
  CHECK((total - 350.0) / total < 0.01);
}

TEST_CASE("top-k picks the largest scores and reports sorted indices") {
  const auto recs = records_of({3, 1, 4, 1, 5});
  CHECK(select_topk(recs, 2) == std::vector<Index>{2, 4});
  CHECK(select_topk(recs, 5) == std::vector<Index>{0, 1, 2, 3, 4});
}

TEST_CASE("ties break toward the lower batch index") {
  const auto recs = records_of({7, 7, 7, 7});
  CHECK(select_topk(recs, 3) == std::vector<Index>{0, 1, 2});
}

TEST_CASE("top-k rejects out-of-range k") {
  const auto recs = records_of({1, 2});
  CHECK_THROWS_AS(select_topk(recs, 0), std::invalid_argument);
  CHECK_THROWS_AS(select_topk(recs, 3), std::invalid_argument);
}

TEST_CASE("top-k achieves the exhaustive best subset sum") {
  Rng rng(400);
  for (int trial = 0; trial < 300; ++trial) {
    const Index b = 2 + Index(rng.below(7));
    const Index k = 1 + Index(rng.below(std::uint64_t(b)));
    std::vector<double> totals(static_cast<std::size_t>(b));
    for (auto& t : totals) t = rng.gauss() * 10.0;
    const auto chosen = select_topk(records_of(totals), k);
    double sum = 0;
    for (Index i : chosen) sum += totals[static_cast<std::size_t>(i)];
    const double best = oracles::best_subset_sum(totals, k);
    CHECK(std::abs(sum - best) <= 1e-12 * std::max(1.0, std::abs(best)));
  }
}

TEST_CASE("selection is invariant to positive scaling of all scores") {
  Rng rng(401);
  std::vector<double> totals(8);
  for (auto& t : totals) t = rng.gauss();
  const auto base = select_topk(records_of(totals), 3);
  for (double c : {0.25, 7.5, 1e6}) {
    std::vector<double> scaled = totals;
    for (auto& t : scaled) t *= c;
    CHECK(select_topk(records_of(scaled), 3) == base);
  }
}

TEST_CASE("config validation enforces K <= B <= M and alpha >= 0") {
  SelectionConfig cfg;
  cfg.batch_size = 8;
  cfg.select_k = 9;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.select_k = 4;
  cfg.buffer_capacity = 4;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.buffer_capacity = 1024;
  cfg.alpha = -1.0;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg.alpha = 0.0;
  CHECK_NOTHROW(cfg.validate());
}

TEST_CASE("uds_step with an empty buffer ranks by nuclear norm alone") {
  Rng rng(402);
  SelectionConfig cfg;
  cfg.batch_size = 6;
  cfg.select_k = 2;
  cfg.alpha = 0.9;
  cfg.d1 = 6;
  cfg.d2 = 4;
  cfg.buffer_capacity = 32;
  const auto [g1, g2] = build_projection<double>(16, 8, cfg.d1, cfg.d2, 5);
  std::vector<LogitsMatrix<double>> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(rand_logits(8, 16, rng, 0.5 + i * 0.3));

  MemoryBuffer<double> buffer(cfg.buffer_capacity, cfg.d1 * cfg.d2);
  const auto result = uds_step(batch, cfg, buffer, g1, g2);

  std::vector<ScoreRecord> intra_only(result.records);
  for (auto& r : intra_only) r.s_total = r.s_intra;
  CHECK(result.selected == select_topk(intra_only, cfg.select_k));
  for (const auto& r : result.records) CHECK(r.s_inter == 0.0);
}

TEST_CASE("alpha = 0 ignores the buffer entirely") {
  Rng rng(403);
  SelectionConfig cfg;
  cfg.batch_size = 5;
  cfg.select_k = 2;
  cfg.alpha = 0.0;
  cfg.d1 = 4;
  cfg.d2 = 4;
  cfg.buffer_capacity = 16;
  const auto [g1, g2] = build_projection<double>(12, 6, cfg.d1, cfg.d2, 6);
  std::vector<LogitsMatrix<double>> batch;
  for (int i = 0; i < 5; ++i) batch.push_back(rand_logits(6, 12, rng));

  MemoryBuffer<double> empty(cfg.buffer_capacity, cfg.d1 * cfg.d2);
  MemoryBuffer<double> primed(cfg.buffer_capacity, cfg.d1 * cfg.d2);
  push_selected(primed, {project_fast(batch[0], g1, g2)});

  const auto a = uds_step(batch, cfg, empty, g1, g2);
  const auto b = uds_step(batch, cfg, primed, g1, g2);
  CHECK(a.selected == b.selected);
}

TEST_CASE("a primed buffer lets exactly one near-duplicate survive") {
  Rng rng(404);
  const Index n = 8, v = 16;
  SelectionConfig cfg;
  cfg.batch_size = 4;
  cfg.select_k = 2;
  cfg.d1 = 8;
  cfg.d2 = 4;
  cfg.buffer_capacity = 64;
  const auto [g1, g2] = build_projection<double>(v, n, cfg.d1, cfg.d2, 17);

  // two near-duplicate high-norm samples, two distinct mid-norm samples
  MatrixXd proto = oracles::random_matrix(n, v, rng, 4.0);
  std::vector<LogitsMatrix<double>> batch;
  batch.emplace_back(proto);
  batch.emplace_back(MatrixXd(proto + oracles::random_matrix(n, v, rng, 0.01)));
  batch.emplace_back(oracles::random_matrix(n, v, rng, 2.0));
  batch.emplace_back(oracles::random_matrix(n, v, rng, 2.0));

  MemoryBuffer<double> buffer(cfg.buffer_capacity, cfg.d1 * cfg.d2);
  push_selected(buffer, {project_fast(batch[0], g1, g2)});

  // probe scores once, then place alpha between the first and second
  // duplicate-mid crossing so exactly one duplicate stays on top
  cfg.alpha = 0.0;
  MemoryBuffer<double> scratch = buffer;
  const auto probe = uds_step(batch, cfg, scratch, g1, g2);
  for (int d = 0; d < 2; ++d)
    for (int m = 2; m < 4; ++m) {
      REQUIRE(probe.records[d].s_intra > probe.records[m].s_intra);
      REQUIRE(probe.records[m].s_inter > probe.records[d].s_inter);
    }
  std::vector<double> crossings;
  for (int d = 0; d < 2; ++d)
    for (int m = 2; m < 4; ++m)
      crossings.push_back((probe.records[d].s_intra - probe.records[m].s_intra) /
                          (probe.records[m].s_inter - probe.records[d].s_inter));
  std::sort(crossings.begin(), crossings.end());
  REQUIRE(crossings[1] > crossings[0]);
  cfg.alpha = 0.5 * (crossings[0] + crossings[1]);

  const auto result = uds_step(batch, cfg, buffer, g1, g2);
  int duplicates_selected = 0;
  for (Index i : result.selected)
    if (i <= 1) ++duplicates_selected;
  CHECK(duplicates_selected == 1);

  // brute force over all C(4,2) subsets of the reported totals
  std::vector<double> totals;
  for (const auto& r : result.records) totals.push_back(r.s_total);
  double sum = 0;
  for (Index i : result.selected) sum += totals[static_cast<std::size_t>(i)];
  CHECK(sum == doctest::Approx(oracles::best_subset_sum(totals, 2)).epsilon(1e-12));
}

TEST_CASE("buffer grows by exactly the selected embeddings") {
  Rng rng(405);
  SelectionConfig cfg;
  cfg.batch_size = 6;
  cfg.select_k = 3;
  cfg.d1 = 4;
  cfg.d2 = 2;
  cfg.buffer_capacity = 32;
  const auto [g1, g2] = build_projection<double>(10, 5, cfg.d1, cfg.d2, 77);
  std::vector<LogitsMatrix<double>> batch;
  for (int i = 0; i < 6; ++i) batch.push_back(rand_logits(5, 10, rng));

  MemoryBuffer<double> buffer(cfg.buffer_capacity, cfg.d1 * cfg.d2);
  const auto result = uds_step(batch, cfg, buffer, g1, g2, 12);
  REQUIRE(buffer.size() == 3);
  for (std::size_t i = 0; i < result.selected.size(); ++i) {
    const auto& stored = buffer.entries()[i];
    CHECK(stored.source_sample == result.selected[i]);
    CHECK(stored.source_step == 12);
    const auto direct = project_fast(batch[static_cast<std::size_t>(result.selected[i])], g1, g2);
    CHECK(stored.data == direct.data);
  }
}

TEST_CASE("raising one sample's intra score never deselects it") {
  Rng rng(406);
  std::vector<double> intra(8), inter(8);
  for (auto& x : intra) x = 10.0 * rng.unit();
  for (auto& x : inter) x = 5.0 * rng.unit();
  const double alpha = 0.3;
  auto make_records = [&](double boost, std::size_t who) {
    std::vector<ScoreRecord> recs(8);
    for (std::size_t i = 0; i < 8; ++i) {
      recs[i].s_intra = intra[i] + (i == who ? boost : 0.0);
      recs[i].s_inter = inter[i];
      recs[i].s_total = combine_scores(recs[i].s_intra, recs[i].s_inter, alpha);
    }
    return recs;
  };
  const auto base = select_topk(make_records(0.0, 0), 3);
  for (Index who : base) {
    const auto boosted = select_topk(make_records(50.0, static_cast<std::size_t>(who)), 3);
    CHECK(std::find(boosted.begin(), boosted.end(), who) != boosted.end());
  }
}

TEST_CASE("small enough alpha reproduces the alpha = 0 selection") {
  Rng rng(407);
  std::vector<ScoreRecord> recs(6);
  for (auto& r : recs) {
    r.s_intra = 10.0 * rng.unit();
    r.s_inter = 8.0 * rng.unit();
  }
  for (std::size_t i = 0; i < recs.size(); ++i) recs[i].sample_id = std::int64_t(i);

  auto with_alpha = [&](double alpha) {
    auto copy = recs;
    for (auto& r : copy) r.s_total = combine_scores(r.s_intra, r.s_inter, alpha);
    return select_topk(copy, 3);
  };
  // perturbation bound: alpha < min score gap / max s_inter
  std::vector<double> intra;
  for (const auto& r : recs) intra.push_back(r.s_intra);
  std::sort(intra.begin(), intra.end());
  double min_gap = std::numeric_limits<double>::infinity();
  for (std::size_t i = 1; i < intra.size(); ++i)
    min_gap = std::min(min_gap, intra[i] - intra[i - 1]);
  double max_inter = 0;
  for (const auto& r : recs) max_inter = std::max(max_inter, r.s_inter);
  REQUIRE(min_gap > 0);
  const double alpha = 0.5 * min_gap / max_inter;
  CHECK(with_alpha(alpha) == with_alpha(0.0));
}

TEST_CASE("row masks and length normalization reshape the intra score") {
  Rng rng(408);
  SelectionConfig cfg;
  cfg.batch_size = 3;
  cfg.select_k = 1;
  cfg.alpha = 0.0;
  cfg.d1 = 4;
  cfg.d2 = 2;
  cfg.buffer_capacity = 8;
  const auto [g1, g2] = build_projection<double>(10, 6, cfg.d1, cfg.d2, 2);
  std::vector<LogitsMatrix<double>> batch;
  for (int i = 0; i < 3; ++i) batch.push_back(rand_logits(6, 10, rng));

  std::vector<std::vector<Index>> masks{{0, 1}, {2, 3, 4}, {5}};
  MemoryBuffer<double> buffer(cfg.buffer_capacity, cfg.d1 * cfg.d2);
  const auto masked = uds_step(batch, cfg, buffer, g1, g2, 0, nullptr, &masks);
  for (int i = 0; i < 3; ++i)
    CHECK(masked.records[std::size_t(i)].s_intra ==
          doctest::Approx(nuclear_norm(batch[std::size_t(i)], masks[std::size_t(i)]).nuclear));

  cfg.normalize_intra_by_rows = true;
  MemoryBuffer<double> buffer2(cfg.buffer_capacity, cfg.d1 * cfg.d2);
  const auto normalized = uds_step(batch, cfg, buffer2, g1, g2, 0, nullptr, &masks);
  for (int i = 0; i < 3; ++i)
    CHECK(normalized.records[std::size_t(i)].s_intra ==
          doctest::Approx(masked.records[std::size_t(i)].s_intra /
                          double(masks[std::size_t(i)].size())));
}

TEST_CASE("baseline scorers use their side inputs and reject missing ones") {
  const std::vector<double> losses{0.1, 2.0, 0.5};
  const auto recs = baseline_score(3, &losses, nullptr, Scorer::MaxLoss);
  CHECK(select_topk(recs, 1) == std::vector<Index>{1});

  const std::vector<double> grads{1.0, 0.2, 3.0};
  const auto recs_g = baseline_score(3, nullptr, &grads, Scorer::MaxGrad);
  CHECK(select_topk(recs_g, 1) == std::vector<Index>{2});

  CHECK_THROWS_WITH_AS(baseline_score(3, nullptr, nullptr, Scorer::MaxLoss),
                       doctest::Contains("maxloss"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(baseline_score(3, nullptr, nullptr, Scorer::MaxGrad),
                       doctest::Contains("maxgrad"), std::invalid_argument);

  Rng r1(9, "policy-random"), r2(9, "policy-random");
  const auto a = baseline_score(5, nullptr, nullptr, Scorer::Random, &r1);
  const auto b = baseline_score(5, nullptr, nullptr, Scorer::Random, &r2);
  for (int i = 0; i < 5; ++i) CHECK(a[i].s_total == b[i].s_total);

  const auto reg = baseline_score(4, nullptr, nullptr, Scorer::Regular);
  CHECK(select_topk(reg, 4) == std::vector<Index>{0, 1, 2, 3});
}
