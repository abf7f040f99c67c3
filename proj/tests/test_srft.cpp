#include <doctest.h>

#include <cmath>
#include <numbers>

#include "oracles.hpp"
#include "uds/srft.hpp"

using namespace uds;
using oracles::random_matrix;

namespace {

LogitsMatrix<double> rand_logits(Index n, Index v, Rng& rng, double scale = 1.0) {
  return LogitsMatrix<double>(random_matrix(n, v, rng, scale));
}

}  // namespace

TEST_CASE("factors are deterministic in the seed and differ across seeds") {
  const auto [a1, a2] = build_projection<double>(64, 32, 8, 4, 42);
  const auto [b1, b2] = build_projection<double>(64, 32, 8, 4, 42);
  CHECK(a1.signs == b1.signs);
  CHECK(a1.selected_rows == b1.selected_rows);
  CHECK(a2.signs == b2.signs);
  CHECK(a2.selected_rows == b2.selected_rows);
  CHECK(a1.scale == b1.scale);

  const auto [c1, c2] = build_projection<double>(64, 32, 8, 4, 43);
  const bool differs = a1.signs != c1.signs || a1.selected_rows != c1.selected_rows ||
                       a2.signs != c2.signs || a2.selected_rows != c2.selected_rows;
  CHECK(differs);

  Rng rng(199);
  const auto l = rand_logits(32, 64, rng);
  CHECK(project_fast(l, a1, a2).data == project_fast(l, b1, b2).data);
}

TEST_CASE("factor dimension violations name the bound") {
  CHECK_THROWS_WITH_AS(build_projection<double>(16, 8, 17, 4, 1),
                       doctest::Contains("d1"), std::invalid_argument);
  CHECK_THROWS_WITH_AS(build_projection<double>(16, 8, 4, 9, 1),
                       doctest::Contains("d2"), std::invalid_argument);
  CHECK_THROWS_AS(build_projection<double>(16, 8, 0, 4, 1), std::invalid_argument);
}

TEST_CASE("zero matrix maps to the zero embedding") {
  const auto [g1, g2] = build_projection<double>(24, 12, 6, 3, 5);
  const auto z = project_fast(LogitsMatrix<double>(MatrixXd::Zero(12, 24)), g1, g2);
  CHECK(z.data.size() == 18);
  CHECK(z.data.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("full-dimension projection is an exact isometry") {
  Rng rng(200);
  const Index n = 10, v = 24;
  const auto [g1, g2] = build_projection<double>(v, n, v, n, 9);
  const auto l = rand_logits(n, v, rng);
  const auto z = project_fast(l, g1, g2);
  const double want = l.data.norm();
  CHECK(std::abs(z.data.norm() - want) <= 1e-9 * want);

  std::vector<LogitsMatrix<double>> points;
  for (int i = 0; i < 16; ++i) points.push_back(rand_logits(n, v, rng));
  const auto report = jl_distortion_probe(points, g1, g2);
  CHECK(!report.degenerate);
  CHECK(report.max_distortion < 1e-9);
}

TEST_CASE("fast path equals the dense Kronecker oracle") {
  Rng rng(201);
  const auto [g1, g2] = build_projection<double>(32, 16, 8, 4, 77);
  const auto l = rand_logits(16, 32, rng);
  const auto fast = project_fast(l, g1, g2);
  const auto dense = project_dense_oracle(l, g1, g2);
  CHECK((fast.data - dense.data).cwiseAbs().maxCoeff() < 1e-8);

  for (int trial = 0; trial < 25; ++trial) {
    const Index v = 2 + Index(rng.below(40));
    const Index n = 1 + Index(rng.below(24));
    const Index d1 = 1 + Index(rng.below(std::uint64_t(v)));
    const Index d2 = 1 + Index(rng.below(std::uint64_t(n)));
    const auto [h1, h2] = build_projection<double>(v, n, d1, d2, 1000 + trial);
    const auto m = rand_logits(n, v, rng, 2.0);
    const auto zf = project_fast(m, h1, h2);
    const auto zd = project_dense_oracle(m, h1, h2);
    CHECK((zf.data - zd.data).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("2x2 single-coefficient case matches the hand-expanded sum") {
  Rng rng(202);
  const auto [g1, g2] = build_projection<double>(2, 2, 1, 1, 31);
  MatrixXd m(2, 2);
  m << 1.25, -0.5, 2.0, 0.75;
  const LogitsMatrix<double> l(m);

  auto cas = [](double th) { return std::cos(th) + std::sin(th); };
  const double pi = std::numbers::pi;
  const Index k1 = g1.selected_rows[0], k2 = g2.selected_rows[0];
  double sum = 0;
  for (Index n = 0; n < 2; ++n)
    for (Index v = 0; v < 2; ++v)
      sum += cas(pi * double(k2 * n)) / std::sqrt(2.0) * g2.signs(n) * m(n, v) *
             cas(pi * double(k1 * v)) / std::sqrt(2.0) * g1.signs(v);
  const double want = g1.scale * g2.scale * sum;

  const auto dense = project_dense_oracle(l, g1, g2);
  const auto fast = project_fast(l, g1, g2);
  CHECK(dense.data.size() == 1);
  CHECK(dense.data(0) == doctest::Approx(want).epsilon(1e-12));
  CHECK(fast.data(0) == doctest::Approx(want).epsilon(1e-12));
}

TEST_CASE("identity factor pair permutes a signed transform of vec(L)") {
  Rng rng(203);
  const Index n = 6, v = 8;
  const auto [g1, g2] = build_projection<double>(v, n, v, n, 13);
  const auto l = rand_logits(n, v, rng);
  const auto z = project_dense_oracle(l, g1, g2);
  const double want = l.data.norm();
  CHECK(std::abs(z.data.norm() - want) <= 1e-9 * want);
}

TEST_CASE("projection is linear") {
  Rng rng(204);
  const auto [g1, g2] = build_projection<double>(20, 10, 7, 5, 3);
  const auto l1 = rand_logits(10, 20, rng);
  const auto l2 = rand_logits(10, 20, rng);
  const double a = 1.7, b = -0.4;
  const LogitsMatrix<double> combo(MatrixXd(a * l1.data + b * l2.data));
  const VectorXd direct = project_fast(combo, g1, g2).data;
  const VectorXd composed =
      a * project_fast(l1, g1, g2).data + b * project_fast(l2, g1, g2).data;
  CHECK((direct - composed).norm() <= 1e-8 * direct.norm());
}

TEST_CASE("short samples project as if zero padded to the factor length") {
  Rng rng(205);
  const auto [g1, g2] = build_projection<double>(16, 12, 5, 4, 8);
  const auto base = rand_logits(7, 16, rng);
  MatrixXd padded = MatrixXd::Zero(12, 16);
  padded.topRows(7) = base.data;
  const auto z_short = project_fast(base, g1, g2);
  const auto z_padded = project_fast(LogitsMatrix<double>(padded, 7), g1, g2);
  CHECK((z_short.data - z_padded.data).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("projection rejects mismatched shapes with both sizes") {
  const auto [g1, g2] = build_projection<double>(16, 8, 4, 2, 8);
  const LogitsMatrix<double> wrong_v(MatrixXd::Zero(8, 17));
  CHECK_THROWS_AS(project_fast(wrong_v, g1, g2), std::invalid_argument);
  const LogitsMatrix<double> too_long(MatrixXd::Zero(9, 16));
  CHECK_THROWS_AS(project_fast(too_long, g1, g2), std::invalid_argument);
  CHECK_THROWS_AS(project_dense_oracle(too_long, g1, g2), std::invalid_argument);
}

TEST_CASE("dense oracle refuses sizes beyond the guard") {
  const auto [g1, g2] = build_projection<double>(64, 32, 4, 2, 8);
  const LogitsMatrix<double> l(MatrixXd::Zero(32, 64));
  CHECK_THROWS_WITH_AS(project_dense_oracle(l, g1, g2, 1024),
                       doctest::Contains("guard"), std::invalid_argument);
}

TEST_CASE("embedding norm is unbiased over seeds") {
  Rng rng(206);
  const auto l = rand_logits(12, 20, rng);
  const double base = l.data.squaredNorm();
  double mean = 0;
  const int seeds = 60;
  for (int s = 0; s < seeds; ++s) {
    const auto [g1, g2] = build_projection<double>(20, 12, 5, 4, 9000 + s);
    mean += project_fast(l, g1, g2).data.squaredNorm() / base;
  }
  mean /= seeds;
  CHECK(mean > 0.9);
  CHECK(mean < 1.1);
}

TEST_CASE("distortion probe flags degenerate point sets") {
  Rng rng(207);
  const auto [g1, g2] = build_projection<double>(12, 6, 4, 3, 21);
  const auto p = rand_logits(6, 12, rng);
  std::vector<LogitsMatrix<double>> twice{p, p};
  const auto report = jl_distortion_probe(twice, g1, g2);
  CHECK(report.degenerate);
  CHECK(report.num_pairs == 0);
  CHECK_THROWS_AS(jl_distortion_probe({p}, g1, g2), std::invalid_argument);
}
