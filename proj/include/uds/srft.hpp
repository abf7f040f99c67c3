#pragma once

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <cstdint>
#include <numbers>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uds/norm_score.hpp"
#include "uds/rng.hpp"

namespace uds {

// Factor construction tag: normalized discrete Hartley transform as the
// orthonormal system, mt19937_64 substream draws for signs and row
// selection. Serialized records carry this tag.
inline constexpr std::string_view kSrftVersion = "srft-dht-v1";

// Guard for materializing vec(L) and dense Kronecker rows.
inline constexpr Index kDenseOracleGuard = Index(1) << 20;

// One side of the two-sided projection: scale * S * F * D with F the
// normalized Hartley transform, D a Rademacher diagonal and S a uniform
// without-replacement row selection. Never stored densely.
template <class Scalar = double>
struct ProjectionFactor {
  Index input_dim = 0;
  Index output_dim = 0;
  VectorX<Scalar> signs;             // +-1, length input_dim
  std::vector<Index> selected_rows;  // strictly increasing, length output_dim
  Scalar scale = 0;                  // sqrt(input_dim / output_dim)
  std::uint64_t seed = 0;
  std::string version = std::string(kSrftVersion);
};

template <class Scalar = double>
struct Embedding {
  VectorX<Scalar> data;
  std::int64_t source_step = -1;
  std::int64_t source_sample = -1;
};

struct DistortionReport {
  double max_distortion = 0;  // max over pairs of |dist_ratio - 1|
  Index num_pairs = 0;        // pairs with nonzero original distance
  bool degenerate = false;    // no measurable pairs
};

namespace detail {

// In-place normalized Hartley transform: y[k] = sum_j x[j] cas(2 pi k j / n)
// / sqrt(n), evaluated through a complex FFT (cas coefficients are Re - Im of
// the DFT). Orthonormal and an involution at every length, so no padding is
// needed.
template <class Scalar>
void hartley(VectorX<Scalar>& x) {
  const Index n = x.size();
  if (n <= 1) return;
  thread_local Eigen::FFT<Scalar> fft;
  thread_local std::vector<std::complex<Scalar>> time, freq;
  time.resize(static_cast<std::size_t>(n));
  freq.resize(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) time[static_cast<std::size_t>(i)] = x(i);
  fft.fwd(freq, time);
  const Scalar s = Scalar(1) / std::sqrt(static_cast<Scalar>(n));
  for (Index i = 0; i < n; ++i) {
    const auto& f = freq[static_cast<std::size_t>(i)];
    x(i) = (f.real() - f.imag()) * s;
  }
}

template <class Scalar>
void validate_factor(const ProjectionFactor<Scalar>& g) {
  if (g.input_dim < 1 || g.output_dim < 1 || g.output_dim > g.input_dim)
    throw std::invalid_argument("projection factor: output_dim must satisfy 1 <= output_dim <= input_dim");
  if (g.signs.size() != g.input_dim)
    throw std::invalid_argument("projection factor: sign vector length mismatch");
  if (!((g.signs.array() == Scalar(1)) || (g.signs.array() == Scalar(-1))).all())
    throw std::invalid_argument("projection factor: signs must be +-1");
  if (static_cast<Index>(g.selected_rows.size()) != g.output_dim)
    throw std::invalid_argument("projection factor: selected row count mismatch");
  for (std::size_t i = 0; i < g.selected_rows.size(); ++i) {
    const Index r = g.selected_rows[i];
    if (r < 0 || r >= g.input_dim)
      throw std::invalid_argument("projection factor: selected row out of range");
    if (i > 0 && g.selected_rows[i - 1] >= r)
      throw std::invalid_argument("projection factor: selected rows must be strictly increasing");
  }
  const Scalar expected =
      std::sqrt(static_cast<Scalar>(g.input_dim) / static_cast<Scalar>(g.output_dim));
  if (std::abs(g.scale - expected) > Scalar(1e-12) * expected)
    throw std::invalid_argument(
        "projection factor: scale does not equal sqrt(input_dim / output_dim)");
}

}  // namespace detail

// k distinct indices from [0, n), uniform without replacement (partial
// Fisher-Yates), returned sorted.
inline std::vector<Index> sample_without_replacement(Index n, Index k, Rng& rng) {
  std::vector<Index> idx(static_cast<std::size_t>(n));
  std::iota(idx.begin(), idx.end(), Index(0));
  for (Index i = 0; i < k; ++i) {
    const Index j = i + static_cast<Index>(rng.below(static_cast<std::uint64_t>(n - i)));
    std::swap(idx[static_cast<std::size_t>(i)], idx[static_cast<std::size_t>(j)]);
  }
  idx.resize(static_cast<std::size_t>(k));
  std::sort(idx.begin(), idx.end());
  return idx;
}

namespace detail {

template <class Scalar>
ProjectionFactor<Scalar> make_factor(Index input_dim, Index output_dim,
                                     std::uint64_t seed, std::string_view stream) {
  ProjectionFactor<Scalar> g;
  g.input_dim = input_dim;
  g.output_dim = output_dim;
  g.seed = seed;
  g.scale = std::sqrt(static_cast<Scalar>(input_dim) / static_cast<Scalar>(output_dim));
  Rng rng(seed, stream);
  g.signs.resize(input_dim);
  for (Index i = 0; i < input_dim; ++i) g.signs(i) = static_cast<Scalar>(rng.sign());
  g.selected_rows = sample_without_replacement(input_dim, output_dim, rng);
  return g;
}

}  // namespace detail

// Factor pair for z = vec(G2 * L * G1^T): G1 reduces the vocabulary axis
// (V -> d1), G2 the sequence axis (N -> d2). Deterministic in the seed;
// the two factors draw from independent substreams.
template <class Scalar = double>
std::pair<ProjectionFactor<Scalar>, ProjectionFactor<Scalar>> build_projection(
    Index vocab, Index seq_len, Index d1, Index d2, std::uint64_t seed) {
  if (d1 < 1 || d1 > vocab) {
    std::ostringstream os;
    os << "build_projection: need 1 <= d1 <= vocab, got d1=" << d1
       << " vocab=" << vocab;
    throw std::invalid_argument(os.str());
  }
  if (d2 < 1 || d2 > seq_len) {
    std::ostringstream os;
    os << "build_projection: need 1 <= d2 <= seq_len, got d2=" << d2
       << " seq_len=" << seq_len;
    throw std::invalid_argument(os.str());
  }
  return {detail::make_factor<Scalar>(vocab, d1, seed, "srft-g1"),
          detail::make_factor<Scalar>(seq_len, d2, seed, "srft-g2")};
}

// Factor applied to a single vector: y = scale * S * F * D * x.
template <class Scalar>
VectorX<Scalar> apply_factor(const ProjectionFactor<Scalar>& g,
                             const VectorX<Scalar>& x) {
  if (x.size() != g.input_dim)
    throw std::invalid_argument("apply_factor: vector length does not match input_dim");
  VectorX<Scalar> t = g.signs.cwiseProduct(x);
  detail::hartley(t);
  VectorX<Scalar> y(g.output_dim);
  for (Index i = 0; i < g.output_dim; ++i)
    y(i) = g.scale * t(g.selected_rows[static_cast<std::size_t>(i)]);
  return y;
}

// Fast path for z = vec(G2 * L * G1^T): transform each valid row along the
// vocabulary axis and subsample d1 columns, then transform each of the d1
// columns along the sequence axis and subsample d2 rows. Samples shorter
// than G2's input_dim are implicitly zero-padded. The d2 x d1 result is
// vectorized column-major, matching vec(AXB) = (B^T (x) A) vec(X).
template <class Scalar>
Embedding<Scalar> project_fast(const LogitsMatrix<Scalar>& logits,
                               const ProjectionFactor<Scalar>& g1,
                               const ProjectionFactor<Scalar>& g2) {
  validate_logits(logits);
  detail::validate_factor(g1);
  detail::validate_factor(g2);
  if (logits.cols() != g1.input_dim || logits.rows() > g2.input_dim) {
    std::ostringstream os;
    os << "project_fast: logits " << logits.rows() << "x" << logits.cols()
       << " incompatible with factors (" << g2.input_dim << " x "
       << g1.input_dim << " max)";
    throw std::invalid_argument(os.str());
  }
  const Index nmax = g2.input_dim;
  const Index d1 = g1.output_dim, d2 = g2.output_dim;

  MatrixX<Scalar> t1 = MatrixX<Scalar>::Zero(nmax, d1);
  VectorX<Scalar> row(g1.input_dim);
  for (Index r = 0; r < logits.valid_rows; ++r) {
    row = g1.signs.cwiseProduct(logits.data.row(r).transpose());
    detail::hartley(row);
    for (Index j = 0; j < d1; ++j)
      t1(r, j) = row(g1.selected_rows[static_cast<std::size_t>(j)]);
  }

  MatrixX<Scalar> b(d2, d1);
  VectorX<Scalar> col(nmax);
  for (Index j = 0; j < d1; ++j) {
    col = g2.signs.cwiseProduct(t1.col(j));
    detail::hartley(col);
    for (Index i = 0; i < d2; ++i)
      b(i, j) = col(g2.selected_rows[static_cast<std::size_t>(i)]);
  }
  b *= g1.scale * g2.scale;

  Embedding<Scalar> z;
  z.data = Eigen::Map<const VectorX<Scalar>>(b.data(), b.size());
  return z;
}

// Dense factor matrix from the cas() definition of the Hartley transform.
// Entry (i, j) = scale * sign_j * cas(2 pi sel_i j / n) / sqrt(n). This is
// an independent route from the FFT used by the fast path.
template <class Scalar>
MatrixX<Scalar> dense_factor(const ProjectionFactor<Scalar>& g) {
  detail::validate_factor(g);
  const Index n = g.input_dim;
  const Scalar norm = Scalar(1) / std::sqrt(static_cast<Scalar>(n));
  MatrixX<Scalar> m(g.output_dim, n);
  for (Index i = 0; i < g.output_dim; ++i) {
    const std::int64_t k = g.selected_rows[static_cast<std::size_t>(i)];
    for (Index j = 0; j < n; ++j) {
      // reduce k*j mod n first to keep the trig argument small
      const std::int64_t kj = (k * static_cast<std::int64_t>(j)) % n;
      const Scalar th = Scalar(2) * std::numbers::pi_v<Scalar> *
                        static_cast<Scalar>(kj) / static_cast<Scalar>(n);
      m(i, j) = g.scale * g.signs(j) * (std::cos(th) + std::sin(th)) * norm;
    }
  }
  return m;
}

// Reference implementation: materialize Gamma = G1 (x) G2 row by row and
// multiply vec(L). Same vectorization convention as project_fast. The guard
// bounds the size of vec(L) and of one Kronecker row.
template <class Scalar>
Embedding<Scalar> project_dense_oracle(const LogitsMatrix<Scalar>& logits,
                                       const ProjectionFactor<Scalar>& g1,
                                       const ProjectionFactor<Scalar>& g2,
                                       Index size_guard = kDenseOracleGuard) {
  validate_logits(logits);
  if (logits.cols() != g1.input_dim || logits.rows() > g2.input_dim) {
    std::ostringstream os;
    os << "project_dense_oracle: logits " << logits.rows() << "x"
       << logits.cols() << " incompatible with factors (" << g2.input_dim
       << " x " << g1.input_dim << " max)";
    throw std::invalid_argument(os.str());
  }
  const Index n = g2.input_dim, v = g1.input_dim;
  if (n * v > size_guard) {
    std::ostringstream os;
    os << "project_dense_oracle: N*V = " << n * v << " exceeds guard "
       << size_guard;
    throw std::invalid_argument(os.str());
  }

  const MatrixX<Scalar> f1 = dense_factor(g1);  // d1 x V
  const MatrixX<Scalar> f2 = dense_factor(g2);  // d2 x N

  // column-major vec of the zero-padded N x V logits
  VectorX<Scalar> u = VectorX<Scalar>::Zero(n * v);
  for (Index c = 0; c < v; ++c)
    u.segment(c * n, logits.valid_rows) =
        logits.data.col(c).head(logits.valid_rows);

  const Index d1 = g1.output_dim, d2 = g2.output_dim;
  Embedding<Scalar> z;
  z.data.resize(d1 * d2);
  VectorX<Scalar> krow(n * v);
  for (Index a = 0; a < d1; ++a) {
    for (Index b = 0; b < d2; ++b) {
      for (Index c = 0; c < v; ++c) krow.segment(c * n, n) = f1(a, c) * f2.row(b).transpose();
      z.data(a * d2 + b) = krow.dot(u);
    }
  }
  return z;
}

// Max pairwise squared-distance distortion of the fast projection over a
// point set, measured against distances between the zero-padded vec(L)
// vectors. Pairs at zero original distance are skipped.
template <class Scalar>
DistortionReport jl_distortion_probe(const std::vector<LogitsMatrix<Scalar>>& points,
                                     const ProjectionFactor<Scalar>& g1,
                                     const ProjectionFactor<Scalar>& g2) {
  if (points.size() < 2)
    throw std::invalid_argument("jl_distortion_probe: need at least 2 points");
  for (const auto& p : points)
    if (p.rows() != points.front().rows() || p.cols() != points.front().cols())
      throw std::invalid_argument("jl_distortion_probe: points must share one shape");

  const Index n = g2.input_dim, v = g1.input_dim;
  std::vector<VectorX<Scalar>> originals, projected;
  originals.reserve(points.size());
  projected.reserve(points.size());
  for (const auto& p : points) {
    VectorX<Scalar> u = VectorX<Scalar>::Zero(n * v);
    for (Index c = 0; c < v; ++c)
      u.segment(c * n, p.valid_rows) = p.data.col(c).head(p.valid_rows);
    originals.push_back(std::move(u));
    projected.push_back(project_fast(p, g1, g2).data);
  }

  DistortionReport report;
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) {
      const Scalar du2 = (originals[i] - originals[j]).squaredNorm();
      if (du2 == Scalar(0)) continue;
      const Scalar dv2 = (projected[i] - projected[j]).squaredNorm();
      report.max_distortion = std::max(
          report.max_distortion, std::abs(static_cast<double>(dv2 / du2) - 1.0));
      ++report.num_pairs;
    }
  }
  report.degenerate = report.num_pairs == 0;
  return report;
}

}  // namespace uds
