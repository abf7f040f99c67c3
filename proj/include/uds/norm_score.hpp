#pragma once

#include <Eigen/Dense>
#include <Eigen/SVD>

#include <cmath>
#include <sstream>
#include <stdexcept>
#include <utility>
#include <vector>

namespace uds {

template <class Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <class Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

using Eigen::Index;
using Eigen::MatrixXd;
using Eigen::VectorXd;

// Pre-softmax scores of one sample: one row per token position, one column
// per vocabulary entry. Rows at index >= valid_rows are zero padding.
template <class Scalar = double>
struct LogitsMatrix {
  MatrixX<Scalar> data;
  Index valid_rows = 0;

  LogitsMatrix() = default;
  explicit LogitsMatrix(MatrixX<Scalar> m)
      : data(std::move(m)), valid_rows(data.rows()) {}
  LogitsMatrix(MatrixX<Scalar> m, Index valid)
      : data(std::move(m)), valid_rows(valid) {}

  Index rows() const { return data.rows(); }
  Index cols() const { return data.cols(); }
  auto valid() const { return data.topRows(valid_rows); }
};

// Row-stochastic matrix with the same shape and padding convention as the
// logits it came from; padding rows hold the uniform distribution and carry
// no information.
template <class Scalar = double>
struct ProbMatrix {
  MatrixX<Scalar> data;
  Index valid_rows = 0;
};

template <class Scalar = double>
struct NormReport {
  Scalar nuclear = 0;
  Scalar frobenius = 0;
  VectorX<Scalar> singular_values;  // non-increasing
  Index effective_rank = 0;         // count of sigma_j > 1e-12 * sigma_1
};

template <class Scalar>
struct BoundVerdict {
  Scalar lower_slack = 0;  // nuclear - frobenius
  Scalar upper_slack = 0;  // sqrt(min_dim) * frobenius - nuclear
  Scalar tolerance = 0;    // 1e-9 * frobenius
  bool lower_ok = false;
  bool upper_ok = false;
  bool ok() const { return lower_ok && upper_ok; }
};

template <class Scalar>
void validate_logits(const LogitsMatrix<Scalar>& logits) {
  const auto& m = logits.data;
  if (m.rows() < 1 || m.cols() < 1)
    throw std::invalid_argument("logits: matrix must be at least 1x1");
  if (logits.valid_rows < 1 || logits.valid_rows > m.rows())
    throw std::invalid_argument("logits: valid_rows out of range");
  for (Index c = 0; c < m.cols(); ++c)
    for (Index r = 0; r < m.rows(); ++r)
      if (!std::isfinite(m(r, c))) {
        std::ostringstream os;
        os << "logits: non-finite entry at (" << r << ", " << c << ")";
        throw std::invalid_argument(os.str());
      }
  for (Index r = logits.valid_rows; r < m.rows(); ++r)
    if (!(m.row(r).array() == Scalar(0)).all())
      throw std::invalid_argument("logits: padding rows must be exactly zero");
}

// Row-wise softmax over valid rows with max-subtraction; padding rows are
// set to the uniform distribution and flagged via valid_rows so downstream
// code never reads them.
template <class Scalar>
ProbMatrix<Scalar> softmax_rows(const LogitsMatrix<Scalar>& logits) {
  validate_logits(logits);
  const Index n = logits.rows(), v = logits.cols();
  ProbMatrix<Scalar> probs;
  probs.data.resize(n, v);
  probs.valid_rows = logits.valid_rows;
  for (Index r = 0; r < logits.valid_rows; ++r) {
    const Scalar m = logits.data.row(r).maxCoeff();
    VectorX<Scalar> e = (logits.data.row(r).array() - m).exp();
    probs.data.row(r) = e.transpose() / e.sum();
  }
  probs.data.bottomRows(n - logits.valid_rows).setConstant(Scalar(1) / Scalar(v));
  return probs;
}

namespace detail {

template <class Scalar>
NormReport<Scalar> norm_report_of(const MatrixX<Scalar>& m) {
  // two-sided Jacobi; BDCSVD in Eigen 3.4 returns non-finite singular values
  // on rank-deflated inputs such as motif-tiled logits
  Eigen::JacobiSVD<MatrixX<Scalar>> svd(m);
  if (svd.info() != Eigen::Success || !svd.singularValues().allFinite()) {
    Scalar cond = std::numeric_limits<Scalar>::quiet_NaN();
    Scalar smax = 0, smin = std::numeric_limits<Scalar>::infinity();
    for (Index i = 0; i < svd.singularValues().size(); ++i) {
      const Scalar s = svd.singularValues()(i);
      if (std::isfinite(s) && s > Scalar(0)) {
        smax = std::max(smax, s);
        smin = std::min(smin, s);
      }
    }
    if (smax > Scalar(0)) cond = smax / smin;
    std::ostringstream os;
    os << "nuclear_norm: SVD did not converge on " << m.rows() << "x"
       << m.cols() << " matrix (condition estimate " << cond << ")";
    throw std::runtime_error(os.str());
  }
  NormReport<Scalar> report;
  report.singular_values = svd.singularValues();
  report.nuclear = report.singular_values.sum();
  report.frobenius = m.norm();
  const Scalar sigma1 =
      report.singular_values.size() > 0 ? report.singular_values(0) : Scalar(0);
  report.effective_rank =
      (report.singular_values.array() > Scalar(1e-12) * sigma1).count();
  if (sigma1 == Scalar(0)) report.effective_rank = 0;
  return report;
}

}  // namespace detail

// Nuclear (trace) norm of the valid block: sum of singular values. Full
// dense SVD; zero padding rows would only contribute zero singular values,
// so they are dropped before the decomposition.
template <class Scalar>
NormReport<Scalar> nuclear_norm(const LogitsMatrix<Scalar>& logits) {
  validate_logits(logits);
  return detail::norm_report_of<Scalar>(logits.valid());
}

// Restriction to an explicit set of row positions (e.g. response-only
// scoring). Positions must index valid rows.
template <class Scalar>
NormReport<Scalar> nuclear_norm(const LogitsMatrix<Scalar>& logits,
                                const std::vector<Index>& positions) {
  validate_logits(logits);
  if (positions.empty())
    throw std::invalid_argument("nuclear_norm: empty position mask");
  MatrixX<Scalar> sub(static_cast<Index>(positions.size()), logits.cols());
  for (std::size_t i = 0; i < positions.size(); ++i) {
    const Index p = positions[i];
    if (p < 0 || p >= logits.valid_rows)
      throw std::invalid_argument("nuclear_norm: mask position outside valid rows");
    sub.row(static_cast<Index>(i)) = logits.data.row(p);
  }
  return detail::norm_report_of<Scalar>(sub);
}

// Both sides of the Frobenius/nuclear sandwich, reported as slacks:
//   nuclear - frobenius >= -tol and sqrt(min_dim)*frobenius - nuclear >= -tol
// with tol = 1e-9 * frobenius.
template <class Scalar>
BoundVerdict<Scalar> lemma_bounds_check(const NormReport<Scalar>& report,
                                        Index min_dim) {
  BoundVerdict<Scalar> v;
  v.tolerance = Scalar(1e-9) * report.frobenius;
  v.lower_slack = report.nuclear - report.frobenius;
  v.upper_slack =
      std::sqrt(static_cast<Scalar>(min_dim)) * report.frobenius - report.nuclear;
  v.lower_ok = v.lower_slack >= -v.tolerance;
  v.upper_ok = v.upper_slack >= -v.tolerance;
  return v;
}

}  // namespace uds
