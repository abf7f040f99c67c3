#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "uds/norm_score.hpp"
#include "uds/rng.hpp"

namespace uds {

enum class ToyArch { LinearSoftmax, TinyMLP };

inline std::string to_string(ToyArch a) {
  return a == ToyArch::LinearSoftmax ? "linear-softmax" : "tiny-mlp";
}

struct ToyModelConfig {
  ToyArch arch = ToyArch::TinyMLP;
  int vocab = 128;
  int context = 64;
  int embed_dim = 32;
  int hidden_dim = 64;  // TinyMLP only
};

// Small autoregressive softmax language model over a flat parameter vector.
//
// LinearSoftmax: logits_n = Wout * emb[x_n] (a trainable bigram model).
// TinyMLP: one tanh hidden layer fed by the current token embedding and the
// causal prefix-mean embedding, so logits depend on the whole prefix:
//   c_n = mean_{m<=n} emb[x_m]
//   h_n = tanh(W1a * emb[x_n] + W1c * c_n + b1)
//   logits_n = W2 * h_n + b2
class ToyModel {
 public:
  ToyModel(const ToyModelConfig& cfg, std::uint64_t seed) : cfg_(cfg) {
    if (cfg.vocab < 2) throw std::invalid_argument("ToyModel: vocab must be >= 2");
    if (cfg.context < 2) throw std::invalid_argument("ToyModel: context must be >= 2");
    if (cfg.embed_dim < 1 || cfg.hidden_dim < 1)
      throw std::invalid_argument("ToyModel: dimensions must be positive");
    theta_ = VectorXd::Zero(param_count_of(cfg));
    Rng rng(seed, "model-init");
    const int e = cfg.embed_dim, v = cfg.vocab, h = cfg.hidden_dim;
    auto fill = [&](Index offset, Index count, double scale) {
      for (Index i = 0; i < count; ++i) theta_(offset + i) = rng.gauss() * scale;
    };
    if (cfg.arch == ToyArch::LinearSoftmax) {
      fill(0, Index(e) * v, 1.0);                              // emb
      fill(Index(e) * v, Index(v) * e, 1.0 / std::sqrt(e));    // wout
    } else {
      Index off = 0;
      fill(off, Index(e) * v, 1.0); off += Index(e) * v;                    // emb
      fill(off, Index(h) * e, 1.0 / std::sqrt(e)); off += Index(h) * e;     // w1a
      fill(off, Index(h) * e, 1.0 / std::sqrt(e)); off += Index(h) * e;     // w1c
      off += h;                                                             // b1 = 0
      fill(off, Index(v) * h, 1.0 / std::sqrt(h));                          // w2
    }
  }

  static Index param_count_of(const ToyModelConfig& cfg) {
    const Index e = cfg.embed_dim, v = cfg.vocab, h = cfg.hidden_dim;
    if (cfg.arch == ToyArch::LinearSoftmax) return e * v + v * e;
    return e * v + 2 * h * e + h + v * h + v;
  }

  const ToyModelConfig& config() const { return cfg_; }
  Index param_count() const { return theta_.size(); }
  const VectorXd& params() const { return theta_; }
  VectorXd& params() { return theta_; }

  LogitsMatrix<double> forward(const std::vector<int>& tokens) const {
    check_tokens(tokens);
    const Index n = static_cast<Index>(tokens.size());
    MatrixXd logits(n, cfg_.vocab);
    if (cfg_.arch == ToyArch::LinearSoftmax) {
      auto [emb, wout] = linear_views(theta_);
      for (Index i = 0; i < n; ++i)
        logits.row(i) = (wout * emb.col(tokens[static_cast<std::size_t>(i)])).transpose();
    } else {
      auto p = mlp_views(theta_);
      VectorXd prefix = VectorXd::Zero(cfg_.embed_dim);
      for (Index i = 0; i < n; ++i) {
        const int tok = tokens[static_cast<std::size_t>(i)];
        prefix += p.emb.col(tok);
        const VectorXd a = p.emb.col(tok);
        const VectorXd c = prefix / static_cast<double>(i + 1);
        const VectorXd h = (p.w1a * a + p.w1c * c + p.b1).array().tanh();
        logits.row(i) = (p.w2 * h + p.b2).transpose();
      }
    }
    return LogitsMatrix<double>(std::move(logits));
  }

  // Directional derivative of the logits along a parameter tangent
  // (forward-mode through the same graph as forward()).
  MatrixXd logits_jvp(const std::vector<int>& tokens, const VectorXd& tangent) const {
    check_tokens(tokens);
    if (tangent.size() != theta_.size())
      throw std::invalid_argument("logits_jvp: tangent length does not match parameters");
    const Index n = static_cast<Index>(tokens.size());
    MatrixXd delta(n, cfg_.vocab);
    if (cfg_.arch == ToyArch::LinearSoftmax) {
      auto [emb, wout] = linear_views(theta_);
      auto [demb, dwout] = linear_views(tangent);
      for (Index i = 0; i < n; ++i) {
        const int tok = tokens[static_cast<std::size_t>(i)];
        delta.row(i) = (dwout * emb.col(tok) + wout * demb.col(tok)).transpose();
      }
    } else {
      auto p = mlp_views(theta_);
      auto t = mlp_views(tangent);
      VectorXd prefix = VectorXd::Zero(cfg_.embed_dim);
      VectorXd dprefix = VectorXd::Zero(cfg_.embed_dim);
      for (Index i = 0; i < n; ++i) {
        const int tok = tokens[static_cast<std::size_t>(i)];
        prefix += p.emb.col(tok);
        dprefix += t.emb.col(tok);
        const double inv = 1.0 / static_cast<double>(i + 1);
        const VectorXd a = p.emb.col(tok);
        const VectorXd c = prefix * inv;
        const VectorXd da = t.emb.col(tok);
        const VectorXd dc = dprefix * inv;
        const VectorXd u = p.w1a * a + p.w1c * c + p.b1;
        const VectorXd h = u.array().tanh();
        const VectorXd du = t.w1a * a + p.w1a * da + t.w1c * c + p.w1c * dc + t.b1;
        const VectorXd dh = (1.0 - h.array().square()) * du.array();
        delta.row(i) = (t.w2 * h + p.w2 * dh + t.b2).transpose();
      }
    }
    return delta;
  }

  // Gradient accumulation callback used by loss_and_grad: adds
  // sum_n dL.row(n) contributions back through the graph into grad.
  void backward(const std::vector<int>& tokens, const MatrixXd& dlogits,
                VectorXd& grad) const {
    check_tokens(tokens);
    const Index n = static_cast<Index>(tokens.size());
    if (dlogits.rows() != n || dlogits.cols() != cfg_.vocab)
      throw std::invalid_argument("backward: dlogits shape mismatch");
    if (grad.size() != theta_.size()) grad = VectorXd::Zero(theta_.size());
    if (cfg_.arch == ToyArch::LinearSoftmax) {
      auto [emb, wout] = linear_views(theta_);
      auto [gemb, gwout] = linear_views_mut(grad);
      for (Index i = 0; i < n; ++i) {
        const int tok = tokens[static_cast<std::size_t>(i)];
        gwout.noalias() += dlogits.row(i).transpose() * emb.col(tok).transpose();
        gemb.col(tok).noalias() += wout.transpose() * dlogits.row(i).transpose();
      }
    } else {
      auto p = mlp_views(theta_);
      auto g = mlp_views_mut(grad);
      // forward caches
      MatrixXd hs(cfg_.hidden_dim, n), as(cfg_.embed_dim, n), cs(cfg_.embed_dim, n);
      VectorXd prefix = VectorXd::Zero(cfg_.embed_dim);
      for (Index i = 0; i < n; ++i) {
        const int tok = tokens[static_cast<std::size_t>(i)];
        prefix += p.emb.col(tok);
        as.col(i) = p.emb.col(tok);
        cs.col(i) = prefix / static_cast<double>(i + 1);
        hs.col(i) = (p.w1a * as.col(i) + p.w1c * cs.col(i) + p.b1).array().tanh();
      }
      // reverse pass; prefix-mean gradients accumulate from later positions
      VectorXd carry = VectorXd::Zero(cfg_.embed_dim);
      std::vector<VectorXd> dcs(static_cast<std::size_t>(n));
      for (Index i = 0; i < n; ++i) {
        const VectorXd dl = dlogits.row(i).transpose();
        g.w2.noalias() += dl * hs.col(i).transpose();
        g.b2.noalias() += dl;
        const VectorXd dh = p.w2.transpose() * dl;
        const VectorXd du = dh.array() * (1.0 - hs.col(i).array().square());
        g.w1a.noalias() += du * as.col(i).transpose();
        g.w1c.noalias() += du * cs.col(i).transpose();
        g.b1.noalias() += du;
        g.emb.col(tokens[static_cast<std::size_t>(i)]).noalias() +=
            p.w1a.transpose() * du;
        dcs[static_cast<std::size_t>(i)] =
            (p.w1c.transpose() * du) / static_cast<double>(i + 1);
      }
      for (Index i = n - 1; i >= 0; --i) {
        carry += dcs[static_cast<std::size_t>(i)];
        g.emb.col(tokens[static_cast<std::size_t>(i)]).noalias() += carry;
      }
    }
  }

 private:
  void check_tokens(const std::vector<int>& tokens) const {
    if (tokens.empty()) throw std::invalid_argument("ToyModel: empty token sequence");
    if (static_cast<int>(tokens.size()) > cfg_.context)
      throw std::invalid_argument("ToyModel: sequence exceeds context window");
    for (int t : tokens)
      if (t < 0 || t >= cfg_.vocab) {
        std::ostringstream os;
        os << "ToyModel: token " << t << " outside vocabulary of " << cfg_.vocab;
        throw std::invalid_argument(os.str());
      }
  }

  using ConstMap = Eigen::Map<const MatrixXd>;
  using ConstVecMap = Eigen::Map<const VectorXd>;
  using MutMap = Eigen::Map<MatrixXd>;
  using MutVecMap = Eigen::Map<VectorXd>;

  std::pair<ConstMap, ConstMap> linear_views(const VectorXd& th) const {
    const int e = cfg_.embed_dim, v = cfg_.vocab;
    return {ConstMap(th.data(), e, v), ConstMap(th.data() + Index(e) * v, v, e)};
  }
  std::pair<MutMap, MutMap> linear_views_mut(VectorXd& th) const {
    const int e = cfg_.embed_dim, v = cfg_.vocab;
    return {MutMap(th.data(), e, v), MutMap(th.data() + Index(e) * v, v, e)};
  }

  struct MlpViews {
    ConstMap emb, w1a, w1c;
    ConstVecMap b1;
    ConstMap w2;
    ConstVecMap b2;
  };
  struct MlpViewsMut {
    MutMap emb, w1a, w1c;
    MutVecMap b1;
    MutMap w2;
    MutVecMap b2;
  };

  MlpViews mlp_views(const VectorXd& th) const {
    const Index e = cfg_.embed_dim, v = cfg_.vocab, h = cfg_.hidden_dim;
    const double* d = th.data();
    return {ConstMap(d, e, v), ConstMap(d + e * v, h, e),
            ConstMap(d + e * v + h * e, h, e),
            ConstVecMap(d + e * v + 2 * h * e, h),
            ConstMap(d + e * v + 2 * h * e + h, v, h),
            ConstVecMap(d + e * v + 2 * h * e + h + v * h, v)};
  }
  MlpViewsMut mlp_views_mut(VectorXd& th) const {
    const Index e = cfg_.embed_dim, v = cfg_.vocab, h = cfg_.hidden_dim;
    double* d = th.data();
    return {MutMap(d, e, v), MutMap(d + e * v, h, e),
            MutMap(d + e * v + h * e, h, e),
            MutVecMap(d + e * v + 2 * h * e, h),
            MutMap(d + e * v + 2 * h * e + h, v, h),
            MutVecMap(d + e * v + 2 * h * e + h + v * h, v)};
  }

  ToyModelConfig cfg_;
  VectorXd theta_;
};

inline LogitsMatrix<double> forward_logits(const ToyModel& model,
                                           const std::vector<int>& tokens) {
  return model.forward(tokens);
}

struct Sample {
  std::vector<int> tokens;
  int prompt_len = 1;  // targets are tokens[prompt_len..)
  std::int64_t id = 0;
  int origin = 0;  // 0 = cluster member, 1 = distinct, 2 = repetitive
};

// Logits rows whose next-token labels fall in the target span.
inline std::vector<Index> target_rows(const Sample& sample) {
  const int t = static_cast<int>(sample.tokens.size());
  const int first = std::max(sample.prompt_len, 1);
  std::vector<Index> rows;
  for (int j = first; j < t; ++j) rows.push_back(Index(j) - 1);
  return rows;
}

// One-hot labels over the target span; rows outside the span are zero.
inline MatrixXd targets_onehot(const Sample& sample, int vocab) {
  const Index n = static_cast<Index>(sample.tokens.size());
  MatrixXd y = MatrixXd::Zero(n, vocab);
  for (Index r : target_rows(sample))
    y(r, sample.tokens[static_cast<std::size_t>(r) + 1]) = 1.0;
  return y;
}

namespace detail {

inline double row_cross_entropy(const Eigen::Ref<const Eigen::RowVectorXd>& logits,
                                int label) {
  const double m = logits.maxCoeff();
  const double lse = m + std::log((logits.array() - m).exp().sum());
  return lse - logits(label);
}

}  // namespace detail

// Mean cross-entropy over the target span.
inline double sample_loss(const ToyModel& model, const Sample& sample) {
  const auto rows = target_rows(sample);
  if (rows.empty())
    throw std::invalid_argument("sample_loss: empty target span");
  const LogitsMatrix<double> logits = model.forward(sample.tokens);
  double loss = 0;
  for (Index r : rows)
    loss += detail::row_cross_entropy(
        logits.data.row(r), sample.tokens[static_cast<std::size_t>(r) + 1]);
  return loss / static_cast<double>(rows.size());
}

// Mean cross-entropy over the target span and its exact parameter gradient.
inline std::pair<double, VectorXd> loss_and_grad(const ToyModel& model,
                                                 const Sample& sample) {
  const auto rows = target_rows(sample);
  if (rows.empty())
    throw std::invalid_argument("loss_and_grad: empty target span");
  const LogitsMatrix<double> logits = model.forward(sample.tokens);
  const Index n = logits.rows();
  const int vocab = model.config().vocab;
  MatrixXd dlogits = MatrixXd::Zero(n, vocab);
  const double inv = 1.0 / static_cast<double>(rows.size());
  double loss = 0;
  for (Index r : rows) {
    const int label = sample.tokens[static_cast<std::size_t>(r) + 1];
    loss += detail::row_cross_entropy(logits.data.row(r), label);
    const double m = logits.data.row(r).maxCoeff();
    Eigen::RowVectorXd p = (logits.data.row(r).array() - m).exp();
    p /= p.sum();
    dlogits.row(r) = p * inv;
    dlogits(r, label) -= inv;
  }
  loss *= inv;
  VectorXd grad = VectorXd::Zero(model.param_count());
  model.backward(sample.tokens, dlogits, grad);
  if (!grad.allFinite())
    throw std::runtime_error("loss_and_grad: non-finite gradient");
  return {loss, std::move(grad)};
}

// ---------------------------------------------------------------------------
// Optimizer

struct OptimizerState {
  enum class Kind { SGD, Adam };
  Kind kind = Kind::SGD;
  double lr = 0.1;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  VectorXd m, v;
  std::int64_t step = 0;

  static OptimizerState sgd(double lr) {
    OptimizerState s;
    s.kind = Kind::SGD;
    s.lr = lr;
    return s;
  }
  static OptimizerState adam(double lr, Index n, double beta1 = 0.9,
                             double beta2 = 0.999, double eps = 1e-8) {
    OptimizerState s;
    s.kind = Kind::Adam;
    s.lr = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.eps = eps;
    s.m = VectorXd::Zero(n);
    s.v = VectorXd::Zero(n);
    return s;
  }

  // Parameter delta the next update would apply for gradient g, without
  // mutating the state. Pass lr_override >= 0 to probe other step sizes.
  VectorXd preview_delta(const VectorXd& grad, double lr_override = -1) const {
    const double eta = lr_override >= 0 ? lr_override : lr;
    if (kind == Kind::SGD) return -eta * grad;
    if (grad.size() != m.size())
      throw std::invalid_argument("OptimizerState: gradient length mismatch");
    const double t = static_cast<double>(step + 1);
    const VectorXd mt = beta1 * m + (1.0 - beta1) * grad;
    const VectorXd vt = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
    const VectorXd mhat = mt / (1.0 - std::pow(beta1, t));
    const VectorXd vhat = vt / (1.0 - std::pow(beta2, t));
    return (-eta * mhat.array() / (vhat.array().sqrt() + eps)).matrix();
  }
};

// Applies one optimizer step in place and returns the applied delta.
// SGD: theta - lr * grad. Adam: bias-corrected moments exactly as the
// standard recurrences; callers pass the batch-mean gradient.
inline VectorXd apply_update(OptimizerState& state, VectorXd& theta,
                             const VectorXd& grad) {
  if (grad.size() != theta.size())
    throw std::invalid_argument("apply_update: gradient length mismatch");
  VectorXd delta = state.preview_delta(grad);
  if (!delta.allFinite())
    throw std::runtime_error("apply_update: non-finite update");
  if (state.kind == OptimizerState::Kind::Adam) {
    state.m = state.beta1 * state.m + (1.0 - state.beta1) * grad;
    state.v = state.beta2 * state.v + (1.0 - state.beta2) * grad.cwiseProduct(grad);
  }
  ++state.step;
  theta += delta;
  return delta;
}

// ---------------------------------------------------------------------------
// Synthetic corpus ("uds-corpus-v1")
//
// Sequences are noisy walks over a random successor permutation of the
// vocabulary, so next-token structure is learnable by construction. Three
// populations with different roles:
//   cluster members — near-duplicates of a per-cluster prototype walk
//                     (inter-sample redundancy),
//   distinct        — fresh walks from random starts,
//   repetitive      — short motifs tiled to full length (low-rank logits).
// The eval split holds fresh walks from the same chain.

struct CorpusSpec {
  int num_clusters = 10;
  int duplication = 8;  // members per cluster
  int num_distinct = 64;
  int num_repetitive = 0;
  int eval_samples = 64;
  int sample_len = 48;
  int prompt_len = 4;
  int vocab = 128;
  double dup_noise = 0.05;    // per-token substitution within a cluster
  double chain_noise = 0.10;  // deviation prob from the successor chain

  void validate() const {
    if (vocab < 2) throw std::invalid_argument("CorpusSpec: vocab must be >= 2");
    if (sample_len < 2) throw std::invalid_argument("CorpusSpec: sample_len must be >= 2");
    if (prompt_len < 1 || prompt_len >= sample_len)
      throw std::invalid_argument("CorpusSpec: need 1 <= prompt_len < sample_len");
    if (num_clusters < 0 || duplication < 0 || num_distinct < 0 ||
        num_repetitive < 0 || eval_samples < 0)
      throw std::invalid_argument("CorpusSpec: counts must be nonnegative");
    if (num_clusters * duplication + num_distinct + num_repetitive < 1)
      throw std::invalid_argument("CorpusSpec: corpus would be empty");
    if (!(dup_noise >= 0 && dup_noise <= 1 && chain_noise >= 0 && chain_noise <= 1))
      throw std::invalid_argument("CorpusSpec: noise rates must lie in [0, 1]");
  }
};

struct SyntheticCorpus {
  std::vector<Sample> train;
  std::vector<Sample> eval;
  CorpusSpec spec;
  std::uint64_t seed = 0;
};

inline SyntheticCorpus make_corpus(const CorpusSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(seed, "corpus");
  const int v = spec.vocab;

  std::vector<int> succ(static_cast<std::size_t>(v));
  std::iota(succ.begin(), succ.end(), 0);
  for (int i = v - 1; i > 0; --i)
    std::swap(succ[static_cast<std::size_t>(i)],
              succ[rng.below(static_cast<std::uint64_t>(i + 1))]);

  auto walk = [&](int start) {
    std::vector<int> tokens(static_cast<std::size_t>(spec.sample_len));
    tokens[0] = start;
    for (int k = 1; k < spec.sample_len; ++k) {
      const int prev = tokens[static_cast<std::size_t>(k - 1)];
      tokens[static_cast<std::size_t>(k)] =
          rng.unit() < spec.chain_noise
              ? static_cast<int>(rng.below(static_cast<std::uint64_t>(v)))
              : succ[static_cast<std::size_t>(prev)];
    }
    return tokens;
  };

  SyntheticCorpus corpus;
  corpus.spec = spec;
  corpus.seed = seed;
  std::int64_t next_id = 0;

  for (int c = 0; c < spec.num_clusters; ++c) {
    const std::vector<int> proto = walk(static_cast<int>(rng.below(v)));
    for (int d = 0; d < spec.duplication; ++d) {
      Sample s;
      s.tokens = proto;
      if (d > 0) {  // the first member is the prototype itself
        for (auto& tok : s.tokens)
          if (rng.unit() < spec.dup_noise)
            tok = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
      }
      s.prompt_len = spec.prompt_len;
      s.id = next_id++;
      s.origin = 0;
      corpus.train.push_back(std::move(s));
    }
  }
  for (int i = 0; i < spec.num_distinct; ++i) {
    Sample s;
    s.tokens = walk(static_cast<int>(rng.below(v)));
    s.prompt_len = spec.prompt_len;
    s.id = next_id++;
    s.origin = 1;
    corpus.train.push_back(std::move(s));
  }
  for (int i = 0; i < spec.num_repetitive; ++i) {
    const int motif_len = 1 + static_cast<int>(rng.below(4));
    std::vector<int> motif(static_cast<std::size_t>(motif_len));
    for (auto& t : motif) t = static_cast<int>(rng.below(static_cast<std::uint64_t>(v)));
    Sample s;
    s.tokens.resize(static_cast<std::size_t>(spec.sample_len));
    for (int k = 0; k < spec.sample_len; ++k)
      s.tokens[static_cast<std::size_t>(k)] = motif[static_cast<std::size_t>(k % motif_len)];
    s.prompt_len = spec.prompt_len;
    s.id = next_id++;
    s.origin = 2;
    corpus.train.push_back(std::move(s));
  }
  for (int i = 0; i < spec.eval_samples; ++i) {
    Sample s;
    s.tokens = walk(static_cast<int>(rng.below(v)));
    s.prompt_len = spec.prompt_len;
    s.id = i;
    s.origin = 1;
    corpus.eval.push_back(std::move(s));
  }
  return corpus;
}

}  // namespace uds
