#include "pep/downstream.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <stdexcept>

#include "pep/kernels.hpp"
#include "pep/random.hpp"

namespace pep {

// ---- embeddings -----------------------------------------------------------

Matrix post_embeddings(const ClaimConversation& conv, const Vocabulary& vocab,
                       const EncoderParams& params) {
  if (conv.posts.empty()) throw std::invalid_argument("post_embeddings: conversation has no posts");
  std::vector<TokenSequence> seqs;
  seqs.reserve(conv.size());
  for (const auto& p : conv.posts)
    seqs.push_back(encode_text(p.text, vocab, params.config().max_positions));
  return forward(seqs, params).cls;
}

std::vector<double> pool_rows(const Matrix& rows, Pooling pooling) {
  if (rows.rows() == 0) throw std::invalid_argument("pool_rows: no rows");
  const std::size_t n = rows.rows(), d = rows.cols();
  std::vector<double> out(d);
  std::vector<double> col(n);
  for (std::size_t j = 0; j < d; ++j) {
    for (std::size_t i = 0; i < n; ++i) col[i] = rows(i, j);
    if (pooling == Pooling::kMax) {
      out[j] = *std::max_element(col.begin(), col.end());
    } else {
      std::sort(col.begin(), col.end());
      out[j] = std::accumulate(col.begin(), col.end(), 0.0) / static_cast<double>(n);
    }
  }
  return out;
}

std::vector<double> claim_embedding(const ClaimConversation& conv, const Vocabulary& vocab,
                                    const EncoderParams& params, Pooling pooling) {
  return pool_rows(post_embeddings(conv, vocab, params), pooling);
}

Matrix claim_embeddings(std::span<const ClaimConversation> convs, const Vocabulary& vocab,
                        const EncoderParams& params, Pooling pooling) {
  for (const auto& c : convs)
    if (c.posts.empty()) throw std::invalid_argument("claim_embeddings: conversation " + c.id +
                                                     " has no posts");
  Matrix out(convs.size(), params.config().hidden);
  const auto count = static_cast<std::ptrdiff_t>(convs.size());
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t i = 0; i < count; ++i) {
    const auto e = claim_embedding(convs[static_cast<std::size_t>(i)], vocab, params, pooling);
    std::copy(e.begin(), e.end(), out.row(static_cast<std::size_t>(i)).begin());
  }
  return out;
}

// ---- labels ---------------------------------------------------------------

int LabelSet::index(const std::string& name) const {
  const auto it = std::lower_bound(names.begin(), names.end(), name);
  if (it == names.end() || *it != name) throw std::invalid_argument("unknown class label: " + name);
  return static_cast<int>(it - names.begin());
}

LabelSet LabelSet::from(std::span<const ClaimConversation> convs) {
  std::set<std::string> seen;
  for (const auto& c : convs) {
    if (!c.label) throw std::invalid_argument("conversation " + c.id + " has no label");
    seen.insert(*c.label);
  }
  return {{seen.begin(), seen.end()}};
}

std::vector<int> LabelSet::encode(std::span<const ClaimConversation> convs) const {
  std::vector<int> out;
  out.reserve(convs.size());
  for (const auto& c : convs) {
    if (!c.label) throw std::invalid_argument("conversation " + c.id + " has no label");
    out.push_back(index(*c.label));
  }
  return out;
}

Matrix select_rows(const Matrix& X, std::span<const std::size_t> rows) {
  Matrix out(rows.size(), X.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto r = X.row(rows[i]);
    std::copy(r.begin(), r.end(), out.row(i).begin());
  }
  return out;
}

// ---- linear probe ---------------------------------------------------------

namespace {

void check_labels(std::span<const int> y, std::size_t rows, std::size_t num_classes) {
  if (y.size() != rows) throw std::invalid_argument("labels and feature rows differ in count");
  if (rows == 0) throw std::invalid_argument("empty training set");
  std::set<int> present;
  for (int c : y) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes)
      throw std::invalid_argument("class id " + std::to_string(c) + " out of range");
    present.insert(c);
  }
  if (present.size() < 2)
    throw std::invalid_argument("training set holds a single class; need at least two");
}

// log-sum-exp cross-entropy for one row; fills softmax probabilities.
double row_ce(const double* z, std::size_t C, int y, double* prob) {
  const double mx = *std::max_element(z, z + C);
  double s = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    prob[c] = std::exp(z[c] - mx);
    s += prob[c];
  }
  for (std::size_t c = 0; c < C; ++c) prob[c] /= s;
  return std::log(s) + mx - z[y];
}

std::size_t argmax(std::span<const double> v) {
  return static_cast<std::size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

// Gradient descent with a backtracking (Armijo) line search. The trial step
// doubles after every accepted step.
template <class Objective>
std::size_t descend(std::vector<double>& theta, const Objective& f, double tolerance,
                    std::size_t max_iterations, double& loss_out) {
  std::vector<double> grad(theta.size()), trial(theta.size()), trial_grad;
  double loss = f(theta, &grad);
  double step = 1.0;
  std::size_t it = 0;
  for (; it < max_iterations; ++it) {
    const double g2 = squared_norm(grad);
    if (g2 == 0.0) break;
    double next = loss;
    for (int tries = 0; tries < 60; ++tries) {
      for (std::size_t i = 0; i < theta.size(); ++i) trial[i] = theta[i] - step * grad[i];
      next = f(trial, nullptr);
      if (std::isfinite(next) && next <= loss - 0.5 * step * g2) break;
      step *= 0.5;
    }
    if (!(next <= loss)) break;  // no descent possible at machine precision
    theta.swap(trial);
    const double change = loss - next;
    loss = f(theta, &grad);
    step *= 2.0;
    if (change < tolerance) {
      ++it;
      break;
    }
  }
  loss_out = loss;
  return it;
}

}  // namespace

LinearProbe::LinearProbe(std::size_t dim, std::size_t classes)
    : W_(dim, classes), b_(classes, 0.0), mean_(dim, 0.0), scale_(dim, 1.0) {}

Matrix LinearProbe::transform(const Matrix& X) const {
  if (X.cols() != dim()) throw std::invalid_argument("probe: feature width mismatch");
  Matrix Z(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) Z(i, j) = (X(i, j) - mean_[j]) / scale_[j];
  return Z;
}

Matrix LinearProbe::logits(const Matrix& X) const {
  const Matrix Z = transform(X);
  Matrix out(Z.rows(), classes());
  for (std::size_t i = 0; i < Z.rows(); ++i)
    std::copy(b_.begin(), b_.end(), out.row(i).begin());
  kernels::serial::gemm_nn(Z.rows(), classes(), dim(), Z.data(), W_.data(), out.data(), true);
  return out;
}

std::vector<int> LinearProbe::predict(const Matrix& X) const {
  const Matrix L = logits(X);
  std::vector<int> out(L.rows());
  for (std::size_t i = 0; i < L.rows(); ++i) out[i] = static_cast<int>(argmax(L.row(i)));
  return out;
}

double probe_objective(const Matrix& Z, std::span<const int> y, const Matrix& W,
                       std::span<const double> b, double l2, Matrix* dW,
                       std::vector<double>* db) {
  const std::size_t n = Z.rows(), D = Z.cols(), C = W.cols();
  Matrix L(n, C);
  for (std::size_t i = 0; i < n; ++i) std::copy(b.begin(), b.end(), L.row(i).begin());
  kernels::serial::gemm_nn(n, C, D, Z.data(), W.data(), L.data(), true);
  double loss = 0.0;
  std::vector<double> prob(C);
  const double inv = 1.0 / static_cast<double>(n);
  if (dW) *dW = Matrix(D, C);
  if (db) db->assign(C, 0.0);
  Matrix G(n, C);
  for (std::size_t i = 0; i < n; ++i) {
    loss += row_ce(&L(i, 0), C, y[i], prob.data());
    for (std::size_t c = 0; c < C; ++c)
      G(i, c) = (prob[c] - (static_cast<int>(c) == y[i] ? 1.0 : 0.0)) * inv;
  }
  loss *= inv;
  loss += 0.5 * l2 * (squared_norm(W.flat()) + squared_norm(b));
  if (dW) {
    kernels::serial::gemm_tn(D, C, n, Z.data(), G.data(), dW->data(), false);
    for (std::size_t k = 0; k < dW->size(); ++k) dW->data()[k] += l2 * W.data()[k];
  }
  if (db) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < C; ++c) (*db)[c] += G(i, c);
    for (std::size_t c = 0; c < C; ++c) (*db)[c] += l2 * b[c];
  }
  return loss;
}

LinearProbe train_probe(const Matrix& X, std::span<const int> y, std::size_t num_classes,
                        const ProbeConfig& config) {
  check_labels(y, X.rows(), num_classes);
  if (config.l2 < 0 || !(config.tolerance > 0))
    throw std::invalid_argument("probe: l2 must be >= 0 and tolerance > 0");
  const std::size_t n = X.rows(), D = X.cols(), C = num_classes;
  LinearProbe probe(D, C);
  if (config.standardize) {
    for (std::size_t j = 0; j < D; ++j) {
      double m = 0.0;
      for (std::size_t i = 0; i < n; ++i) m += X(i, j);
      m /= static_cast<double>(n);
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += (X(i, j) - m) * (X(i, j) - m);
      const double sd = std::sqrt(v / static_cast<double>(n));
      probe.mean()[j] = m;
      probe.scale()[j] = sd > 1e-12 ? sd : 1.0;
    }
  }
  const Matrix Z = probe.transform(X);

  // theta = [W (row-major D x C), b]
  std::vector<double> theta(D * C + C, 0.0);
  auto f = [&](const std::vector<double>& t, std::vector<double>* grad) {
    Matrix W(D, C);
    std::copy(t.begin(), t.begin() + static_cast<std::ptrdiff_t>(D * C), W.data());
    std::span<const double> b(t.data() + D * C, C);
    if (!grad) return probe_objective(Z, y, W, b, config.l2);
    Matrix dW;
    std::vector<double> db;
    const double loss = probe_objective(Z, y, W, b, config.l2, &dW, &db);
    std::copy(dW.data(), dW.data() + D * C, grad->begin());
    std::copy(db.begin(), db.end(), grad->begin() + static_cast<std::ptrdiff_t>(D * C));
    return loss;
  };
  probe.iterations = descend(theta, f, config.tolerance, config.max_iterations, probe.final_loss);
  probe.converged = probe.iterations < config.max_iterations;
  std::copy(theta.begin(), theta.begin() + static_cast<std::ptrdiff_t>(D * C),
            probe.weights().data());
  std::copy(theta.begin() + static_cast<std::ptrdiff_t>(D * C), theta.end(), probe.bias().begin());
  return probe;
}

// ---- graph convolution ----------------------------------------------------

namespace {

using Neighbors = std::vector<std::vector<std::pair<std::size_t, double>>>;

Neighbors neighbor_lists(std::span<const std::optional<std::size_t>> parent) {
  const std::size_t n = parent.size();
  std::vector<std::vector<std::size_t>> adj(n);
  for (std::size_t i = 0; i < n; ++i) {
    adj[i].push_back(i);
    if (parent[i]) {
      if (*parent[i] >= n) throw std::invalid_argument("graph: parent index out of range");
      adj[i].push_back(*parent[i]);
      adj[*parent[i]].push_back(i);
    }
  }
  Neighbors out(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j : adj[i])
      out[i].push_back(
          {j, 1.0 / std::sqrt(static_cast<double>(adj[i].size() * adj[j].size()))});
  return out;
}

// A M with every output entry summed in sorted order of its terms.
Matrix propagate(const Neighbors& nb, const Matrix& M) {
  Matrix out(M.rows(), M.cols());
  std::vector<double> terms;
  for (std::size_t i = 0; i < M.rows(); ++i)
    for (std::size_t k = 0; k < M.cols(); ++k) {
      terms.clear();
      for (const auto& [j, w] : nb[i]) terms.push_back(w * M(j, k));
      std::sort(terms.begin(), terms.end());
      out(i, k) = std::accumulate(terms.begin(), terms.end(), 0.0);
    }
  return out;
}

struct GcnOffsets {
  std::size_t w1, b1, w2, b2, wo, bo, total;
  GcnOffsets(std::size_t f, std::size_t h, std::size_t c) {
    w1 = 0;
    b1 = w1 + f * h;
    w2 = b1 + h;
    b2 = w2 + h * h;
    wo = b2 + h;
    bo = wo + h * c;
    total = bo + c;
  }
};

Matrix standardize_features(const Matrix& X, const std::vector<double>& mean,
                            const std::vector<double>& scale) {
  if (mean.empty()) return X;
  Matrix Z(X.rows(), X.cols());
  for (std::size_t i = 0; i < X.rows(); ++i)
    for (std::size_t j = 0; j < X.cols(); ++j) Z(i, j) = (X(i, j) - mean[j]) / scale[j];
  return Z;
}

struct GcnForward {
  Matrix ax, z1pre, z1, az1, z2pre, z2;
  std::vector<double> r, logits;
};

void dense(const Matrix& X, const double* W, const double* b, std::size_t out, Matrix& Y) {
  Y = Matrix(X.rows(), out);
  for (std::size_t i = 0; i < X.rows(); ++i) std::copy(b, b + out, Y.row(i).begin());
  kernels::serial::gemm_nn(X.rows(), out, X.cols(), X.data(), W, Y.data(), true);
}

Matrix relu(const Matrix& X) {
  Matrix Y = X;
  for (std::size_t k = 0; k < Y.size(); ++k) Y.data()[k] = std::max(0.0, Y.data()[k]);
  return Y;
}

GcnForward gcn_forward(const Neighbors& nb, const Matrix& ax, const std::vector<double>& th,
                       const GcnOffsets& o, std::size_t h, std::size_t C) {
  GcnForward f;
  f.ax = ax;
  dense(ax, &th[o.w1], &th[o.b1], h, f.z1pre);
  f.z1 = relu(f.z1pre);
  f.az1 = propagate(nb, f.z1);
  dense(f.az1, &th[o.w2], &th[o.b2], h, f.z2pre);
  f.z2 = relu(f.z2pre);
  f.r = pool_rows(f.z2, Pooling::kMean);
  f.logits.assign(th.begin() + static_cast<std::ptrdiff_t>(o.bo),
                  th.begin() + static_cast<std::ptrdiff_t>(o.bo + C));
  for (std::size_t k = 0; k < h; ++k)
    for (std::size_t c = 0; c < C; ++c) f.logits[c] += f.r[k] * th[o.wo + k * C + c];
  return f;
}

}  // namespace

Matrix normalized_adjacency(std::span<const std::optional<std::size_t>> parent) {
  const auto nb = neighbor_lists(parent);
  Matrix A(parent.size(), parent.size());
  for (std::size_t i = 0; i < nb.size(); ++i)
    for (const auto& [j, w] : nb[i]) A(i, j) = w;
  return A;
}

GraphExample graph_example(const ClaimConversation& conv, const Vocabulary& vocab,
                           const EncoderParams& params, int label) {
  GraphExample g;
  g.features = post_embeddings(conv, vocab, params);
  for (const auto& p : conv.posts) g.parent.push_back(p.parent);
  g.label = label;
  return g;
}

GcnClassifier::GcnClassifier(std::size_t in, std::size_t hidden, std::size_t classes,
                             std::uint64_t seed)
    : in_(in), hidden_(hidden), classes_(classes) {
  const GcnOffsets o(in, hidden, classes);
  theta_.assign(o.total, 0.0);
  std::mt19937_64 rng(seed);
  auto fill = [&](std::size_t off, std::size_t fan_in, std::size_t count) {
    std::normal_distribution<double> nd(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
    for (std::size_t k = 0; k < count; ++k) theta_[off + k] = nd(rng);
  };
  fill(o.w1, in, in * hidden);
  fill(o.w2, hidden, hidden * hidden);
  fill(o.wo, hidden, hidden * classes);
}

std::vector<double> GcnClassifier::logits(const GraphExample& g) const {
  if (g.features.cols() != in_) throw std::invalid_argument("gcn: feature width mismatch");
  if (g.features.rows() != g.parent.size() || g.parent.empty())
    throw std::invalid_argument("gcn: graph size mismatch");
  const auto nb = neighbor_lists(g.parent);
  const Matrix X = standardize_features(g.features, feature_mean, feature_scale);
  return gcn_forward(nb, propagate(nb, X), theta_, GcnOffsets(in_, hidden_, classes_), hidden_,
                     classes_)
      .logits;
}

int GcnClassifier::predict(const GraphExample& g) const {
  return static_cast<int>(argmax(logits(g)));
}

std::vector<int> GcnClassifier::predict(std::span<const GraphExample> graphs) const {
  std::vector<int> out;
  out.reserve(graphs.size());
  for (const auto& g : graphs) out.push_back(predict(g));
  return out;
}

double GcnClassifier::objective(std::span<const GraphExample> graphs, double l2,
                                std::vector<double>* grad) const {
  const GcnOffsets o(in_, hidden_, classes_);
  const std::size_t h = hidden_, C = classes_;
  if (grad) grad->assign(o.total, 0.0);
  double loss = 0.0;
  std::vector<double> prob(C);
  const double inv = 1.0 / static_cast<double>(graphs.size());
  for (const auto& g : graphs) {
    const auto nb = neighbor_lists(g.parent);
    const Matrix X = standardize_features(g.features, feature_mean, feature_scale);
    const GcnForward f = gcn_forward(nb, propagate(nb, X), theta_, o, h, C);
    loss += row_ce(f.logits.data(), C, g.label, prob.data()) * inv;
    if (!grad) continue;
    auto& G = *grad;
    std::vector<double> dl(C);
    for (std::size_t c = 0; c < C; ++c)
      dl[c] = (prob[c] - (static_cast<int>(c) == g.label ? 1.0 : 0.0)) * inv;
    std::vector<double> dr(h, 0.0);
    for (std::size_t k = 0; k < h; ++k)
      for (std::size_t c = 0; c < C; ++c) {
        G[o.wo + k * C + c] += f.r[k] * dl[c];
        dr[k] += theta_[o.wo + k * C + c] * dl[c];
      }
    for (std::size_t c = 0; c < C; ++c) G[o.bo + c] += dl[c];
    const std::size_t n = f.z2.rows();
    Matrix dz2(n, h);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < h; ++k)
        dz2(i, k) = f.z2pre(i, k) > 0 ? dr[k] / static_cast<double>(n) : 0.0;
    kernels::serial::gemm_tn(h, h, n, f.az1.data(), dz2.data(), &G[o.w2], true);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < h; ++k) G[o.b2 + k] += dz2(i, k);
    Matrix daz1(n, h);
    kernels::serial::gemm_nt(n, h, h, dz2.data(), &theta_[o.w2], daz1.data(), false);
    Matrix dz1 = propagate(nb, daz1);  // A is symmetric
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < h; ++k)
        if (f.z1pre(i, k) <= 0) dz1(i, k) = 0.0;
    kernels::serial::gemm_tn(in_, h, n, f.ax.data(), dz1.data(), &G[o.w1], true);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t k = 0; k < h; ++k) G[o.b1 + k] += dz1(i, k);
  }
  loss += 0.5 * l2 * squared_norm(theta_);
  if (grad)
    for (std::size_t k = 0; k < o.total; ++k) (*grad)[k] += l2 * theta_[k];
  return loss;
}

GcnClassifier train_gcn(std::span<const GraphExample> graphs, std::size_t num_classes,
                        const GcnConfig& config) {
  if (graphs.empty()) throw std::invalid_argument("gcn: empty training set");
  std::vector<int> y;
  for (const auto& g : graphs) y.push_back(g.label);
  check_labels(y, graphs.size(), num_classes);
  const std::size_t f = graphs.front().features.cols();
  GcnClassifier model(f, config.hidden, num_classes, config.seed);
  if (config.standardize) {
    std::vector<double> sum(f, 0.0), sq(f, 0.0);
    std::size_t nodes = 0;
    for (const auto& g : graphs) {
      if (g.features.cols() != f) throw std::invalid_argument("gcn: feature width mismatch");
      for (std::size_t i = 0; i < g.features.rows(); ++i, ++nodes)
        for (std::size_t j = 0; j < f; ++j) sum[j] += g.features(i, j);
    }
    model.feature_mean.resize(f);
    model.feature_scale.resize(f);
    for (std::size_t j = 0; j < f; ++j) model.feature_mean[j] = sum[j] / static_cast<double>(nodes);
    for (const auto& g : graphs)
      for (std::size_t i = 0; i < g.features.rows(); ++i)
        for (std::size_t j = 0; j < f; ++j) {
          const double c = g.features(i, j) - model.feature_mean[j];
          sq[j] += c * c;
        }
    for (std::size_t j = 0; j < f; ++j) {
      const double sd = std::sqrt(sq[j] / static_cast<double>(nodes));
      model.feature_scale[j] = sd > 1e-12 ? sd : 1.0;
    }
  }
  std::vector<double> theta = model.params();
  auto obj = [&](const std::vector<double>& t, std::vector<double>* grad) {
    model.params() = t;
    return model.objective(graphs, config.l2, grad);
  };
  double loss = 0.0;
  model.iterations = descend(theta, obj, config.tolerance, config.max_iterations, loss);
  model.params() = theta;
  model.final_loss = loss;
  return model;
}

// ---- metrics --------------------------------------------------------------

Metrics evaluate(std::span<const int> predictions, std::span<const int> labels,
                 std::size_t num_classes, bool balanced) {
  if (predictions.size() != labels.size())
    throw std::invalid_argument("evaluate: predictions and labels differ in length");
  if (labels.empty()) throw std::invalid_argument("evaluate: empty input");
  Metrics m;
  m.balanced = balanced;
  m.confusion.assign(num_classes, std::vector<std::size_t>(num_classes, 0));
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int t = labels[i], p = predictions[i];
    if (t < 0 || p < 0 || static_cast<std::size_t>(t) >= num_classes ||
        static_cast<std::size_t>(p) >= num_classes)
      throw std::invalid_argument("evaluate: class id out of range");
    ++m.confusion[static_cast<std::size_t>(t)][static_cast<std::size_t>(p)];
  }
  std::size_t correct = 0;
  for (std::size_t c = 0; c < num_classes; ++c) correct += m.confusion[c][c];
  m.accuracy = static_cast<double>(correct) / static_cast<double>(labels.size());
  m.per_class.resize(num_classes);
  double f1_sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    std::size_t predicted = 0, actual = 0;
    for (std::size_t k = 0; k < num_classes; ++k) {
      predicted += m.confusion[k][c];
      actual += m.confusion[c][k];
    }
    auto& pc = m.per_class[c];
    const double tp = static_cast<double>(m.confusion[c][c]);
    pc.support = actual;
    pc.precision = predicted ? tp / static_cast<double>(predicted) : 0.0;
    pc.recall = actual ? tp / static_cast<double>(actual) : 0.0;
    pc.f1 = pc.precision + pc.recall > 0
                ? 2.0 * pc.precision * pc.recall / (pc.precision + pc.recall)
                : 0.0;
    f1_sum += pc.f1;
  }
  m.macro_f1 = f1_sum / static_cast<double>(num_classes);
  return m;
}

namespace {

std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(v.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
    const double r = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("roc_auc: length mismatch");
  const auto ranks = average_ranks(scores);
  double pos = 0, rank_sum = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) {
      ++pos;
      rank_sum += ranks[i];
    }
  const double neg = static_cast<double>(labels.size()) - pos;
  if (pos == 0 || neg == 0) throw std::invalid_argument("roc_auc: need both classes");
  return (rank_sum - pos * (pos + 1) / 2.0) / (pos * neg);
}

double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2)
    throw std::invalid_argument("spearman: need two equal-length series of length >= 2");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0 || syy == 0) return 0.0;
  return sxy / std::sqrt(sxx * syy);
}

// ---- few-shot ---------------------------------------------------------------

std::vector<std::size_t> stratified_sample(std::span<const int> labels, std::size_t num_classes,
                                           std::size_t k, std::uint64_t seed) {
  if (k == 0 || k > labels.size())
    throw std::invalid_argument("few-shot: k = " + std::to_string(k) +
                                " outside [1, " + std::to_string(labels.size()) + "]");
  std::vector<std::vector<std::size_t>> by_class(num_classes);
  for (std::size_t i = 0; i < labels.size(); ++i)
    by_class.at(static_cast<std::size_t>(labels[i])).push_back(i);

  std::vector<std::size_t> quota(num_classes, 0);
  std::vector<std::pair<double, std::size_t>> remainders;
  std::size_t assigned = 0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double exact = static_cast<double>(k) * static_cast<double>(by_class[c].size()) /
                         static_cast<double>(labels.size());
    quota[c] = static_cast<std::size_t>(std::floor(exact));
    assigned += quota[c];
    remainders.push_back({exact - std::floor(exact), c});
  }
  std::stable_sort(remainders.begin(), remainders.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < k; r = (r + 1) % num_classes) {
    const std::size_t c = remainders[r].second;
    if (quota[c] < by_class[c].size()) {
      ++quota[c];
      ++assigned;
    }
  }
  // At least one per present class when k allows: take from the largest quota.
  std::size_t present = 0;
  for (const auto& v : by_class) present += v.empty() ? 0 : 1;
  if (k >= present)
    for (std::size_t c = 0; c < num_classes; ++c)
      if (!by_class[c].empty() && quota[c] == 0) {
        const auto donor = static_cast<std::size_t>(
            std::max_element(quota.begin(), quota.end()) - quota.begin());
        --quota[donor];
        ++quota[c];
      }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> out;
  for (std::size_t c = 0; c < num_classes; ++c) {
    auto pool = by_class[c];
    for (std::size_t i = 0; i < quota[c]; ++i) {
      const std::size_t j = i + static_cast<std::size_t>(rng() % (pool.size() - i));
      std::swap(pool[i], pool[j]);
      out.push_back(pool[i]);
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

FewShotResult few_shot_run(std::span<const int> train_labels, std::span<const int> test_labels,
                           std::size_t num_classes, const FewShotConfig& config, bool balanced,
                           const FitPredict& fit_predict) {
  if (config.repetitions == 0) throw std::invalid_argument("few-shot: repetitions must be >= 1");
  if (config.k_values.empty()) throw std::invalid_argument("few-shot: no k values");
  for (std::size_t k : config.k_values)
    if (k == 0 || k > train_labels.size())
      throw std::invalid_argument("few-shot: k = " + std::to_string(k) +
                                  " exceeds the training pool of " +
                                  std::to_string(train_labels.size()));
  FewShotResult result;
  for (std::size_t k : config.k_values) {
    std::vector<double> values;
    for (std::size_t rep = 0; rep < config.repetitions; ++rep) {
      const auto subset =
          stratified_sample(train_labels, num_classes, k, mix_seed({config.seed, k, rep}));
      const auto pred = fit_predict(subset);
      FewShotRun run{k, rep, evaluate(pred, test_labels, num_classes, balanced)};
      values.push_back(run.metrics.primary());
      result.runs.push_back(std::move(run));
    }
    FewShotPoint pt{k, 0.0, 0.0};
    pt.mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
    if (values.size() > 1) {
      double s = 0.0;
      for (double v : values) s += (v - pt.mean) * (v - pt.mean);
      pt.stddev = std::sqrt(s / static_cast<double>(values.size() - 1));
    }
    result.curve.push_back(pt);
  }
  return result;
}

FewShotResult few_shot_probe(const Matrix& train_X, std::span<const int> train_y,
                             const Matrix& test_X, std::span<const int> test_y,
                             std::size_t num_classes, const FewShotConfig& config, bool balanced,
                             const ProbeConfig& probe) {
  if (train_X.rows() != train_y.size() || test_X.rows() != test_y.size())
    throw std::invalid_argument("few-shot: features and labels differ in count");
  return few_shot_run(train_y, test_y, num_classes, config, balanced,
                      [&](std::span<const std::size_t> subset) {
                        std::vector<int> y;
                        for (std::size_t i : subset) y.push_back(train_y[i]);
                        const auto model =
                            train_probe(select_rows(train_X, subset), y, num_classes, probe);
                        return model.predict(test_X);
                      });
}

std::string format_curve(const FewShotResult& result) {
  std::string out = "k\tmean\tstddev\n";
  char buf[96];
  for (const auto& p : result.curve) {
    std::snprintf(buf, sizeof buf, "%zu\t%.6f\t%.6f\n", p.k, p.mean, p.stddev);
    out += buf;
  }
  return out;
}

}  // namespace pep
