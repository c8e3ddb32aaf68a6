#include <gtest/gtest.h>

#include <cmath>
#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "pep/downstream.hpp"
#include "pep/synthetic.hpp"

using pep::Matrix;

namespace {

Matrix blobs(std::size_t n, std::size_t dim, std::size_t classes, std::vector<int>& y,
             std::uint64_t seed, double spread = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> g(0.0, spread);
  Matrix X(n, dim);
  y.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    y[i] = static_cast<int>(i % classes);
    for (std::size_t j = 0; j < dim; ++j) X(i, j) = g(rng) + (j == static_cast<std::size_t>(y[i]) ? 2.0 : 0.0);
  }
  return X;
}

}  // namespace

TEST(Metrics, HandComputedConfusion) {
  const std::vector<int> truth = {0, 0, 0, 1, 1, 2};
  const std::vector<int> pred = {0, 0, 1, 1, 2, 2};
  const auto m = pep::evaluate(pred, truth, 3);
  EXPECT_DOUBLE_EQ(m.accuracy, 4.0 / 6.0);
  EXPECT_DOUBLE_EQ(m.per_class[0].precision, 1.0);
  EXPECT_DOUBLE_EQ(m.per_class[0].recall, 2.0 / 3.0);
  EXPECT_DOUBLE_EQ(m.per_class[1].precision, 0.5);
  EXPECT_DOUBLE_EQ(m.per_class[2].precision, 0.5);
  EXPECT_DOUBLE_EQ(m.per_class[2].recall, 1.0);
  const double f0 = 0.8, f1 = 0.5, f2 = 2.0 / 3.0;
  EXPECT_NEAR(m.macro_f1, (f0 + f1 + f2) / 3.0, 1e-15);
  EXPECT_EQ(m.confusion[1][2], 1u);
  EXPECT_DOUBLE_EQ(m.primary(), m.accuracy);
  const auto u = pep::evaluate(pred, truth, 3, false);
  EXPECT_DOUBLE_EQ(u.primary(), u.macro_f1);
}

TEST(Metrics, AbsentClassScoresZero) {
  const auto m = pep::evaluate(std::vector<int>{0, 0}, std::vector<int>{0, 0}, 2);
  EXPECT_EQ(m.per_class[1].f1, 0.0);
  EXPECT_EQ(m.per_class[1].support, 0u);
}

TEST(Metrics, AucAndSpearman) {
  std::mt19937_64 rng(1);
  std::vector<double> s;
  std::vector<int> l;
  for (int i = 0; i < 300; ++i) {
    l.push_back(static_cast<int>(rng() % 2));
    s.push_back(static_cast<double>(rng() % 20) + l.back() * 3.0);  // ties on purpose
  }
  EXPECT_NEAR(pep::roc_auc(s, l), oracle::pair_count_auc(s, l), 1e-12);
  EXPECT_THROW(pep::roc_auc(std::vector<double>{1, 2}, std::vector<int>{1, 1}), std::invalid_argument);
  const std::vector<double> x = {1, 2, 3, 4, 5}, y = {2, 4, 6, 8, 100}, z = {5, 4, 3, 2, 1};
  EXPECT_NEAR(pep::spearman(x, y), 1.0, 1e-12);
  EXPECT_NEAR(pep::spearman(x, z), -1.0, 1e-12);
  EXPECT_NEAR(pep::spearman(std::vector<double>{1, 2, 2, 3}, std::vector<double>{1, 3, 2, 4}),
              0.9486832980505138, 1e-12);
  EXPECT_EQ(pep::spearman(x, std::vector<double>(5, 1.0)), 0.0);
}

TEST(Probe, MatchesNewtonOracle) {
  std::vector<int> y;
  const Matrix X = blobs(60, 3, 3, y, 2, 1.5);
  pep::ProbeConfig cfg;
  cfg.l2 = 0.05;
  cfg.tolerance = 1e-14;
  cfg.max_iterations = 200000;
  const auto probe = pep::train_probe(X, y, 3, cfg);
  const Matrix Z = probe.transform(X);
  const auto theta = oracle::newton_logistic(Z, y, 3, 0.05, 30);
  for (std::size_t k = 0; k < 3; ++k)
    for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(probe.weights()(k, c), theta[k * 3 + c], 1e-4);
  for (std::size_t c = 0; c < 3; ++c) EXPECT_NEAR(probe.bias()[c], theta[9 + c], 1e-4);
  EXPECT_TRUE(probe.converged);
}

TEST(Probe, ObjectiveGradient) {
  std::vector<int> y;
  const Matrix Z = blobs(20, 4, 2, y, 3);
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Matrix W(4, 2);
  for (double& v : W.flat()) v = g(rng);
  std::vector<double> b = {0.3, -0.2}, db;
  Matrix dW;
  pep::probe_objective(Z, y, W, b, 0.1, &dW, &db);
  for (std::size_t i = 0; i < W.size(); ++i) {
    Matrix a = W, c = W;
    a.data()[i] += 1e-6;
    c.data()[i] -= 1e-6;
    const double fd = (pep::probe_objective(Z, y, a, b, 0.1) - pep::probe_objective(Z, y, c, b, 0.1)) / 2e-6;
    EXPECT_NEAR(dW.data()[i], fd, 1e-8);
  }
}

TEST(Probe, SeparatesBlobsAndNeedsTwoClasses) {
  std::vector<int> y;
  const Matrix X = blobs(200, 4, 4, y, 5, 0.3);
  const auto p = pep::train_probe(X, y, 4);
  const auto m = pep::evaluate(p.predict(X), y, 4);
  EXPECT_GT(m.accuracy, 0.95);
  EXPECT_THROW(pep::train_probe(X, std::vector<int>(200, 1), 4), std::invalid_argument);
}

TEST(Gcn, LearnsDepthParity) {
  const auto train = pep::synth::depth_parity_graphs(200, 4, 1);
  const auto test = pep::synth::depth_parity_graphs(100, 4, 2);
  pep::GcnConfig cfg;
  cfg.seed = 3;
  const auto model = pep::train_gcn(train, 2, cfg);
  std::vector<int> truth;
  for (const auto& g : test) truth.push_back(g.label);
  EXPECT_GT(pep::evaluate(model.predict(test), truth, 2).accuracy, 0.9);
}

TEST(Gcn, PermutationInvariant) {
  const auto graphs = pep::synth::depth_parity_graphs(20, 4, 7);
  pep::GcnConfig cfg;
  cfg.max_iterations = 50;
  const auto model = pep::train_gcn(graphs, 2, cfg);
  std::mt19937_64 rng(8);
  for (const auto& g : graphs) {
    const std::size_t n = g.parent.size();
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<std::size_t> pos(n);
    for (std::size_t i = 0; i < n; ++i) pos[perm[i]] = i;
    pep::GraphExample h;
    h.label = g.label;
    h.features = Matrix(n, g.features.cols());
    h.parent.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < g.features.cols(); ++j) h.features(i, j) = g.features(perm[i], j);
      if (g.parent[perm[i]]) h.parent[i] = pos[*g.parent[perm[i]]];
    }
    EXPECT_EQ(model.logits(g), model.logits(h));
  }
}

TEST(Gcn, ObjectiveGradient) {
  const auto graphs = pep::synth::depth_parity_graphs(6, 3, 9);
  pep::GcnClassifier m(3, 5, 2, 1);
  std::vector<double> grad;
  m.objective(graphs, 0.01, &grad);
  for (std::size_t i = 0; i < m.params().size(); i += 3) {
    auto a = m, b = m;
    a.params()[i] += 1e-6;
    b.params()[i] -= 1e-6;
    const double fd = (a.objective(graphs, 0.01, nullptr) - b.objective(graphs, 0.01, nullptr)) / 2e-6;
    EXPECT_NEAR(grad[i], fd, 1e-7) << i;
  }
}

TEST(Gcn, NormalizedAdjacency) {
  const std::vector<std::optional<std::size_t>> parent = {std::nullopt, 0, 0};
  const auto A = pep::normalized_adjacency(parent);
  // degrees with self loops: 3, 2, 2
  EXPECT_NEAR(A(0, 0), 1.0 / 3.0, 1e-15);
  EXPECT_NEAR(A(0, 1), 1.0 / std::sqrt(6.0), 1e-15);
  EXPECT_NEAR(A(1, 1), 0.5, 1e-15);
  EXPECT_EQ(A(1, 2), 0.0);
}

TEST(FewShot, StratifiedSample) {
  std::vector<int> y;
  for (int i = 0; i < 100; ++i) y.push_back(i < 70 ? 0 : (i < 95 ? 1 : 2));
  const auto s = pep::stratified_sample(y, 3, 10, 4);
  ASSERT_EQ(s.size(), 10u);
  std::vector<int> count(3, 0);
  for (auto i : s) ++count[y[i]];
  EXPECT_EQ(count[2], 1);
  EXPECT_GE(count[1], 2);
  EXPECT_GE(count[0], 6);
  EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
  EXPECT_EQ(pep::stratified_sample(y, 3, 10, 4), s);
  EXPECT_EQ(pep::stratified_sample(y, 3, 100, 1).size(), 100u);
}

TEST(FewShot, CurveAggregation) {
  std::vector<int> train(50), test(20);
  for (std::size_t i = 0; i < train.size(); ++i) train[i] = static_cast<int>(i % 2);
  for (std::size_t i = 0; i < test.size(); ++i) test[i] = static_cast<int>(i % 2);
  pep::FewShotConfig cfg{{4, 10}, 3, 1};
  // Perfect predictions once k >= 10, constant class 0 below.
  const auto r = pep::few_shot_run(train, test, 2, cfg, true, [&](std::span<const std::size_t> sub) {
    return sub.size() >= 10 ? test : std::vector<int>(test.size(), 0);
  });
  ASSERT_EQ(r.curve.size(), 2u);
  EXPECT_EQ(r.runs.size(), 6u);
  EXPECT_DOUBLE_EQ(r.curve[0].mean, 0.5);
  EXPECT_DOUBLE_EQ(r.curve[1].mean, 1.0);
  EXPECT_DOUBLE_EQ(r.curve[1].stddev, 0.0);
  EXPECT_NE(pep::format_curve(r).find("k\tmean\tstddev"), std::string::npos);
}
