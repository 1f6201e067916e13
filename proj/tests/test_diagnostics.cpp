#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "gamlss/diagnostics.hpp"
#include "gamlss/families.hpp"
#include "gamlss/fit.hpp"
#include "test_support.hpp"

using namespace gamlss;

namespace {

std::vector<double> normal_scores(std::size_t n) {
  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = normal_quantile((i + 1 - 0.375) / (n + 0.25));
  return r;
}

}  // namespace

TEST(QuantileResiduals, MedianGivesZero) {
  auto gamma = make_family("gamma");
  const ParamVector t(*gamma, {3.0, 0.5});
  const double med = gamma->quantile(0.5, t);
  RngStream rng(1);
  const std::vector<double> y{med};
  const std::vector<ParamVector> th{t};
  EXPECT_NEAR(quantile_residuals(*gamma, y, th, rng).values[0], 0.0, 1e-9);
}

TEST(QuantileResiduals, StandardNormalUnderTrueModel) {
  auto gamma = make_family("gamma");
  int pass = 0;
  const int reps = 100;
  const std::size_t n = 2000;
  const double crit = 1.358 / std::sqrt(static_cast<double>(n));
  for (int rep = 0; rep < reps; ++rep) {
    RngStream rng(1000 + rep);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = rng.uniform(-1, 1);
      y[i] = gamma->sample(ParamVector(*gamma, {std::exp(1 + 0.5 * x[i]), 0.6}), rng);
    }
    Dataset d;
    d.add_numeric("x", x);
    d.add_numeric("y", y);
    ModelSpec spec;
    spec.family = gamma;
    spec.formulas = make_formulas(*gamma, {{"mu", "x"}});
    spec.response = "y";
    auto m = fit_model(spec, d);
    RngStream r(5);
    pass += oracle::ks_normal(quantile_residuals(m, r).values) < crit;
  }
  EXPECT_GE(pass, 90);
}

TEST(QuantileResiduals, DiscreteIsReproducibleAndRandomized) {
  auto pois = make_family("poisson");
  RngStream gen(3);
  std::vector<double> y(500);
  std::vector<ParamVector> th(500, ParamVector(*pois, {2.5}));
  for (auto& v : y) v = pois->sample(th[0], gen);
  RngStream a(9), b(9), c(10);
  const auto ra = quantile_residuals(*pois, y, th, a);
  const auto rb = quantile_residuals(*pois, y, th, b);
  const auto rc = quantile_residuals(*pois, y, th, c);
  EXPECT_EQ(ra.values, rb.values);
  EXPECT_NE(ra.values, rc.values);
  // Each residual falls in its CDF jump.
  for (std::size_t i = 0; i < y.size(); ++i) {
    const double u = normal_cdf(ra.values[i]);
    EXPECT_GE(u, pois->cdf_left(y[i], th[i]) - 1e-12);
    EXPECT_LE(u, pois->cdf(y[i], th[i]) + 1e-12);
  }
  EXPECT_LT(oracle::ks_normal(ra.values), 1.63 / std::sqrt(500.0));
}

TEST(QuantileResiduals, MixedKeepsContinuousPartAcrossSeeds) {
  auto zaga = make_family("zero-adjusted-gamma");
  const ParamVector t(*zaga, {2.0, 0.5, 0.3});
  RngStream gen(4);
  std::vector<double> y(300);
  for (auto& v : y) v = zaga->sample(t, gen);
  std::vector<ParamVector> th(300, t);
  RngStream a(1), b(2);
  const auto ra = quantile_residuals(*zaga, y, th, a);
  const auto rb = quantile_residuals(*zaga, y, th, b);
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] > 0) {
      EXPECT_EQ(ra.values[i], rb.values[i]);
    }
  }
}

TEST(QuantileResiduals, ClampsDegenerateCdf) {
  auto normal = make_family("normal");
  const std::vector<double> y{100.0, -100.0, 0.0};
  const std::vector<ParamVector> th(3, ParamVector(*normal, {0, 1}));
  RngStream rng(1);
  const auto r = quantile_residuals(*normal, y, th, rng);
  EXPECT_EQ(r.clamped, 2u);
  EXPECT_NEAR(r.values[0], normal_quantile(1 - 1e-12), 1e-9);
  EXPECT_NEAR(r.values[1], normal_quantile(1e-12), 1e-9);
}

TEST(ResidualSummary, PlugInAndSymmetry) {
  const auto r = normal_scores(1000);
  const auto s = residual_summary(r);
  EXPECT_GE(s.filliben, 0.9999);
  EXPECT_LE(s.filliben, 1.0 + 1e-15);
  EXPECT_NEAR(s.mean, 0.0, 1e-12);
  EXPECT_NEAR(s.skewness, 0.0, 1e-12);

  std::vector<double> anti{-3, -1.5, -1, -0.2, 0.2, 1, 1.5, 3};
  EXPECT_NEAR(residual_summary(anti).skewness, 0.0, 1e-15);
  EXPECT_THROW(residual_summary({1, 2, 3}), InvalidInput);
  EXPECT_THROW(residual_summary(std::vector<double>(10, 2.0)), InvalidInput);
}

TEST(ResidualSummary, BiasedMomentsMatchDirectFormula) {
  RngStream rng(6);
  std::vector<double> r(50);
  for (auto& v : r) v = std::exp(rng.normal());
  const auto s = residual_summary(r);
  const double m = oracle::mean(r);
  double m2 = 0, m3 = 0, m4 = 0;
  for (double v : r) {
    m2 += std::pow(v - m, 2) / 50;
    m3 += std::pow(v - m, 3) / 50;
    m4 += std::pow(v - m, 4) / 50;
  }
  EXPECT_NEAR(s.variance, m2, 1e-12);
  EXPECT_NEAR(s.skewness, m3 / std::pow(m2, 1.5), 1e-10);
  EXPECT_NEAR(s.kurtosis, m4 / (m2 * m2), 1e-10);
}

TEST(Filliben, PermutationInvariant) {
  RngStream rng(7);
  std::vector<double> r(200);
  for (auto& v : r) v = rng.normal();
  const double f = filliben(r);
  std::reverse(r.begin(), r.end());
  std::swap(r[3], r[77]);
  EXPECT_EQ(filliben(r), f);
}

TEST(QQ, Layout) {
  const auto r = normal_scores(100);
  for (const auto& p : qq_data(r)) EXPECT_NEAR(p.sample, p.theoretical, 1e-12);
  const auto one = qq_data({1.7});
  ASSERT_EQ(one.size(), 1u);
  EXPECT_NEAR(one[0].theoretical, 0.0, 1e-15);
  EXPECT_EQ(one[0].sample, 1.7);

  // Student t with 3 df has a heavier upper tail than the normal.
  RngStream rng(8);
  std::vector<double> t3(2000);
  for (auto& v : t3) {
    double chi = 0;
    for (int k = 0; k < 3; ++k) chi += std::pow(rng.normal(), 2);
    v = rng.normal() / std::sqrt(chi / 3);
  }
  const auto qq = qq_data(t3);
  for (std::size_t i = qq.size() - 20; i < qq.size(); ++i) EXPECT_GT(qq[i].sample, qq[i].theoretical);
}

TEST(ClusterCheck, AgreesWithDummyRegression) {
  RngStream rng(9);
  const int G = 6;
  std::vector<double> r;
  std::vector<std::string> c;
  for (int i = 0; i < 120; ++i) {
    const int g = i % G;
    r.push_back(0.3 * g + rng.normal());
    c.push_back("c" + std::to_string(g));
  }
  const auto res = cluster_heterogeneity_check(r, c);
  // OLS on intercept + G-1 dummies.
  Eigen::MatrixXd X = Eigen::MatrixXd::Zero(120, G);
  Eigen::VectorXd y(120);
  for (int i = 0; i < 120; ++i) {
    X(i, 0) = 1;
    if (i % G) X(i, i % G) = 1;
    y[i] = r[static_cast<std::size_t>(i)];
  }
  const Eigen::VectorXd e = y - X * oracle::ols(X, y);
  const double sse = e.squaredNorm();
  const double sst = (y.array() - y.mean()).square().sum();
  const double adj = 1 - (sse / (120 - G)) / (sst / 119);
  const double F = ((sst - sse) / (G - 1)) / (sse / (120 - G));
  EXPECT_NEAR(res.adjusted_r2, adj, 1e-10);
  EXPECT_NEAR(res.f_statistic, F, 1e-8);
  EXPECT_GT(res.p_value, 0.0);
  EXPECT_LT(res.p_value, 1.0);
}

TEST(ClusterCheck, EdgeCases) {
  const std::vector<std::string> c{"a", "a", "b", "b"};
  const auto constant = cluster_heterogeneity_check({1, 1, 3, 3}, c);
  EXPECT_EQ(constant.adjusted_r2, 1.0);
  const auto equal = cluster_heterogeneity_check({1, 2, 2, 1}, c);
  EXPECT_NEAR(equal.f_statistic, 0.0, 1e-12);
  EXPECT_NEAR(equal.p_value, 1.0, 1e-12);
  EXPECT_THROW(cluster_heterogeneity_check({1, 2, 3}, {"a", "b", "c"}), InvalidInput);
  EXPECT_THROW(cluster_heterogeneity_check({1, 2, 3}, {"a", "a", "a"}), InvalidInput);
}

TEST(ClusterCheck, NullPValuesAreUniform) {
  std::vector<double> pvals;
  for (int rep = 0; rep < 400; ++rep) {
    RngStream rng(5000 + rep);
    std::vector<double> r(200);
    std::vector<std::string> c(200);
    for (std::size_t i = 0; i < 200; ++i) {
      r[i] = rng.normal();
      c[i] = std::to_string(i % 10);
    }
    pvals.push_back(cluster_heterogeneity_check(r, c).p_value);
  }
  // KS distance to U(0,1), 1% critical value.
  std::sort(pvals.begin(), pvals.end());
  double d = 0;
  for (std::size_t i = 0; i < pvals.size(); ++i)
    d = std::max({d, std::abs(pvals[i] - i / 400.0), std::abs((i + 1) / 400.0 - pvals[i])});
  EXPECT_LT(d, 1.63 / std::sqrt(400.0));
}
