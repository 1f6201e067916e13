// Acceptance harness: one PASS/FAIL line per criterion. Data-generating
// processes here use their own std::mt19937_64 samplers and closed-form
// inverse CDFs, independent of the library's RNG and quantile code.
//
//   acceptance            run every criterion
//   acceptance 3 4 11     run a subset

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numbers>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include "gamlss/gamlss.hpp"
#include "test_support.hpp"

using namespace gamlss;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
  bool skipped = false;
};

double phi(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

struct Sampler {
  std::mt19937_64 eng;
  explicit Sampler(std::uint64_t seed) : eng(seed) {}
  double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(eng); }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(eng); }
  double bernoulli(double p) { return uniform() < p ? 1.0 : 0.0; }
};

// F(y) = 1 - (1 + (y/mu)^a)^(-q), inverted in closed form.
double sm_draw(Sampler& s, double mu, double a, double q) {
  const double u = s.uniform();
  return mu * std::pow(std::pow(1.0 - u, -1.0 / q) - 1.0, 1.0 / a);
}

std::string fmt(const char* f, auto... v) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, v...);
  return buf;
}

ModelSpec spec_of(const std::string& family, const std::map<std::string, std::string>& f,
                  const std::string& response = "y") {
  ModelSpec s;
  s.family = make_family(family);
  s.formulas = make_formulas(*s.family, f);
  s.response = response;
  return s;
}

// ---------------------------------------------------------------------------
// 1. Derivative oracle

ParamVector random_params(const Family& fam, Sampler& s) {
  auto U = [&](double a, double b) { return a + (b - a) * s.uniform(); };
  const std::string name(fam.name());
  if (name == "normal") return ParamVector(fam, {U(-3, 3), U(0.3, 3)});
  if (name == "lognormal") return ParamVector(fam, {U(-1, 2), U(0.2, 1.2)});
  if (name == "gamma") return ParamVector(fam, {U(0.5, 5), U(0.3, 1.2)});
  if (name == "singh-maddala") return ParamVector(fam, {U(0.5, 5), U(1.5, 5), U(0.5, 3)});
  if (name == "zero-adjusted-gamma") return ParamVector(fam, {U(0.5, 5), U(0.3, 1.2), U(0.05, 0.6)});
  if (name == "poisson") return ParamVector(fam, {U(0.3, 15)});
  return ParamVector(fam, {U(0.3, 15), U(0.05, 0.6)});
}

Outcome derivative_oracle() {
  Sampler s(101);
  double worst = 0;
  std::string where;
  std::size_t checks = 0;
  for (const auto& name : family_names()) {
    const auto fam = make_family(name);
    const auto links = fam->default_links();
    for (int rep = 0; rep < 100; ++rep) {
      const ParamVector t = random_params(*fam, s);
      // y from the family's quantile at an independent uniform.
      const double y = fam->quantile(0.02 + 0.96 * s.uniform(), t);
      const auto d = loglik_derivs(*fam, y, t, links);
      for (std::size_t k = 0; k < fam->size(); ++k) {
        auto lp = [&](double eta) {
          ParamVector tt = t;
          tt[k] = links[k].invert(eta);
          return fam->log_pdf(y, tt);
        };
        const double eta0 = links[k].apply(t[k]);
        const double fd1 = oracle::d1(lp, eta0), fd2 = oracle::d2(lp, eta0);
        const double e1 = std::abs(d.u[k] - fd1) / std::max(1.0, std::abs(fd1));
        const double e2 = std::abs(d.hessian[k] - fd2) / std::max(1.0, std::abs(fd2));
        checks += 2;
        if (std::max(e1, e2) > worst) {
          worst = std::max(e1, e2);
          where = name + " parameter " + std::to_string(k);
        }
      }
    }
  }
  return {worst <= 1e-5, fmt("%zu derivative checks over 7 families x 100 points, worst relative error %.2e (%s)",
                              checks, worst, where.c_str())};
}

// ---------------------------------------------------------------------------
// 2. Closed-form functional oracles

DistSpec dist(const std::string& name, std::initializer_list<double> v) {
  auto f = make_family(name);
  return {f, ParamVector(*f, v)};
}

Outcome functional_oracles() {
  double g_ln = 0, g_exp = 0, g_sm = 0, atk = 0, th = 0;
  for (double s : {0.25, 0.5, 1.0, 2.0})
    g_ln = std::max(g_ln, std::abs(gini(dist("lognormal", {0.0, s})) - (2 * phi(s / std::numbers::sqrt2) - 1)));
  for (double mu : {0.5, 1.0, 7.0}) g_exp = std::max(g_exp, std::abs(gini(dist("gamma", {mu, 1.0})) - 0.5));
  int grid = 0;
  for (double a : {1.5, 2.5, 4.0, 6.0})
    for (double q : {0.8, 1.2, 2.0, 3.5, 6.0}) {
      const double closed =
          1.0 - std::exp(std::lgamma(q) + std::lgamma(2 * q - 1 / a) - std::lgamma(q - 1 / a) - std::lgamma(2 * q));
      g_sm = std::max(g_sm, std::abs(gini(dist("singh-maddala", {3.0, a, q})) - closed));
      ++grid;
    }
  for (double s : {0.25, 0.5, 1.0, 2.0}) {
    const auto d = dist("lognormal", {0.3, s});
    atk = std::max(atk, std::abs(atkinson(d, 1.0) - (1 - std::exp(-s * s / 2))));
    th = std::max(th, std::abs(theil(d) - s * s / 2));
  }
  const bool ok = g_ln <= 1e-4 && g_exp <= 1e-4 && g_sm <= 1e-3 && grid == 20 && atk <= 1e-6 && th <= 1e-6;
  return {ok, fmt("max errors: Gini LogNormal %.1e, Exponential %.1e, Singh-Maddala (%d points) %.1e, "
                  "Atkinson(1) %.1e, Theil %.1e",
                  g_ln, g_exp, grid, g_sm, atk, th)};
}

// ---------------------------------------------------------------------------
// 3-5. Singh-Maddala regression

struct SmTruth {
  // Intercept, T, x1, x2 on the log scale for mu, sigma, tau.
  std::array<std::array<double, 4>, 3> beta;
};

constexpr SmTruth kRecovery{{{{1.0, 0.3, 0.2, -0.1}, {1.1, 0.1, 0.1, 0.05}, {0.3, -0.2, 0.1, 0.1}}}};
constexpr SmTruth kHeavy{{{{1.0, 0.3, 0.2, -0.1}, {1.4, 0.1, 0.0, 0.0}, {-1.0, 0.0, 0.0, 0.0}}}};

Dataset sm_data(const SmTruth& truth, std::size_t n, std::uint64_t seed) {
  Sampler s(seed);
  std::vector<double> t(n), x1(n), x2(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    t[i] = s.bernoulli(0.5);
    x1[i] = s.normal();
    x2[i] = 2 * s.uniform() - 1;
    double p[3];
    for (int k = 0; k < 3; ++k) {
      const auto& b = truth.beta[static_cast<std::size_t>(k)];
      p[k] = std::exp(b[0] + b[1] * t[i] + b[2] * x1[i] + b[3] * x2[i]);
    }
    y[i] = sm_draw(s, p[0], p[1], p[2]);
  }
  Dataset d;
  d.add_numeric("T", t);
  d.add_numeric("x1", x1);
  d.add_numeric("x2", x2);
  d.add_numeric("y", y);
  return d;
}

const std::map<std::string, std::string> kSmFormulas{
    {"mu", "T + x1 + x2"}, {"sigma", "T + x1 + x2"}, {"tau", "T + x1 + x2"}};

struct SmRuns {
  std::vector<std::array<double, 12>> coef;
  std::vector<ResidualSummary> residuals;
  std::size_t failed = 0;
  double seconds = 0;
};

const SmRuns& sm_runs() {
  static const SmRuns runs = [] {
    SmRuns r;
    const auto t0 = std::chrono::steady_clock::now();
    const auto spec = spec_of("singh-maddala", kSmFormulas);
    const char* cols[] = {"(Intercept)", "T", "x1", "x2"};
    for (int seed = 0; seed < 20; ++seed) {
      const auto d = sm_data(kRecovery, 5000, 3000 + static_cast<std::uint64_t>(seed));
      try {
        const auto m = fit_model(spec, d);
        if (!m.converged) throw EstimationError("no convergence");
        std::array<double, 12> c{};
        for (std::size_t k = 0; k < 3; ++k)
          for (std::size_t j = 0; j < 4; ++j) c[k * 4 + j] = m.coefficient(k, cols[j]);
        r.coef.push_back(c);
        RngStream rng(static_cast<std::uint64_t>(seed));
        r.residuals.push_back(residual_summary(quantile_residuals(m, rng).values));
      } catch (const Error&) {
        ++r.failed;
      }
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
  }();
  return runs;
}

Outcome parameter_recovery() {
  const auto& r = sm_runs();
  if (r.coef.size() < 2) return {false, fmt("%zu of 20 fits failed", r.failed)};
  std::array<double, 12> sd{};
  for (std::size_t j = 0; j < 12; ++j) {
    std::vector<double> v;
    for (const auto& c : r.coef) v.push_back(c[j]);
    sd[j] = oracle::sd(v);
  }
  int good = 0;
  double worst = 0;
  for (const auto& c : r.coef) {
    bool all = true;
    for (std::size_t j = 0; j < 12; ++j) {
      const double z = std::abs(c[j] - kRecovery.beta[j / 4][j % 4]) / sd[j];
      worst = std::max(worst, z);
      all = all && z <= 3.0;
    }
    good += all;
  }
  const bool ok = good >= 18 && r.seconds < 300;
  return {ok, fmt("%d/20 seeds with all 12 coefficients within 3 Monte-Carlo SDs (largest |z| %.2f, %zu failed fits), "
                  "%.1f s",
                  good, worst, r.failed, r.seconds)};
}

Outcome diagnostic_calibration() {
  const auto& r = sm_runs();
  int good = 0;
  double wm = 0, wv = 0, ws = 0, wk = 0, wf = 1;
  for (const auto& s : r.residuals) {
    wm = std::max(wm, std::abs(s.mean));
    wv = std::max(wv, std::abs(s.variance - 1));
    ws = std::max(ws, std::abs(s.skewness));
    wk = std::max(wk, std::abs(s.kurtosis - 3));
    wf = std::min(wf, s.filliben);
    good += std::abs(s.mean) <= 0.05 && std::abs(s.variance - 1) <= 0.1 && std::abs(s.skewness) <= 0.15 &&
            std::abs(s.kurtosis - 3) <= 0.4 && s.filliben >= 0.995;
  }
  return {good >= 18, fmt("%d/20 seeds within all bounds (worst |mean| %.3f, |var-1| %.3f, |skew| %.3f, "
                          "|kurt-3| %.3f, min Filliben %.4f)",
                          good, wm, wv, ws, wk, wf)};
}

Outcome misspecification() {
  const auto spec = spec_of("lognormal", {{"mu", "T + x1 + x2"}, {"sigma", "T + x1 + x2"}});
  int good = 0;
  std::vector<double> kurt;
  for (int seed = 0; seed < 20; ++seed) {
    const auto d = sm_data(kHeavy, 5000, 4000 + static_cast<std::uint64_t>(seed));
    try {
      const auto m = fit_model(spec, d);
      RngStream rng(static_cast<std::uint64_t>(seed));
      const double k = residual_summary(quantile_residuals(m, rng).values).kurtosis;
      kurt.push_back(k);
      good += k > 3.5;
    } catch (const Error&) {
    }
  }
  std::sort(kurt.begin(), kurt.end());
  return {good >= 16, fmt("%d/20 seeds with residual kurtosis > 3.5 (median %.2f, min %.2f)", good,
                          kurt.empty() ? NAN : kurt[kurt.size() / 2], kurt.empty() ? NAN : kurt.front())};
}

// ---------------------------------------------------------------------------
// 6. Bootstrap coverage

Outcome bootstrap_coverage() {
  const auto t0 = std::chrono::steady_clock::now();
  const double effect = 0.5;
  const auto spec = spec_of("normal", {{"mu", "T"}, {"sigma", "T"}});
  int covered = 0, blocked = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Sampler s(5000 + static_cast<std::uint64_t>(trial));
    const std::size_t n = 500;
    std::vector<double> t(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      t[i] = i % 2 ? 1.0 : 0.0;
      y[i] = 2.0 + effect * t[i] + (t[i] ? 1.5 : 1.0) * s.normal();
    }
    Dataset d;
    d.add_numeric("T", t);
    d.add_numeric("y", y);
    const auto m = fit_model(spec, d);
    const auto profile = covariate_profile(d, {"T"});
    BootstrapOptions o;
    o.replicates = 199;
    o.seed = 70 + static_cast<std::uint64_t>(trial);
    const auto r = parametric_bootstrap(m, d, mte_statistic(profile, parse_functional("mean"), "T"), o);
    try {
      const auto ci = summarize(r).ci;
      covered += ci.lower <= effect && effect <= ci.upper;
    } catch (const InferenceBlocked&) {
      ++blocked;
    }
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return {covered >= 90 && covered <= 99 && secs < 900,
          fmt("%d/100 percentile intervals cover the true MTE (%d blocked), %.1f s", covered, blocked, secs)};
}

// ---------------------------------------------------------------------------
// 7. Pairs-cluster bootstrap

Outcome pairs_cluster() {
  const double c = cluster_correction(10, 100, 5);
  const double expected = (10.0 / 9.0) * (99.0 / 95.0);
  const auto spec = spec_of("normal", {});
  const Statistic intercept = coefficient_statistic(0, "(Intercept)");
  int wider = 0;
  for (int trial = 0; trial < 50; ++trial) {
    Sampler s(6000 + static_cast<std::uint64_t>(trial));
    std::vector<double> y;
    std::vector<std::string> g;
    for (int k = 0; k < 30; ++k) {
      const double u = s.normal();  // between-cluster variance 1, within 1: ICC 0.5
      for (int j = 0; j < 10; ++j) {
        y.push_back(u + s.normal());
        g.push_back(fmt("c%02d", k));
      }
    }
    Dataset d;
    d.add_numeric("y", y);
    d.add_categorical("g", g);
    BootstrapOptions o;
    o.replicates = 199;
    o.seed = 90 + static_cast<std::uint64_t>(trial);
    const auto cl = percentile_ci(pairs_cluster_bootstrap(d, "g", spec, intercept, o));
    const auto pa = percentile_ci(parametric_bootstrap(fit_model(spec, d), d, intercept, o));
    wider += (cl.upper - cl.lower) > (pa.upper - pa.lower);
  }
  const bool exact = std::abs(c - expected) <= 1e-15 * expected && std::abs(c - 1.15789) < 5e-6;
  return {wider >= 45 && exact, fmt("cluster interval wider in %d/50 trials; c(10,100,5) = %.10f vs %.10f", wider, c,
                                    expected)};
}

// ---------------------------------------------------------------------------
// 8. Two-stage residual inclusion

Outcome tsri_bias() {
  const std::vector<EndogenousSpec> endo{{"x", {"z"}, "z + w", "identity"}};
  const auto spec = spec_of("normal", {{"mu", "x + w"}});
  std::vector<double> naive, iv;
  for (int seed = 0; seed < 20; ++seed) {
    Sampler s(7000 + static_cast<std::uint64_t>(seed));
    const std::size_t n = 5000;
    std::vector<double> z(n), w(n), x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      const double u = s.normal();
      z[i] = s.normal();
      w[i] = s.normal();
      x[i] = 0.8 * z[i] + u + s.normal();
      y[i] = 1.0 + 1.0 * x[i] + 0.5 * w[i] + u + 0.5 * s.normal();
    }
    Dataset d;
    d.add_numeric("z", z);
    d.add_numeric("w", w);
    d.add_numeric("x", x);
    d.add_numeric("y", y);
    naive.push_back(fit_model(spec, d).coefficient(0, "x"));
    iv.push_back(tsri_fit(d, endo, spec).model.coefficient(0, "x"));
  }
  const double se_naive = oracle::sd(naive), se_iv = oracle::sd(iv);
  int good = 0;
  for (std::size_t i = 0; i < 20; ++i) good += (naive[i] - 1.0) > 5 * se_naive && std::abs(iv[i] - 1.0) <= 3 * se_iv;
  return {good >= 16, fmt("%d/20 seeds: naive bias %.3f (MC SD %.4f), 2SRI mean %.4f (MC SD %.4f)", good,
                          oracle::mean(naive) - 1.0, se_naive, oracle::mean(iv), se_iv)};
}

// ---------------------------------------------------------------------------
// 9. Regression discontinuity

Dataset rdd_data(std::size_t n, std::uint64_t seed, double mu_jump, double sigma_right, double p_left, double p_right,
                 double effect) {
  Sampler s(seed);
  std::vector<double> x(n), t(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = 2 * s.uniform() - 1;
    const bool right = x[i] >= 0;
    t[i] = s.bernoulli(right ? p_right : p_left);
    y[i] = 1 + 0.5 * x[i] + (right ? mu_jump : 0.0) + effect * t[i] + (right ? sigma_right : 1.0) * s.normal();
  }
  Dataset d;
  d.add_numeric("x", x);
  d.add_numeric("T", t);
  d.add_numeric("y", y);
  return d;
}

RddSpec rdd_spec(const std::map<std::string, std::string>& f) {
  RddSpec s;
  s.forcing = "x";
  s.cutoff = 0;
  s.model = spec_of("normal", f);
  s.treatment = "T";
  return s;
}

Outcome rdd() {
  const auto mean = parse_functional("mean"), variance = parse_functional("variance");
  std::vector<double> sharp;
  for (int rep = 0; rep < 20; ++rep)
    sharp.push_back(srd_fit(rdd_data(1000, 8000 + rep, 2.0, 1.0, 0, 1, 0), rdd_spec({{"mu", "x"}}), mean).effect.difference);
  const double sharp_z = std::abs(oracle::mean(sharp) - 2.0) / (oracle::sd(sharp) / std::sqrt(20.0));

  auto sigma_spec = rdd_spec({{"mu", "x"}, {"sigma", "x"}});
  BootstrapOptions o;
  o.replicates = 199;
  o.seed = 17;
  const auto boot = rdd_bootstrap_multi(rdd_data(4000, 8100, 0.0, 2.0, 0, 1, 0), sigma_spec, {mean, variance}, o);
  const auto mci = percentile_ci(boot[0]), vci = percentile_ci(boot[1]);
  const bool sigma_ok = vci.lower > 0 && mci.lower <= 0 && 0 <= mci.upper;

  std::vector<double> fuzzy;
  for (int rep = 0; rep < 20; ++rep) {
    // Compliance 0.2 -> 0.8 (jump 0.6) and effect 2: reduced-form jump 1.2.
    fuzzy.push_back(
        frd_fit(rdd_data(4000, 8200 + rep, 0.0, 1.0, 0.2, 0.8, 2.0), rdd_spec({{"mu", "x"}}), mean).effect.difference);
  }
  const double fuzzy_z = std::abs(oracle::mean(fuzzy) - 2.0) / (oracle::sd(fuzzy) / std::sqrt(20.0));
  return {sharp_z <= 3 && sigma_ok && fuzzy_z <= 3,
          fmt("sharp mean %.3f (|z| %.2f); sigma-only: variance CI [%.2f, %.2f], mean CI [%.3f, %.3f]; "
              "fuzzy mean %.3f (|z| %.2f)",
              oracle::mean(sharp), sharp_z, vci.lower, vci.upper, mci.lower, mci.upper, oracle::mean(fuzzy), fuzzy_z)};
}

// ---------------------------------------------------------------------------
// 10. FGLS cross-check

Outcome fgls_crosscheck() {
  Sampler s(9000);
  const std::size_t n = 5000;
  std::vector<double> x(n), y(n), ly(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = s.uniform();
    ly[i] = 1 + 0.5 * x[i] + std::exp(-0.5 + 0.6 * x[i]) * s.normal();
    y[i] = std::exp(ly[i]);
  }
  Dataset d;
  d.add_numeric("x", x);
  d.add_numeric("y", y);
  d.add_numeric("ly", ly);
  const double z = poverty_line_auto60(y);
  const auto f = fgls_vulnerability(d, "y", "x", z);
  // Gaussian location-scale model of the log outcome; vulnerability is P(ln y < ln z).
  const auto m = fit_model(spec_of("normal", {{"mu", "x"}, {"sigma", "x"}}, "ly"), d);
  const Functional v{FunctionalKind::vulnerability, std::log(z), false};
  double diff = 0;
  for (std::size_t i = 0; i < n; ++i) diff += std::abs(evaluate(v, {m.spec.family, m.fitted_params(i)}) - f.probability[i]);
  diff /= static_cast<double>(n);
  return {diff <= 0.02, fmt("mean |P_gamlss - P_fgls| = %.4f at n=%zu", diff, n)};
}

// ---------------------------------------------------------------------------
// 11. Determinism of reports

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

AnalysisConfig config_text(const std::string& text, const fs::path& base) {
  std::istringstream in(text);
  return load_config(parse_ini(in), base);
}

Outcome determinism() {
  const auto dir = fs::temp_directory_path() / ("gamlss_acceptance_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  const std::string base =
      "[simulate]\nn = 600\nseed = 3\nfamily = lognormal\noutput = sim.csv\nx.T = bernoulli(0.5)\n"
      "x.x = normal(0, 1)\nx.z = normal(0, 1)\nx.r = uniform(-1, 1)\nclusters = 20\ncluster_column = g\n"
      "cluster_sd.mu = 0.3\nendogenous = e\nendogenous.beta = 0.7*z\nendogenous.rho = 0.5\n"
      "beta.mu = 1 + 0.3*T + 0.2*x + 0.2*e\nbeta.sigma = -0.5 + 0.1*T\n"
      "[data]\npath = sim.csv\n[schema]\ny = numeric\nT = numeric\nx = numeric\nz = numeric\nr = numeric\n"
      "e = numeric\ng = categorical\n"
      "[model]\nfamily = lognormal\nresponse = y\nparam.mu = 1 + T + x + e\nparam.sigma = 1 + T\n"
      "[effects]\ntreatment = T\nfunctionals = mean, gini, atkinson:1, theil, vulnerability:auto60\n"
      "[diagnose]\nfamilies = lognormal, gamma\ncluster = g\n"
      "[iv]\nendogenous = e\ninstruments.e = z\nformula.e = z + x\nouter = 3\ninner = 5\n"
      "[rdd]\nforcing = r\ncutoff = 0\nbandwidths = 0.6\n"
      "[panel]\nunit = g\nmundlak = x\n";
  auto with_boot = [&](const std::string& b) { return config_text(base + "[bootstrap]\n" + b + "\n", dir); };
  const auto parametric = with_boot("method = parametric\nreplicates = 30\nseed = 5\nthreads = 4");
  const auto serial = with_boot("method = parametric\nreplicates = 30\nseed = 5\nthreads = 1");
  const auto cluster = with_boot("method = pairs-cluster\ncluster = g\nreplicates = 30\nseed = 5\nthreads = 4");
  std::vector<std::pair<std::string, const AnalysisConfig*>> runs{
      {"simulate", &parametric}, {"fit", &parametric},   {"diagnose", &parametric}, {"effects", &parametric},
      {"bootstrap", &parametric}, {"bootstrap", &cluster}, {"iv", &parametric},       {"rdd", &parametric},
      {"panel", &parametric}};
  std::vector<std::string> mismatched;
  std::size_t files = 0;
  cli::run("simulate", parametric);
  for (std::size_t i = 0; i < runs.size(); ++i) {
    const auto& [sub, cfg] = runs[i];
    const auto a = cli::write_outputs(cli::run(sub, *cfg), dir / ("a" + std::to_string(i)));
    const auto b = cli::write_outputs(cli::run(sub, *cfg), dir / ("b" + std::to_string(i)));
    for (const auto& e : fs::directory_iterator(a)) {
      ++files;
      if (slurp(e.path()) != slurp(b / e.path().filename())) mismatched.push_back(sub + "/" + e.path().filename().string());
    }
  }
  const auto par = cli::run("bootstrap", parametric), ser = cli::run("bootstrap", serial);
  const bool threads_agree = par.report.at("effects").dump() == ser.report.at("effects").dump() &&
                             par.report.at("bootstrap").at("diagnostics").dump() ==
                                 ser.report.at("bootstrap").at("diagnostics").dump();
  fs::remove_all(dir);
  std::string detail = fmt("%zu files from %zu subcommand runs compared byte for byte, %zu differ; "
                           "4-thread and serial bootstrap tables %s",
                           files, runs.size(), mismatched.size(), threads_agree ? "identical" : "DIFFER");
  for (const auto& m : mismatched) detail += " " + m;
  return {mismatched.empty() && threads_agree && files > 0, detail};
}

// ---------------------------------------------------------------------------
// 12. Progresa replication (external data)

Outcome progresa() {
  const char* csv = std::getenv("PROGRESA_CSV");
  if (!csv || !*csv) return {false, "PROGRESA_CSV not set", true};
  const fs::path cfg_path = fs::path(GAMLSS_SOURCE_DIR) / "configs" / "progresa.ini";
  auto doc = read_ini_file(cfg_path.string());
  doc.set("data", "path", fs::absolute(csv).string());
  const auto cfg = load_config(doc, cfg_path.parent_path());
  const auto r = cli::run("bootstrap", cfg);
  const auto& rows = r.report.at("effects").at("rows");
  auto find = [&](const std::string& f) -> const report::Json* {
    for (const auto& row : rows)
      if (row.at("functional") == f) return &row;
    return nullptr;
  };
  auto bounds = [](const report::Json* row, double& lo, double& hi) {
    if (!row || !row->at("Lower Bound").is_number()) return false;
    lo = row->at("Lower Bound").get<double>();
    hi = row->at("Upper Bound").get<double>();
    return true;
  };
  double lo = 0, hi = 0;
  const auto* mean = find("mean");
  const bool mean_ok = bounds(mean, lo, hi) && mean->at("Estimate").get<double>() > 0 && lo > 0;
  std::string detail = fmt("MTE on mean %.3f [%.3f, %.3f]", mean ? mean->at("Estimate").get<double>() : NAN, lo, hi);
  bool cross_ok = true;
  for (const std::string f : {"gini", "atkinson:1", "atkinson:2", "theil", "vulnerability:auto60"}) {
    double l = 0, h = 0;
    const bool has = bounds(find(f), l, h);
    const bool crosses = has && l <= 0 && 0 <= h;
    cross_ok = cross_ok && crosses;
    detail += fmt("; %s [%.4f, %.4f]%s", f.c_str(), l, h, crosses ? "" : " (no zero crossing)");
  }
  return {mean_ok && cross_ok && r.status == cli::kExitOk, detail};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<const char*, Outcome (*)()>> criteria{
      {"derivative oracle", derivative_oracle},
      {"closed-form functional oracles", functional_oracles},
      {"parameter recovery", parameter_recovery},
      {"diagnostic calibration", diagnostic_calibration},
      {"misspecification detection", misspecification},
      {"bootstrap coverage", bootstrap_coverage},
      {"pairs-cluster correctness", pairs_cluster},
      {"2SRI bias removal", tsri_bias},
      {"regression discontinuity", rdd},
      {"FGLS cross-check", fgls_crosscheck},
      {"determinism", determinism},
      {"Progresa sign pattern", progresa},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    const int id = static_cast<int>(i) + 1;
    if (!only.empty() && !only.contains(id)) continue;
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const char* tag = o.skipped ? "SKIP" : o.pass ? "PASS" : "FAIL";
    std::printf("criterion %2d %s  %s: %s (%.1f s)\n", id, tag, criteria[i].first, o.detail.c_str(), secs);
    std::fflush(stdout);
    failed += !o.pass && !o.skipped;
  }
  return failed ? 1 : 0;
}
