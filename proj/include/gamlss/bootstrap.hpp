#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "gamlss/data.hpp"
#include "gamlss/effects.hpp"
#include "gamlss/error.hpp"
#include "gamlss/fit.hpp"
#include "gamlss/rng.hpp"

namespace gamlss {

/// A scalar computed from a (re)fitted model and the data it was fitted on.
using Statistic = std::function<double(const FittedModel&, const Dataset&)>;

/// Several statistics from one refit. Components that do not exist for a
/// replicate (e.g. a moment) are returned as NaN.
using MultiStatistic = std::function<std::vector<double>(const FittedModel&, const Dataset&)>;

struct ReplicateFailure {
  std::size_t index = 0;
  std::string reason;
};

struct BootstrapResult {
  std::string method;
  std::string statistic;
  std::uint64_t seed = 0;
  std::size_t requested = 0;
  std::vector<std::size_t> index;  // replicate index of each successful value, ascending
  std::vector<double> values;
  std::vector<ReplicateFailure> failures;
  double scale = 1.0;  // variance multiplier (finite-cluster correction)
  double point = std::numeric_limits<double>::quiet_NaN();  // original-sample estimate

  [[nodiscard]] std::size_t successes() const { return values.size(); }
  [[nodiscard]] double failure_rate() const {
    return requested ? static_cast<double>(failures.size()) / static_cast<double>(requested) : 0.0;
  }
};

struct BootstrapOptions {
  std::size_t replicates = 499;
  std::uint64_t seed = 1;
  unsigned threads = 0;  // 0 = hardware concurrency
  bool warm_start = true;
};

inline constexpr double kMaxFailureRate = 0.05;

namespace detail {

struct Slot {
  bool ok = false;
  std::vector<double> values;
  std::string reason;
};

/// Runs fn(0..count-1) on a small thread pool. Results are keyed by index,
/// so the outcome does not depend on scheduling. Library errors become
/// failed slots; anything else is rethrown.
template <class Fn>
std::vector<Slot> run_indexed(std::size_t count, unsigned threads, Fn&& fn) {
  std::vector<Slot> slots(count);
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(count, 1)));
  std::atomic<std::size_t> next{0};
  std::exception_ptr fatal;
  std::mutex fatal_mutex;
  auto worker = [&] {
    for (;;) {
      const std::size_t i = next.fetch_add(1);
      if (i >= count) return;
      try {
        slots[i].values = fn(i);
        slots[i].ok = true;
      } catch (const Error& e) {
        slots[i].reason = e.what();
      } catch (...) {
        std::lock_guard<std::mutex> lock(fatal_mutex);
        if (!fatal) fatal = std::current_exception();
        next = count;
      }
    }
  };
  if (threads <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (fatal) std::rethrow_exception(fatal);
  return slots;
}

/// One result per statistic component. A failed replicate fails every
/// component; a non-finite component fails only that component.
inline std::vector<BootstrapResult> collect(const std::vector<Slot>& slots, const std::vector<std::string>& labels,
                                            const std::string& method, std::uint64_t seed,
                                            const std::vector<double>& point, double scale = 1.0) {
  std::vector<BootstrapResult> out(labels.size());
  for (std::size_t k = 0; k < labels.size(); ++k) {
    auto& r = out[k];
    r.method = method;
    r.statistic = labels[k];
    r.seed = seed;
    r.scale = scale;
    r.point = k < point.size() ? point[k] : std::numeric_limits<double>::quiet_NaN();
    r.requested = slots.size();
    for (std::size_t i = 0; i < slots.size(); ++i) {
      if (!slots[i].ok) {
        r.failures.push_back({i, slots[i].reason});
      } else if (k >= slots[i].values.size() || !std::isfinite(slots[i].values[k])) {
        r.failures.push_back({i, "statistic '" + labels[k] + "' is undefined for this replicate"});
      } else {
        r.index.push_back(i);
        r.values.push_back(slots[i].values[k]);
      }
    }
  }
  return out;
}

inline FittedModel refit(const ModelSpec& spec, const Dataset& data, const FittedModel* warm) {
  ModelSpec s = spec;
  if (warm) s.control.start = warm->coefficients;
  FittedModel m = fit_spec(s, data);
  if (!m.converged) throw EstimationError("replicate fit did not converge");
  return m;
}

/// Response drawn row by row from a model's fitted distributions.
inline std::vector<double> draw_response(const FittedModel& model, RngStream& rng) {
  std::vector<double> y(model.rows());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = model.family().sample(model.fitted_params(i), rng);
  return y;
}

// Tags separating the independent stream families used by one master seed.
inline constexpr std::uint64_t kOuterStreams = 0x4f55544552ULL;
inline constexpr std::uint64_t kPairsStreams = 0x5041495253ULL;

}  // namespace detail

/// Finite-sample factor G/(G-1) * (N-1)/(N-K) for cluster-robust variances.
inline double cluster_correction(std::size_t G, std::size_t N, std::size_t K) {
  if (G < 2 || N <= K) throw InvalidInput("cluster correction needs G >= 2 and N > K");
  return (static_cast<double>(G) / static_cast<double>(G - 1)) *
         (static_cast<double>(N - 1) / static_cast<double>(N - K));
}

/// Replicate b draws y* from the fitted model with stream (seed, b), refits
/// the same specification and evaluates every component of `stat`.
inline std::vector<BootstrapResult> parametric_bootstrap_multi(const FittedModel& model, const Dataset& data,
                                                               const MultiStatistic& stat,
                                                               const std::vector<std::string>& labels,
                                                               const BootstrapOptions& opts) {
  if (data.rows() != model.rows()) throw InvalidInput("parametric bootstrap: data rows differ from the fitted model");
  if (opts.replicates == 0) throw InvalidInput("bootstrap: at least one replicate required");
  const std::vector<double> point = stat(model, data);
  const RngStream master(opts.seed);
  const auto slots = detail::run_indexed(opts.replicates, opts.threads, [&](std::size_t b) {
    RngStream rng = master.substream(b);
    Dataset star = data;
    star.set_numeric(model.spec.response, detail::draw_response(model, rng));
    const FittedModel m = detail::refit(model.spec, star, opts.warm_start ? &model : nullptr);
    return stat(m, star);
  });
  return detail::collect(slots, labels, "parametric", opts.seed, point);
}

namespace detail {
inline MultiStatistic lift(const Statistic& stat) {
  return [stat](const FittedModel& m, const Dataset& d) { return std::vector<double>{stat(m, d)}; };
}
}  // namespace detail

inline BootstrapResult parametric_bootstrap(const FittedModel& model, const Dataset& data, const Statistic& stat,
                                            const BootstrapOptions& opts, const std::string& label = "statistic") {
  return parametric_bootstrap_multi(model, data, detail::lift(stat), {label}, opts).front();
}

/// Resamples whole clusters with replacement, refits and evaluates `stat`.
/// The results carry the finite-cluster variance factor.
inline std::vector<BootstrapResult> pairs_cluster_bootstrap_multi(const Dataset& data, const std::string& cluster,
                                                                  const ModelSpec& spec, const MultiStatistic& stat,
                                                                  const std::vector<std::string>& labels,
                                                                  const BootstrapOptions& opts) {
  if (opts.replicates == 0) throw InvalidInput("bootstrap: at least one replicate required");
  const Column& c = data.column(cluster);
  std::map<std::string, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < data.rows(); ++i) {
    if (c.missing(i)) throw InvalidInput("cluster column '" + cluster + "' has a missing value at row " + std::to_string(i + 1));
    groups[c.is_categorical() ? c.levels[i] : std::to_string(c.numbers[i])].push_back(i);
  }
  const std::size_t G = groups.size();
  if (G < 2) throw InvalidInput("pairs cluster bootstrap needs at least two clusters");
  std::vector<const std::vector<std::size_t>*> members;
  for (const auto& [_, rows] : groups) members.push_back(&rows);

  const FittedModel original = fit_spec(spec, data);
  const std::vector<double> point = stat(original, data);
  const double scale = cluster_correction(G, data.rows(), static_cast<std::size_t>(original.total_coefficients()));
  const RngStream master(opts.seed);
  const auto slots = detail::run_indexed(opts.replicates, opts.threads, [&](std::size_t b) {
    RngStream rng = master.substream(b);
    std::vector<std::size_t> rows;
    std::set<std::size_t> drawn;
    for (std::size_t g = 0; g < G; ++g) {
      const auto pick = static_cast<std::size_t>(rng.below(G));
      drawn.insert(pick);
      rows.insert(rows.end(), members[pick]->begin(), members[pick]->end());
    }
    if (drawn.size() < 2) throw EstimationError("replicate drew a single unique cluster");
    const Dataset star = data.take(rows);
    const FittedModel m = detail::refit(spec, star, opts.warm_start ? &original : nullptr);
    return stat(m, star);
  });
  return detail::collect(slots, labels, "pairs-cluster", opts.seed, point, scale);
}

inline BootstrapResult pairs_cluster_bootstrap(const Dataset& data, const std::string& cluster, const ModelSpec& spec,
                                               const Statistic& stat, const BootstrapOptions& opts,
                                               const std::string& label = "statistic") {
  return pairs_cluster_bootstrap_multi(data, cluster, spec, detail::lift(stat), {label}, opts).front();
}

// ---------------------------------------------------------------------------
// Summaries

/// Sample variance of the replicates times the result's scale factor.
inline double boot_variance(const BootstrapResult& r) {
  if (r.successes() < 2) throw InferenceBlocked("bootstrap variance needs at least two successful replicates");
  double m = 0.0;
  for (double v : r.values) m += v;
  m /= static_cast<double>(r.values.size());
  double s = 0.0;
  for (double v : r.values) s += (v - m) * (v - m);
  return r.scale * s / static_cast<double>(r.values.size() - 1);
}

struct TTest {
  double t = std::numeric_limits<double>::quiet_NaN();
  double p = std::numeric_limits<double>::quiet_NaN();
  bool defined = false;  // false when the bootstrap variance is zero
};

/// t = point / sqrt(variance), two-sided p-value from the standard normal.
inline TTest boot_t_test(const BootstrapResult& r, double point) {
  const double v = boot_variance(r);
  TTest out;
  if (!(v > 0)) return out;
  out.t = point / std::sqrt(v);
  out.p = std::erfc(std::abs(out.t) / std::sqrt(2.0));
  out.defined = true;
  return out;
}

struct Interval {
  double lower = 0.0;
  double upper = 0.0;
};

/// Type-7 empirical quantiles of the replicates at alpha/2 and 1 - alpha/2.
inline Interval percentile_ci(const BootstrapResult& r, double alpha = 0.05) {
  if (!(alpha > 0 && alpha <= 1)) throw InvalidInput("percentile interval: alpha must lie in (0, 1]");
  if (r.values.empty()) throw InferenceBlocked("percentile interval: no successful replicates");
  std::vector<double> v = r.values;
  std::sort(v.begin(), v.end());
  return {type7_quantile(v, alpha / 2), type7_quantile(v, 1 - alpha / 2)};
}

struct InferenceSummary {
  double point = std::numeric_limits<double>::quiet_NaN();
  double replicate_mean = 0.0;
  double variance = 0.0;
  double se = 0.0;
  TTest test;
  Interval ci;
  double alpha = 0.05;
  std::size_t successes = 0, failures = 0, requested = 0;
  std::vector<std::string> warnings;
};

/// Full summary; refuses when more than `max_failure_rate` of the
/// replicates failed.
inline InferenceSummary summarize(const BootstrapResult& r, double alpha = 0.05,
                                  double max_failure_rate = kMaxFailureRate) {
  if (r.failure_rate() > max_failure_rate) {
    char buf[200];
    std::snprintf(buf, sizeof buf, "%zu of %zu bootstrap replicates failed (%.1f%%), above the %.1f%% limit",
                  r.failures.size(), r.requested, 100 * r.failure_rate(), 100 * max_failure_rate);
    throw InferenceBlocked(buf);
  }
  InferenceSummary s;
  s.alpha = alpha;
  s.successes = r.successes();
  s.failures = r.failures.size();
  s.requested = r.requested;
  s.variance = boot_variance(r);
  s.se = std::sqrt(s.variance);
  for (double v : r.values) s.replicate_mean += v;
  s.replicate_mean /= static_cast<double>(r.values.size());
  s.point = std::isfinite(r.point) ? r.point : s.replicate_mean;
  s.test = boot_t_test(r, s.point);
  if (!s.test.defined) s.warnings.push_back("bootstrap variance is zero; t-statistic undefined");
  s.ci = percentile_ci(r, alpha);
  if (static_cast<double>(s.successes) < 2.0 / alpha)
    s.warnings.push_back("fewer than 2/alpha successful replicates; percentile bounds are coarse");
  return s;
}

struct ConvergenceTrace {
  std::vector<std::size_t> replicates;  // prefix length B'
  std::vector<double> lower, upper;
  bool stable = false;
};

/// Percentile bounds recomputed on growing prefixes of the replicate vector
/// (index order). Stable when over the last 20% of prefixes neither bound
/// moves by more than 5% of the final interval width.
inline ConvergenceTrace convergence_trace(const BootstrapResult& r, double alpha = 0.05) {
  ConvergenceTrace t;
  if (r.values.size() < 2) return t;
  std::vector<double> sorted;
  for (std::size_t b = 0; b < r.values.size(); ++b) {
    sorted.insert(std::upper_bound(sorted.begin(), sorted.end(), r.values[b]), r.values[b]);
    if (sorted.size() < 2) continue;
    t.replicates.push_back(sorted.size());
    t.lower.push_back(type7_quantile(sorted, alpha / 2));
    t.upper.push_back(type7_quantile(sorted, 1 - alpha / 2));
  }
  const std::size_t n = t.lower.size();
  const std::size_t tail = std::max<std::size_t>(1, (n + 4) / 5);
  auto range = [&](const std::vector<double>& v) {
    const auto [lo, hi] = std::minmax_element(v.end() - static_cast<std::ptrdiff_t>(tail), v.end());
    return *hi - *lo;
  };
  const double width = t.upper.back() - t.lower.back();
  t.stable = std::max(range(t.lower), range(t.upper)) <= 0.05 * width;
  return t;
}

struct BootDiagnostics {
  double minimum = 0, q1 = 0, median = 0, q3 = 0, maximum = 0;
  double iqr = 0, lower_fence = 0, upper_fence = 0;
  std::size_t outliers = 0;
  double skewness = 0;
  bool warning = false;
  std::string message;
};

/// Boxplot statistics with 1.5 IQR fences and the replicate skewness. Warns
/// when the outlier share exceeds `outlier_share`.
inline BootDiagnostics diagnose_boot(const BootstrapResult& r, double outlier_share = 0.05) {
  if (r.values.empty()) throw InferenceBlocked("bootstrap diagnostics: no successful replicates");
  std::vector<double> v = r.values;
  std::sort(v.begin(), v.end());
  BootDiagnostics d;
  d.minimum = v.front();
  d.maximum = v.back();
  d.q1 = type7_quantile(v, 0.25);
  d.median = type7_quantile(v, 0.5);
  d.q3 = type7_quantile(v, 0.75);
  d.iqr = d.q3 - d.q1;
  d.lower_fence = d.q1 - 1.5 * d.iqr;
  d.upper_fence = d.q3 + 1.5 * d.iqr;
  for (double x : v) d.outliers += (x < d.lower_fence || x > d.upper_fence) ? 1 : 0;
  const double n = static_cast<double>(v.size());
  double m = 0;
  for (double x : v) m += x;
  m /= n;
  double m2 = 0, m3 = 0;
  for (double x : v) {
    m2 += (x - m) * (x - m);
    m3 += (x - m) * (x - m) * (x - m);
  }
  m2 /= n;
  m3 /= n;
  d.skewness = m2 > 0 ? m3 / std::pow(m2, 1.5) : 0.0;
  if (static_cast<double>(d.outliers) > outlier_share * n) {
    d.warning = true;
    char buf[160];
    std::snprintf(buf, sizeof buf, "%zu of %zu replicates lie outside the 1.5 IQR fences", d.outliers, v.size());
    d.message = buf;
  }
  return d;
}

// ---------------------------------------------------------------------------
// Nested instrumental-variable bootstrap

enum class FirstStageResampling { parametric, nonparametric, frozen };

struct IvBootstrapOptions {
  std::size_t outer = 20;  // first-stage replicates N_b
  std::size_t inner = 25;  // second-stage replicates per outer draw N_d
  std::uint64_t seed = 1;
  unsigned threads = 0;
  FirstStageResampling first_stage = FirstStageResampling::nonparametric;
};

/// Outer loop: resample the first stage and recompute the residuals. Inner
/// loop: parametric bootstrap of the second stage refitted with those
/// residuals. Replicate k * inner + d uses stream (seed, k * inner + d), so
/// a frozen first stage with one outer draw reproduces the plain parametric
/// bootstrap of the second stage.
inline std::vector<BootstrapResult> iv_bootstrap_multi(const Dataset& data, const std::vector<EndogenousSpec>& endo,
                                                       const ModelSpec& outcome, const TsriOptions& tsri,
                                                       const MultiStatistic& stat,
                                                       const std::vector<std::string>& labels,
                                                       const IvBootstrapOptions& opts) {
  if (opts.outer == 0 || opts.inner == 0) throw InvalidInput("IV bootstrap: N_b and N_d must be positive");
  const TsriFit original = tsri_fit(data, endo, outcome, tsri);
  ModelSpec stage2 = outcome;
  stage2.formulas = with_residual_terms(outcome.formulas, original.first.residual_columns, tsri);

  struct Outer {
    std::optional<FittedModel> model;
    Dataset data;
    std::string reason;
  };
  std::vector<Outer> outers(opts.outer);
  const RngStream outer_master = RngStream(opts.seed).substream(detail::kOuterStreams);
  auto outer_slots = detail::run_indexed(opts.outer, opts.threads, [&](std::size_t k) {
    if (opts.first_stage == FirstStageResampling::frozen) {
      outers[k].model = original.model;
      outers[k].data = original.data;
      return std::vector<double>{};
    }
    RngStream rng = outer_master.substream(k);
    Dataset est;
    if (opts.first_stage == FirstStageResampling::nonparametric) {
      std::vector<std::size_t> rows(data.rows());
      for (auto& r : rows) r = static_cast<std::size_t>(rng.below(data.rows()));
      est = data.take(rows);
    } else {
      est = data;
      for (std::size_t s = 0; s < endo.size(); ++s)
        est.set_numeric(endo[s].variable, detail::draw_response(original.first.models[s], rng));
    }
    const FirstStage fs = tsri_first_stage(data, endo, tsri, &est);
    outers[k].data = with_residual_columns(data, fs);
    outers[k].model = detail::refit(stage2, outers[k].data, &original.model);
    return std::vector<double>{};
  });
  for (std::size_t k = 0; k < opts.outer; ++k)
    if (!outer_slots[k].ok) outers[k].reason = "first-stage draw " + std::to_string(k) + ": " + outer_slots[k].reason;

  const std::vector<double> point = stat(original.model, original.data);
  const RngStream master(opts.seed);
  const auto slots = detail::run_indexed(opts.outer * opts.inner, opts.threads, [&](std::size_t b) {
    const Outer& o = outers[b / opts.inner];
    if (!o.model) throw EstimationError(o.reason);
    RngStream rng = master.substream(b);
    Dataset star = o.data;
    star.set_numeric(stage2.response, detail::draw_response(*o.model, rng));
    const FittedModel m = detail::refit(stage2, star, &*o.model);
    return stat(m, star);
  });
  return detail::collect(slots, labels, "iv-nested", opts.seed, point);
}

inline BootstrapResult iv_bootstrap(const Dataset& data, const std::vector<EndogenousSpec>& endo,
                                    const ModelSpec& outcome, const TsriOptions& tsri, const Statistic& stat,
                                    const IvBootstrapOptions& opts, const std::string& label = "statistic") {
  return iv_bootstrap_multi(data, endo, outcome, tsri, detail::lift(stat), {label}, opts).front();
}

// ---------------------------------------------------------------------------
// RDD bootstrap

/// Parametric resampling of the outcome from both side models and, in the
/// fuzzy case, pairs resampling of each side for the treatment-probability
/// models; every replicate re-runs the full estimator. The outcome draws use
/// the same streams in the sharp and fuzzy cases.
namespace detail {

/// Effect of each functional at the cutoff; a functional that does not exist
/// for the side distributions yields NaN. Lack of identification throws.
inline std::vector<double> rdd_effects(const RddSpec& spec, const RddWindow& w, const FittedModel& left,
                                       const FittedModel& right, double p_left, double p_right,
                                       const std::vector<Functional>& functionals) {
  const double den = spec.fuzzy ? p_right - p_left : 1.0;
  if (std::abs(den) < spec.epsilon)
    throw EstimationError("RDD: treatment probability jump " + std::to_string(den) +
                          " at the cutoff is below the identification threshold; no identification");
  const DistSpec dl{spec.model.family, predict_parameters(left, w.at_cutoff).front()};
  const DistSpec dr{spec.model.family, predict_parameters(right, w.at_cutoff).front()};
  std::vector<double> out;
  for (const auto& f : functionals) {
    try {
      out.push_back(evaluate(f, dr) / den - evaluate(f, dl) / den);
    } catch (const MomentError&) {
      out.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  return out;
}

}  // namespace detail

/// Parametric resampling of the outcome from both side models and, in the
/// fuzzy case, pairs resampling of each side for the treatment-probability
/// models; every replicate re-runs the full estimator. The outcome draws use
/// the same streams in the sharp and fuzzy cases.
inline std::vector<BootstrapResult> rdd_bootstrap_multi(const Dataset& data, const RddSpec& spec,
                                                        const std::vector<Functional>& functionals,
                                                        const BootstrapOptions& opts) {
  if (opts.replicates == 0) throw InvalidInput("bootstrap: at least one replicate required");
  if (functionals.empty()) throw InvalidInput("RDD bootstrap: no functionals requested");
  const auto w = detail::rdd_window(data, spec);
  const FittedModel left_fit = detail::rdd_side_fit(spec.model, w.left, "left");
  const FittedModel right_fit = detail::rdd_side_fit(spec.model, w.right, "right");
  ModelSpec left_spec = spec.model, right_spec = spec.model;
  if (opts.warm_start) {
    left_spec.control.start = left_fit.coefficients;
    right_spec.control.start = right_fit.coefficients;
  }
  const std::string tf = detail::treatment_formula(spec);
  std::vector<std::string> labels;
  for (const auto& f : functionals) labels.push_back(f.name());

  std::vector<double> point(functionals.size(), std::numeric_limits<double>::quiet_NaN());
  try {
    double pl = 0.0, pr = 1.0;
    if (spec.fuzzy) {
      pl = fit_probability_model(w.left, spec.treatment, tf).predict(w.at_cutoff);
      pr = fit_probability_model(w.right, spec.treatment, tf).predict(w.at_cutoff);
    }
    point = detail::rdd_effects(spec, w, left_fit, right_fit, pl, pr, functionals);
  } catch (const EstimationError&) {
    // Unidentified on the original sample; the replicates report how often.
  }
  const RngStream master(opts.seed);
  const RngStream pairs_master = master.substream(detail::kPairsStreams);
  const auto slots = detail::run_indexed(opts.replicates, opts.threads, [&](std::size_t b) {
    RngStream rng = master.substream(b);
    Dataset left = w.left, right = w.right;
    left.set_numeric(spec.model.response, detail::draw_response(left_fit, rng));
    right.set_numeric(spec.model.response, detail::draw_response(right_fit, rng));
    const FittedModel lm = detail::rdd_side_fit(left_spec, left, "left");
    const FittedModel rm = detail::rdd_side_fit(right_spec, right, "right");
    double pl = 0.0, pr = 1.0;
    if (spec.fuzzy) {
      RngStream prng = pairs_master.substream(b);
      auto resample = [&](const Dataset& side) {
        std::vector<std::size_t> rows(side.rows());
        for (auto& i : rows) i = static_cast<std::size_t>(prng.below(side.rows()));
        return side.take(rows);
      };
      pl = fit_probability_model(resample(w.left), spec.treatment, tf).predict(w.at_cutoff);
      pr = fit_probability_model(resample(w.right), spec.treatment, tf).predict(w.at_cutoff);
    }
    return detail::rdd_effects(spec, w, lm, rm, pl, pr, functionals);
  });
  return detail::collect(slots, labels, spec.fuzzy ? "rdd-fuzzy" : "rdd-sharp", opts.seed, point);
}

inline BootstrapResult rdd_bootstrap(const Dataset& data, const RddSpec& spec, const Functional& functional,
                                     const BootstrapOptions& opts) {
  return rdd_bootstrap_multi(data, spec, {functional}, opts).front();
}

// ---------------------------------------------------------------------------
// Common statistics

inline Statistic mte_statistic(CovariateProfile profile, Functional functional, std::string treatment) {
  return [profile = std::move(profile), functional, treatment = std::move(treatment)](const FittedModel& m,
                                                                                     const Dataset&) {
    return mte(m, profile, functional, treatment).difference;
  };
}

/// MTE of each functional; a functional undefined in either arm gives NaN.
inline MultiStatistic mte_multi_statistic(CovariateProfile profile, std::vector<Functional> functionals,
                                          std::string treatment) {
  return [profile = std::move(profile), functionals = std::move(functionals),
          treatment = std::move(treatment)](const FittedModel& m, const Dataset&) {
    std::vector<double> out;
    for (const auto& f : functionals) {
      try {
        out.push_back(mte(m, profile, f, treatment).difference);
      } catch (const MomentError&) {
        out.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    return out;
  };
}

inline Statistic coefficient_statistic(std::size_t parameter, std::string column) {
  return [parameter, column = std::move(column)](const FittedModel& m, const Dataset&) {
    return m.coefficient(parameter, column);
  };
}

}  // namespace gamlss
