#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>
#include <unistd.h>

#include "gamlss/cli.hpp"

using namespace gamlss;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const auto p = fs::temp_directory_path() / ("gamlss_test_cli_" + std::to_string(::getpid())) / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

AnalysisConfig config(const std::string& text, const fs::path& base) {
  std::istringstream in(text);
  return load_config(parse_ini(in), base);
}

IngestResult ingest_text(const std::string& csv, const Schema& schema, const std::vector<RowFilter>& filters = {}) {
  std::istringstream in(csv);
  return ingest_csv(in, schema, filters);
}

template <class E>
std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const E& e) {
    return e.what();
  }
  return "<no exception>";
}

// Normal outcome, binary treatment, one covariate.
std::string normal_dgp(std::size_t n, double beta_t, const std::string& boot = "method = none") {
  return "[simulate]\nn = " + std::to_string(n) + "\nseed = 42\nfamily = normal\nresponse = y\n" +
         "output = sim.csv\nx.T = bernoulli(0.5)\nx.x = normal(0, 1)\n" +
         "beta.mu = 10 + " + std::to_string(beta_t) + "*T + 0.5*x\nbeta.sigma = 0 + " + std::to_string(beta_t) +
         "*T\n[data]\npath = sim.csv\n[schema]\ny = numeric\nT = numeric\nx = numeric\n"
         "[model]\nfamily = normal\nresponse = y\nparam.mu = 1 + T + x\nparam.sigma = 1 + T\n"
         "[effects]\ntreatment = T\nfunctionals = mean, variance, quantile:0.5\n[bootstrap]\n" + boot + "\n";
}

}  // namespace

// ---------------------------------------------------------------------------
// Ingestion

TEST(Ingest, FilterDropsAreCounted) {
  const std::string csv = "y,x\n0,1\n1.5,2\n0,3\n2.5,4\n0,5\n";
  const auto r = ingest_text(csv, {{"y", ColumnType::numeric}, {"x", ColumnType::numeric}}, {parse_filter("y > 0")});
  EXPECT_EQ(r.rows_read, 5u);
  EXPECT_EQ(r.data.rows(), 2u);
  ASSERT_EQ(r.dropped.size(), 1u);
  EXPECT_EQ(r.dropped.begin()->second, 3u);
  EXPECT_NE(r.dropped.begin()->first.find("y > 0"), std::string::npos);
  EXPECT_EQ(r.total_dropped(), 3u);
}

TEST(Ingest, MissingValuesAreCategorized) {
  const std::string csv = "y,x,g\n1,,a\nNA,2,b\n3,4,\n5,6,c\n";
  const auto r = ingest_text(csv, {{"y", ColumnType::numeric}, {"x", ColumnType::numeric}, {"g", ColumnType::categorical}});
  EXPECT_EQ(r.data.rows(), 1u);
  EXPECT_EQ(r.dropped.at("missing x"), 1u);
  EXPECT_EQ(r.dropped.at("missing y"), 1u);
  EXPECT_EQ(r.dropped.at("missing g"), 1u);
  EXPECT_EQ(r.total_dropped() + r.data.rows(), r.rows_read);
}

TEST(Ingest, FractionalCountIsRejected) {
  const auto msg = error_of<DataError>([] { ingest_text("k\n1\n2.5\n", {{"k", ColumnType::count}}); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'k'"), std::string::npos) << msg;
}

TEST(Ingest, UnparseableCellNamesRowAndColumn) {
  const auto msg = error_of<DataError>(
      [] { ingest_text("a,b\n1,2\n3,x7\n", {{"a", ColumnType::numeric}, {"b", ColumnType::numeric}}); });
  EXPECT_NE(msg.find("line 3"), std::string::npos) << msg;
  EXPECT_NE(msg.find("'b'"), std::string::npos) << msg;
}

TEST(Ingest, SchemaColumnAbsentFromHeader) {
  EXPECT_THROW(ingest_text("a\n1\n", {{"a", ColumnType::numeric}, {"b", ColumnType::numeric}}), DataError);
}

TEST(Ingest, RaggedRowRejected) {
  EXPECT_THROW(ingest_text("a,b\n1,2\n3\n", {{"a", ColumnType::numeric}, {"b", ColumnType::numeric}}), DataError);
}

TEST(Ingest, CategoricalFilterNeedsEquality) {
  EXPECT_THROW(ingest_text("g\na\n", {{"g", ColumnType::categorical}}, {parse_filter("g > a")}), ConfigError);
  const auto r = ingest_text("g\na\nb\na\n", {{"g", ColumnType::categorical}}, {parse_filter("g != a")});
  EXPECT_EQ(r.data.rows(), 1u);
}

TEST(Ingest, RoundTripPreservesValues) {
  RngStream rng(9);
  Dataset d;
  std::vector<double> x(50), k(50);
  std::vector<std::string> g(50);
  for (std::size_t i = 0; i < 50; ++i) {
    x[i] = rng.normal() * std::pow(10.0, static_cast<double>(i % 7) - 3);
    k[i] = std::floor(rng.uniform() * 20);
    g[i] = i % 3 ? "plain" : "with, comma \"q\"";
  }
  d.add_numeric("x", x);
  d.add_numeric("k", k, ColumnType::count);
  d.add_categorical("g", g);
  std::ostringstream out;
  write_csv(out, d);
  const auto r = ingest_text(out.str(), schema_of(d));
  ASSERT_EQ(r.data.rows(), 50u);
  for (std::size_t i = 0; i < 50; ++i) {
    EXPECT_EQ(r.data.numeric("x")[i], x[i]);
    EXPECT_EQ(r.data.numeric("k")[i], k[i]);
    EXPECT_EQ(r.data.column("g").levels[i], g[i]);
  }
  std::ostringstream again;
  write_csv(again, r.data);
  EXPECT_EQ(again.str(), out.str());
}

TEST(Ingest, HandlesBomAndCrlf) {
  const auto r = ingest_text("\xEF\xBB\xBFy,x\r\n1,2\r\n3,4\r\n", {{"y", ColumnType::numeric}, {"x", ColumnType::numeric}});
  EXPECT_EQ(r.data.rows(), 2u);
  EXPECT_EQ(r.data.numeric("x")[1], 4.0);
}

// ---------------------------------------------------------------------------
// Config

TEST(Config, RejectsUnknownSectionAndKey) {
  const auto base = fs::temp_directory_path();
  EXPECT_THROW(config("[nonsense]\na = 1\n", base), ConfigError);
  EXPECT_THROW(config("[effects]\ntreatmnet = T\n", base), ConfigError);
}

TEST(Config, ExactlyOneBootstrapMethod) {
  const auto base = fs::temp_directory_path();
  const std::string head = "[schema]\ny = numeric\nv = categorical\n[bootstrap]\n";
  EXPECT_THROW(config(head + "method = parametric, pairs-cluster\n", base), ConfigError);
  EXPECT_THROW(config(head + "method = pairs-cluster\n", base), ConfigError);
  EXPECT_THROW(config(head + "method = parametric\ncluster = v\n", base), ConfigError);
  EXPECT_NO_THROW(config(head + "method = pairs-cluster\ncluster = v\n", base));
}

TEST(Config, ReferencedColumnsMustBeInSchema) {
  const auto base = fs::temp_directory_path();
  const std::string schema = "[schema]\ny = numeric\nT = numeric\n";
  const auto msg = error_of<ConfigError>([&] {
    config(schema + "[model]\nfamily = normal\nresponse = y\nparam.mu = 1 + T + age\n", base);
  });
  EXPECT_NE(msg.find("age"), std::string::npos) << msg;
  EXPECT_THROW(config(schema + "[effects]\ntreatment = D\n", base), ConfigError);
  EXPECT_THROW(config(schema + "[model]\nfamily = poisson\nresponse = y\n", base), ConfigError);
  EXPECT_THROW(config(schema + "[model]\nfamily = normal\nresponse = y\nparam.nu = 1\n", base), ConfigError);
  EXPECT_THROW(config(schema + "[model]\nfamily = weibull\nresponse = y\n", base), ConfigError);
  EXPECT_THROW(config(schema + "[effects]\nfunctionals = mean, median\n", base), ConfigError);
}

TEST(Config, HashIgnoresOutputAndKeyOrder) {
  const auto base = fs::temp_directory_path();
  const auto a = config("[schema]\ny = numeric\n[bootstrap]\nseed = 3\nreplicates = 9\n[output]\ndir = a\n", base);
  const auto b = config("[bootstrap]\nreplicates = 9\nseed = 3\n[schema]\ny = numeric\n[output]\ndir = b\n", base);
  const auto c = config("[schema]\ny = numeric\n[bootstrap]\nseed = 4\nreplicates = 9\n", base);
  EXPECT_EQ(a.hash(), b.hash());
  EXPECT_NE(a.hash(), c.hash());
}

// ---------------------------------------------------------------------------
// Simulation

TEST(Simulate, ZeroRowsGivesHeaderOnly) {
  const auto dir = scratch("zero");
  auto cfg = config(normal_dgp(0, 0.0), dir);
  cli::run("simulate", cfg);
  EXPECT_EQ(slurp(dir / "sim.csv"), "T,x,y\n");
}

TEST(Simulate, FixedSeedIsByteIdentical) {
  const auto a = scratch("seed_a"), b = scratch("seed_b");
  cli::run("simulate", config(normal_dgp(300, 0.4), a));
  cli::run("simulate", config(normal_dgp(300, 0.4), b));
  EXPECT_EQ(slurp(a / "sim.csv"), slurp(b / "sim.csv"));
  EXPECT_EQ(slurp(a / "sim.csv.truth.json"), slurp(b / "sim.csv.truth.json"));
  EXPECT_GT(slurp(a / "sim.csv").size(), 300u * 6);
}

TEST(Simulate, LogNormalLogMeanWithinThreeStandardErrors) {
  const auto dir = scratch("lognormal");
  const double mu = 2.0, sigma = 0.5;
  const std::string text = "[simulate]\nn = 10000\nseed = 17\nfamily = lognormal\nresponse = y\noutput = ln.csv\n"
                           "beta.mu = 2\nbeta.sigma = " + std::to_string(std::log(sigma)) + "\n";
  const auto sim = simulate(load_simulation(config(text, dir)));
  const auto& y = sim.data.numeric("y");
  ASSERT_EQ(y.size(), 10000u);
  double m = 0, s2 = 0;
  for (double v : y) m += std::log(v);
  m /= static_cast<double>(y.size());
  for (double v : y) s2 += (std::log(v) - m) * (std::log(v) - m);
  const double se = std::sqrt(s2 / static_cast<double>(y.size() - 1) / static_cast<double>(y.size()));
  EXPECT_LT(std::abs(m - mu), 3 * se);
  EXPECT_NEAR(std::sqrt(s2 / static_cast<double>(y.size() - 1)), sigma, 0.02);
}

TEST(Simulate, InvalidFamilyOrDomainRejected) {
  const auto dir = scratch("invalid");
  EXPECT_THROW(load_simulation(config("[simulate]\nfamily = cauchy\noutput = a.csv\nbeta.mu = 0\n", dir)), ConfigError);
  EXPECT_THROW(load_simulation(config("[simulate]\nfamily = normal\noutput = a.csv\nbeta.mu = 0\n", dir)), ConfigError);
  const std::string bad_domain = "[simulate]\nn = 5\nfamily = normal\noutput = a.csv\nbeta.mu = 0\n"
                                 "beta.sigma = -1\nlink.sigma = identity\n";
  EXPECT_THROW(simulate(load_simulation(config(bad_domain, dir))), InvalidInput);
}

TEST(Simulate, CountFamilyWritesIntegerColumn) {
  const auto dir = scratch("count");
  const auto sim = simulate(load_simulation(
      config("[simulate]\nn = 200\nseed = 3\nfamily = poisson\noutput = p.csv\nbeta.mu = 1.2\n", dir)));
  EXPECT_EQ(sim.data.column("y").type, ColumnType::count);
  for (double v : sim.data.numeric("y")) EXPECT_EQ(v, std::floor(v));
}

// ---------------------------------------------------------------------------
// Subcommands

TEST(Run, EffectTableHasEstimateAndBoundColumns) {
  const auto dir = scratch("e2e");
  const auto cfg = config(normal_dgp(400, 0.5, "method = parametric\nreplicates = 49\nseed = 5"), dir);
  cli::run("simulate", cfg);
  const auto r = cli::run("bootstrap", cfg);
  EXPECT_EQ(r.status, cli::kExitOk) << r.message;
  const auto& t = r.report.at("effects");
  EXPECT_EQ(t.at("columns"), report::Json({"Estimate", "Lower Bound", "Upper Bound", "n", "B"}));
  ASSERT_EQ(t.at("rows").size(), 3u);
  for (const auto& row : t.at("rows")) {
    for (const char* c : {"Estimate", "Lower Bound", "Upper Bound", "n", "B"}) ASSERT_TRUE(row.contains(c)) << c;
    EXPECT_TRUE(row.at("Lower Bound").is_number());
    EXPECT_LE(row.at("Lower Bound").get<double>(), row.at("Upper Bound").get<double>());
    EXPECT_EQ(row.at("B").get<int>(), 49);
    EXPECT_EQ(row.at("n").get<int>(), 400);
  }
  EXPECT_EQ(r.report.at("provenance").at("config_hash").get<std::string>(), cfg.hash());
  const auto out = cli::write_outputs(r, dir / "out");
  EXPECT_TRUE(fs::exists(out / "report.json"));
  EXPECT_TRUE(fs::exists(out / "density.svg"));
  EXPECT_TRUE(fs::exists(out / "trace_mean.svg"));
  EXPECT_TRUE(fs::exists(out / "replicates_mean.svg"));
  EXPECT_EQ(slurp(out / "density.svg").rfind("<svg", 0), 0u);
}

TEST(Run, NullTreatmentGivesNearZeroEffects) {
  const auto dir = scratch("null_effect");
  const auto cfg = config(normal_dgp(20000, 0.0), dir);
  cli::run("simulate", cfg);
  const auto r = cli::run("effects", cfg);
  ASSERT_EQ(r.status, cli::kExitOk);
  // sigma = 1; arm sizes about n/2, so SE(mean diff) ~ 2/sqrt(n) and
  // SE(variance diff) ~ 2*sqrt(2)/sqrt(n).
  const double n = 20000;
  const auto& rows = r.report.at("effects").at("rows");
  EXPECT_LT(std::abs(rows[0].at("Estimate").get<double>()), 4 * 2 / std::sqrt(n));
  EXPECT_LT(std::abs(rows[1].at("Estimate").get<double>()), 4 * 2 * std::sqrt(2.0) / std::sqrt(n));
  EXPECT_LT(std::abs(rows[2].at("Estimate").get<double>()), 4 * 2 * 1.2533 / std::sqrt(n));
}

TEST(Run, ReportsAreDeterministicAcrossThreadCounts) {
  const auto dir = scratch("determinism");
  const auto c1 = config(normal_dgp(300, 0.3, "method = parametric\nreplicates = 40\nseed = 8\nthreads = 1"), dir);
  const auto c4 = config(normal_dgp(300, 0.3, "method = parametric\nreplicates = 40\nseed = 8\nthreads = 4"), dir);
  cli::run("simulate", c1);
  const auto a = cli::run("bootstrap", c1), b = cli::run("bootstrap", c1), c = cli::run("bootstrap", c4);
  EXPECT_EQ(a.report.dump(2), b.report.dump(2));
  EXPECT_EQ(a.report.at("effects").dump(), c.report.at("effects").dump());
  ASSERT_EQ(a.artifacts.size(), b.artifacts.size());
  for (std::size_t i = 0; i < a.artifacts.size(); ++i) EXPECT_EQ(a.artifacts[i].content, b.artifacts[i].content);
}

TEST(Run, RegenerateFromProvenanceIsByteIdentical) {
  const auto dir = scratch("regenerate");
  const auto cfg = config(normal_dgp(300, 0.3), dir);
  cli::run("simulate", cfg);
  const auto first = cli::write_outputs(cli::run("effects", cfg), dir / "first");
  auto [sub, again] = cli::from_report((first / "report.json").string());
  EXPECT_EQ(sub, "effects");
  const auto second = cli::write_outputs(cli::run(sub, again), dir / "second");
  EXPECT_EQ(slurp(first / "report.json"), slurp(second / "report.json"));
  EXPECT_EQ(slurp(first / "density.svg"), slurp(second / "density.svg"));

  // A changed data file no longer matches the recorded hash.
  std::ofstream(dir / "sim.csv", std::ios::app) << "1,0.5,10\n";
  EXPECT_THROW(cli::from_report((first / "report.json").string()), DataError);
}

TEST(Run, FitReportsModelAndResidualTable) {
  const auto dir = scratch("fit");
  const auto cfg = config(normal_dgp(500, 0.3), dir);
  cli::run("simulate", cfg);
  const auto r = cli::run("fit", cfg);
  const auto& fit = r.report.at("fit");
  EXPECT_TRUE(fit.at("converged").get<bool>());
  EXPECT_EQ(fit.at("parameters").size(), 2u);
  EXPECT_TRUE(fit.at("parameters")[0].at("coefficients").contains("T"));
  const auto& rows = r.report.at("residuals").at("rows");
  ASSERT_EQ(rows.size(), 5u);
  EXPECT_EQ(rows[4].at("statistic"), "Filliben Correlation Coef.");
  EXPECT_GT(rows[4].at("values")[0].get<double>(), 0.99);
  EXPECT_EQ(r.report.at("data").at("rows_used").get<int>(), 500);
}

TEST(Run, DiagnoseComparesFamilies) {
  const auto dir = scratch("diagnose");
  auto text = normal_dgp(400, 0.3);
  text += "[diagnose]\nfamilies = normal, lognormal\n";
  const auto cfg = config(text, dir);
  cli::run("simulate", cfg);
  const auto r = cli::run("diagnose", cfg);
  EXPECT_EQ(r.report.at("residuals").at("columns"), report::Json({"normal", "lognormal"}));
  ASSERT_EQ(r.artifacts.size(), 2u);
  EXPECT_EQ(r.artifacts[0].name, "qq_normal.svg");
}

// ---------------------------------------------------------------------------
// Exit status

TEST(ExitCodes, MapErrorKinds) {
  EXPECT_EQ(cli::exit_code(ConfigError("x")), 2);
  EXPECT_EQ(cli::exit_code(InvalidInput("x")), 2);
  EXPECT_EQ(cli::exit_code(DataError("x")), 3);
  EXPECT_EQ(cli::exit_code(EstimationError("x")), 4);
  EXPECT_EQ(cli::exit_code(MomentError("x")), 4);
  EXPECT_EQ(cli::exit_code(InferenceBlocked("x")), 5);
  EXPECT_EQ(cli::exit_code(std::runtime_error("x")), 1);
}

TEST(ExitCodes, PreconditionsRejected) {
  const auto dir = scratch("preconditions");
  const auto cfg = config(normal_dgp(100, 0.3), dir);
  // Data file not yet simulated.
  EXPECT_THROW(cli::run("fit", cfg), DataError);
  cli::run("simulate", cfg);
  EXPECT_THROW(cli::run("bootstrap", cfg), ConfigError);
  EXPECT_THROW(cli::run("iv", cfg), ConfigError);
  EXPECT_THROW(cli::run("rdd", cfg), ConfigError);
  EXPECT_THROW(cli::run("panel", cfg), ConfigError);
  EXPECT_THROW(cli::run("frobnicate", cfg), ConfigError);
}

TEST(ExitCodes, EverythingFilteredOutIsDataError) {
  const auto dir = scratch("all_filtered");
  auto text = normal_dgp(50, 0.3);
  text.replace(text.find("path = sim.csv"), 14, "path = sim.csv\nfilters = y > 1e9");
  const auto cfg = config(text, dir);
  cli::run("simulate", cfg);
  EXPECT_THROW(cli::run("fit", cfg), DataError);
}

TEST(ExitCodes, UndefinedFunctionalSetsEstimationStatus) {
  const auto dir = scratch("moment");
  // sigma * tau < 2: the mean exists, the variance does not.
  const std::string text =
      "[simulate]\nn = 2000\nseed = 4\nfamily = singh-maddala\noutput = sm.csv\nx.T = bernoulli(0.5)\n"
      "beta.mu = 1 + 0.2*T\nbeta.sigma = 0\nbeta.tau = 0.3\n"
      "[data]\npath = sm.csv\n[schema]\ny = numeric\nT = numeric\n"
      "[model]\nfamily = singh-maddala\nresponse = y\nparam.mu = 1 + T\n"
      "[effects]\ntreatment = T\nfunctionals = mean, variance\n";
  const auto cfg = config(text, dir);
  cli::run("simulate", cfg);
  const auto r = cli::run("effects", cfg);
  EXPECT_EQ(r.status, cli::kExitEstimation);
  const auto& rows = r.report.at("effects").at("rows");
  EXPECT_TRUE(rows[0].at("Estimate").is_number());
  EXPECT_TRUE(rows[1].at("Estimate").is_null());
  EXPECT_TRUE(rows[1].contains("error"));
}
