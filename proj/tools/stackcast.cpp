// Batch front end: preprocess, train, evaluate, stability, regime, report.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "stackcast/error.hpp"
#include "stackcast/evaluation.hpp"
#include "stackcast/run_config.hpp"

namespace fs = std::filesystem;
using namespace stackcast;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kUsage = 2, kIo = 3, kValidation = 4, kTraining = 5, kLedger = 6 };

struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::string artifacts;
  std::vector<std::string> overrides;
};

RunConfig resolve(const Options& o) {
  RunConfig c = o.config.empty() ? RunConfig{} : RunConfig::load(o.config);
  for (const auto& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ValidationError("--set expects key=value, got '" + kv + "'");
    c.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) c.set("seed", std::to_string(*o.seed));
  if (!o.out.empty()) c.set("out", o.out);
  if (!o.artifacts.empty()) c.set("artifacts", o.artifacts);
  else if (!o.out.empty() && o.config.empty()) c.set("artifacts", (fs::path(o.out) / "artifacts").string());
  c.pipeline();
  return c;
}

// Outputs must never land next to, or on top of, the input dataset.
void guard_output(const RunConfig& c, const fs::path& dir) {
  const auto data_dir = fs::weakly_canonical(fs::absolute(c.dataset()).parent_path());
  const auto target = fs::weakly_canonical(fs::absolute(dir));
  if (target == data_dir) throw ValidationError("refusing to write into the dataset directory " + data_dir.string());
}

void write(const RunConfig& c, const fs::path& dir, const std::string& name, const std::string& body,
           bool csv_header = true) {
  guard_output(c, dir);
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto path = dir / name;
  std::ofstream out(path, std::ios::binary);
  if (csv_header) out << "# config_hash=" << c.hash() << " seed=" << c.seed() << '\n';
  out << body;
  if (!out) throw IoError("cannot write " + path.string());
}

std::string read_text(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

SplitDataset load_dataset(const RunConfig& c) { return SplitDataset(load_ohlcv(c.dataset()), c.ratios()); }

bool covers(const OhlcvSeries& s, std::span<const RegimeWindow> windows) {
  for (const auto& w : windows)
    if (!s.index_of(w.first) || !s.index_of(w.last)) return false;
  return true;
}

void print_regimes(std::span<const RegimeStats> stats) {
  std::printf("%-22s %-23s %5s %9s %9s %7s %11s\n", "regime", "range", "N", "mean r %", "std r %", "ann vol",
              "median close");
  for (const auto& s : stats)
    std::printf("%-22s %s..%s %5zu %9.3f %9.3f %7.3f %11.2f\n", s.window.label.c_str(),
                format_iso(s.window.first).c_str(), format_iso(s.window.last).c_str(), s.n, s.mean_return_pct,
                s.std_return_pct, s.annualized_vol, s.median_close);
}

int cmd_preprocess(const RunConfig& c) {
  const SplitDataset data = load_dataset(c);
  const auto& b = data.boundaries();
  const auto out = c.out_dir();
  write(c, out, "normalized.csv", normalized_csv(data));
  const auto report = zscore_outliers(data.series(), b.train_end, c.outlier_threshold(), c.outlier_feature());
  write(c, out, "outliers.csv", outlier_csv(data.series(), report));

  std::printf("records      %zu (%s .. %s)\n", data.series().size(), format_dmy(data.series()[0].date).c_str(),
              format_dmy(data.series()[data.series().size() - 1].date).c_str());
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    const auto [lo, hi] = data.date_range(s);
    std::printf("%-12s %zu rows  %s - %s\n", std::string(to_string(s)).c_str(), b.end(s) - b.begin(s),
                format_dmy(lo).c_str(), format_dmy(hi).c_str());
  }
  std::printf("outliers     %zu of %zu (%.2f%%) at |z| > %g on %s\n", report.count(), data.series().size(),
              100.0 * report.fraction(), report.threshold, std::string(kFeatureNames[std::size_t(report.feature)]).c_str());

  const auto windows = default_regime_windows();
  if (covers(data.series(), windows)) {
    const auto stats = regime_analysis(data.series(), windows, c.regime_anchor());
    write(c, out, "regime.csv", regime_csv(stats));
    write(c, out, "rolling_vol.csv", rolling_vol_csv(stats));
  } else {
    std::printf("regime       windows outside the data range; regime.csv not written\n");
  }
  std::printf("config hash  %s\n", c.hash().c_str());
  return kOk;
}

int cmd_train(const RunConfig& c) {
  const SplitDataset data = load_dataset(c);
  guard_output(c, c.artifacts_dir());
  std::printf("training with seed %llu, config hash %s\n", static_cast<unsigned long long>(c.seed()), c.hash().c_str());
  const auto a = run_protocol(data, c.pipeline());
  a.save(c.artifacts_dir());
  std::printf("acb  best epoch %zu  validation MSE %.6g  (%s)\n", a.acb_history.best_epoch,
              a.acb_history.best_validation_loss, std::string(to_string(a.acb_history.stop)).c_str());
  std::printf("tft  best epoch %zu  validation MSE %.6g  (%s)\n", a.tft_history.best_epoch,
              a.tft_history.best_validation_loss, std::string(to_string(a.tft_history.stop)).c_str());
  std::printf("weights  W_bl %.6f  W_tft %.6f  (validation MAPE %.4f%% / %.4f%%)\n", a.weights.w_bl, a.weights.w_tft,
              a.weights.error_bl, a.weights.error_tft);
  std::printf("meta     %zu trees\n", a.meta.trees().size());
  std::printf("test reads before evaluation: %zu\n", data.ledger().count(Split::Test));
  std::printf("artifacts %s (hash %s)\n", c.artifacts_dir().string().c_str(), a.hash().c_str());
  return kOk;
}

void check_frozen_ledger(const std::string& csv) {
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line))
    if (line.find(",test,") != std::string::npos)
      throw LedgerError("artifact ledger records a test read before evaluation: " + line);
}

int cmd_evaluate(const RunConfig& c) {
  const auto a = PipelineArtifacts::load(c.artifacts_dir());
  check_frozen_ledger(a.ledger_csv);
  const SplitDataset data = load_dataset(c);
  const auto& b = data.boundaries();
  if (b.n != a.boundaries.n || b.train_end != a.boundaries.train_end || b.validation_end != a.boundaries.validation_end)
    throw ValidationError("dataset split differs from the one the artifacts were trained on");
  if (a.config_hash != c.hash())
    std::fprintf(stderr, "note: artifacts were trained under config hash %s, evaluating under %s\n",
                 a.config_hash.c_str(), c.hash().c_str());

  const auto run = walk_forward(a, data);
  const auto report = evaluate(run, a, c.ci_sigma());
  const auto out = c.out_dir();
  write(c, out, "report.json", report.to_json(), false);
  write(c, out, "predictions.csv", run.to_csv());
  write(c, out, "evaluation_ledger.csv", a.ledger_csv + data.ledger().to_csv());

  std::printf("test block %zu days, artifact hash %s (unchanged)\n", run.size(), run.hash_after.c_str());
  auto row = [](const char* name, const MetricsReport& m) {
    std::printf("%-18s MAPE %7.4f%%  MAE %10.2f  RMSE %10.2f\n", name, m.mape, m.mae, m.rmse);
  };
  row("stacked", report.meta);
  row("acb", report.acb);
  row("tft", report.tft);
  row("naive persistence", report.naive);
  std::printf("approx. 95%% CI    %.4f%% +/- %.4f%%\n", report.ci.center, report.ci.half_width);
  std::printf("performance gain  %.4f\n", report.performance_gain);
  return kOk;
}

int cmd_stability(const RunConfig& c) {
  const auto series = load_ohlcv(c.dataset());
  const auto seeds = c.stability_seeds();
  const auto dir = c.out_dir() / "stability";
  guard_output(c, dir);
  const auto summary = stability_study(series, c.ratios(), c.pipeline(), seeds, c.stability_threads(),
                                       [](const SeedOutcome& o) {
                                         if (o.ok)
                                           std::printf("seed %llu  MAPE %.4f%%\n", static_cast<unsigned long long>(o.seed),
                                                       o.report.meta.mape);
                                         else
                                           std::printf("seed %llu  FAILED: %s\n", static_cast<unsigned long long>(o.seed),
                                                       o.error.c_str());
                                         std::fflush(stdout);
                                       });
  for (std::size_t k = 0; k < summary.runs.size(); ++k) {
    const auto& o = summary.runs[k];
    const auto name = "run_" + std::to_string(k + 1) + "_seed_" + std::to_string(o.seed) + ".json";
    write(c, dir, name, o.ok ? o.report.to_json() : nlohmann::json{{"seed", o.seed}, {"error", o.error}}.dump(2) + "\n",
          false);
  }
  auto j = nlohmann::json::parse(summary.to_json());
  j["config_hash"] = c.hash();
  write(c, dir, "summary.json", j.dump(2) + "\n", false);
  std::printf("stacked MAPE mean %.4f%%  std %.4f  [%.4f, %.4f] over %zu runs (%zu failed)\n", summary.mape.mean,
              summary.mape.stddev, summary.mape.min, summary.mape.max, summary.runs.size() - summary.failures,
              summary.failures);
  return summary.failures == 0 ? kOk : kTraining;
}

int cmd_regime(const RunConfig& c) {
  const auto series = load_ohlcv(c.dataset());
  const auto windows = default_regime_windows();
  const auto stats = regime_analysis(series, windows, c.regime_anchor());
  write(c, c.out_dir(), "regime.csv", regime_csv(stats));
  write(c, c.out_dir(), "rolling_vol.csv", rolling_vol_csv(stats));
  print_regimes(stats);
  return kOk;
}

int cmd_report(const RunConfig& c) {
  const auto p = c.pipeline();
  const AcbModel acb(p.acb);
  const TftModel tft(p.tft);
  std::printf("ACB parameter audit\n%s\n", acb.audit().to_text().c_str());
  std::printf("TFT parameter audit\n%s\n", tft.audit().to_text().c_str());
  write(c, c.out_dir(), "parameter_audit.csv", "model," + std::string("component,audited,published\n") + [&] {
    std::string s;
    for (const auto& [name, audit] : {std::pair{"acb", acb.audit()}, std::pair{"tft", tft.audit()}}) {
      for (const auto& r : audit.rows)
        s += std::string(name) + "," + r.component + "," + std::to_string(r.audited) + "," + std::to_string(r.published) + "\n";
      s += std::string(name) + ",total," + std::to_string(audit.total) + "," + std::to_string(audit.published_total) + "\n";
    }
    return s;
  }());
  const auto report_path = c.out_dir() / "report.json";
  if (fs::exists(report_path)) {
    const auto j = nlohmann::json::parse(read_text(report_path));
    std::printf("report %s\n", report_path.string().c_str());
    for (const auto* k : {"stacked", "acb", "tft", "naive_persistence"})
      std::printf("  %-18s MAPE %7.4f%%  MAE %10.2f  RMSE %10.2f\n", k, j.at(k).at("MAPE").get<double>(),
                  j.at(k).at("MAE").get<double>(), j.at(k).at("RMSE").get<double>());
    std::printf("  performance gain   %.4f\n", j.at("performance_gain").get<double>());
  }
  const auto summary_path = c.out_dir() / "stability" / "summary.json";
  if (fs::exists(summary_path)) {
    const auto j = nlohmann::json::parse(read_text(summary_path));
    const auto& m = j.at("stacked").at("MAPE");
    std::printf("stability: stacked MAPE mean %.4f%% std %.4f over %zu runs\n", m.at("mean").get<double>(),
                m.at("std").get<double>(), j.at("runs").size());
  }
  return kOk;
}

int exit_code(const Error& e) {
  switch (e.kind()) {
    case ErrorKind::Io: return kIo;
    case ErrorKind::Validation: return kValidation;
    case ErrorKind::Numeric:
    case ErrorKind::Training: return kTraining;
    case ErrorKind::Ledger: return kLedger;
  }
  return kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Stacked BTC next-day close forecaster"};
  app.require_subcommand(1);
  Options opt;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", opt.config, "key=value configuration file")->check(CLI::ExistingFile);
    sub->add_option("--seed", opt.seed, "run seed (overrides the config)");
    sub->add_option("--out", opt.out, "output directory");
    sub->add_option("--artifacts", opt.artifacts, "artifacts directory");
    sub->add_option("--set", opt.overrides, "override one config key, key=value (repeatable)");
  };
  struct Command {
    const char* name;
    const char* help;
    int (*run)(const RunConfig&);
  };
  const Command commands[] = {
      {"preprocess", "normalize, split, flag outliers, regime table", cmd_preprocess},
      {"train", "train base learners, weight, fit the meta-learner, freeze artifacts", cmd_train},
      {"evaluate", "walk-forward evaluation of frozen artifacts on the test block", cmd_evaluate},
      {"stability", "repeat train + evaluate over the configured seeds", cmd_stability},
      {"regime", "regime statistics around the 2024 events", cmd_regime},
      {"report", "parameter audits and a summary of existing reports", cmd_report},
  };
  std::vector<std::pair<CLI::App*, const Command*>> subs;
  for (const auto& cmd : commands) {
    auto* sub = app.add_subcommand(cmd.name, cmd.help);
    add_common(sub);
    subs.emplace_back(sub, &cmd);
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kOk : kUsage;
  }

  try {
    const RunConfig config = resolve(opt);
    for (const auto& [sub, cmd] : subs)
      if (sub->parsed()) return cmd->run(config);
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return exit_code(e);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kFailure;
  }
  return kFailure;
}
