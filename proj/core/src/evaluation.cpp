#include "stackcast/evaluation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <mutex>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "stackcast/error.hpp"

namespace stackcast {

using nlohmann::json;

namespace {

Eigen::MatrixXd normalized_window(const MinMaxScaler& scaler, std::span<const OhlcvRecord> rows, bool calendar) {
  const auto cols = Eigen::Index(kNumOhlcv + (calendar ? kNumCalendar : 0));
  Eigen::MatrixXd out(Eigen::Index(rows.size()), cols);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const auto v = scaler.transform(rows[i]);
    for (std::size_t f = 0; f < kNumOhlcv; ++f) out(Eigen::Index(i), Eigen::Index(f)) = v[f];
    if (calendar) {
      const auto c = calendar_covariates(rows[i].date);
      for (std::size_t f = 0; f < kNumCalendar; ++f) out(Eigen::Index(i), Eigen::Index(kNumOhlcv + f)) = c[f];
    }
  }
  return out;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0;
  std::sort(v.begin(), v.end());
  const auto n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

json metrics_json(const MetricsReport& m) { return {{"MAPE", m.mape}, {"MAE", m.mae}, {"RMSE", m.rmse}, {"n", m.n}}; }

json spread_json(const Spread& s) { return {{"mean", s.mean}, {"std", s.stddev}, {"min", s.min}, {"max", s.max}}; }

}  // namespace

ForecastPoint forecast_next(const PipelineArtifacts& a, std::span<const OhlcvRecord> history) {
  const std::size_t la = a.acb->lookback(), lt = a.tft->lookback();
  if (history.size() < std::max(la, lt))
    throw ValidationError("forecast needs " + std::to_string(std::max(la, lt)) + " days of history, got " +
                          std::to_string(history.size()));
  ForecastPoint p;
  p.p_bl = to_usd(a.scaler, a.acb->predict_one(normalized_window(a.scaler, history.last(la), false)));
  p.p_tft = to_usd(a.scaler, a.tft->predict_one(normalized_window(a.scaler, history.last(lt), true)));
  const double row[] = {a.weights.w_bl * p.p_bl, a.weights.w_tft * p.p_tft};
  p.p_meta = a.meta.predict_one(row);
  return p;
}

WalkForwardRun walk_forward(const PipelineArtifacts& a, const SplitDataset& data) {
  if (!(a.scaler == data.scaler())) throw LedgerError("walk-forward: frozen scaler differs from the train-only fit");
  auto& ledger = data.ledger();
  if (ledger.count(Split::Test) != 0) throw LedgerError("walk-forward: the test block was read before evaluation");

  WalkForwardRun run;
  run.hash_before = a.hash();
  ledger.open_test_block("walk_forward");

  const auto& b = data.boundaries();
  const auto records = data.series().records();
  const std::size_t lookback = std::max(a.acb->lookback(), a.tft->lookback());
  const std::size_t first = b.begin(Split::Test);
  if (first < lookback) throw ValidationError("walk-forward: not enough history before the test block");
  for (std::size_t d = first; d < b.end(Split::Test); ++d) {
    // Predict from days before d, then reveal day d.
    data.touch("walk_forward", d - lookback, d - 1);
    const auto p = forecast_next(a, records.subspan(0, d));
    data.touch("walk_forward", d, d);
    run.dates.push_back(records[d].date);
    run.truth.push_back(records[d].close);
    run.p_bl.push_back(p.p_bl);
    run.p_tft.push_back(p.p_tft);
    run.p_meta.push_back(p.p_meta);
    run.naive.push_back(records[d - 1].close);
  }
  run.hash_after = a.hash();
  if (run.hash_after != run.hash_before) throw LedgerError("walk-forward: artifacts changed during the run");
  return run;
}

std::string WalkForwardRun::to_csv() const {
  std::ostringstream out;
  out.precision(17);
  out << "date,true,P_bl,P_tft,P_meta,naive\n";
  for (std::size_t i = 0; i < dates.size(); ++i)
    out << format_iso(dates[i]) << ',' << truth[i] << ',' << p_bl[i] << ',' << p_tft[i] << ',' << p_meta[i] << ','
        << naive[i] << '\n';
  return out.str();
}

EvaluationReport evaluate(const WalkForwardRun& run, const PipelineArtifacts& a, StdConvention sigma) {
  EvaluationReport r;
  r.meta = compute_metrics(run.truth, run.p_meta);
  r.acb = compute_metrics(run.truth, run.p_bl);
  r.tft = compute_metrics(run.truth, run.p_tft);
  r.naive = compute_metrics(run.truth, run.naive);
  r.ci = confidence_interval(absolute_percentage_errors(run.truth, run.p_meta), sigma);
  r.performance_gain = performance_gain(r.meta.mape, r.naive.mape);
  r.seed = a.seed;
  r.config_hash = a.config_hash;
  r.artifact_hash = run.hash_before;
  r.boundaries = a.boundaries;
  r.sigma = sigma;
  return r;
}

std::string EvaluationReport::to_json() const {
  json j{{"seed", seed},
         {"config_hash", config_hash},
         {"artifact_hash", artifact_hash},
         {"split", {{"rows", boundaries.n}, {"train_end", boundaries.train_end}, {"validation_end", boundaries.validation_end}}},
         {"stacked", metrics_json(meta)},
         {"acb", metrics_json(acb)},
         {"tft", metrics_json(tft)},
         {"naive_persistence", metrics_json(naive)},
         {"ci_95_approximate",
          {{"center", ci.center}, {"half_width", ci.half_width}, {"sigma", ci.sigma}, {"z", ci.z},
           {"sigma_convention", sigma == StdConvention::Sample ? "sample" : "population"}}},
         {"performance_gain", performance_gain}};
  return j.dump(2) + "\n";
}

std::vector<RegimeWindow> default_regime_windows() {
  using namespace std::chrono;
  return {{"Pre-ETF (-180d)", sys_days{2023y / July / 14}, sys_days{2024y / January / 9}},
          {"ETF->Halving", sys_days{2024y / January / 10}, sys_days{2024y / April / 19}},
          {"Post-halving (+180d)", sys_days{2024y / April / 20}, sys_days{2024y / October / 17}}};
}

std::vector<RegimeStats> regime_analysis(const OhlcvSeries& series, std::span<const RegimeWindow> windows,
                                         ReturnAnchor anchor, StdConvention convention, std::size_t rolling_window) {
  if (series.size() < 2) throw ValidationError("regime analysis needs at least two records");
  const auto recs = series.records();
  // r[i] is the log return into day i; r[0] is undefined.
  std::vector<double> r(recs.size(), 0.0);
  for (std::size_t i = 1; i < recs.size(); ++i) r[i] = std::log(recs[i].close / recs[i - 1].close);

  std::vector<RegimeStats> out;
  for (const auto& w : windows) {
    const auto lo = series.index_of(w.first), hi = series.index_of(w.last);
    if (!lo || !hi || *hi < *lo)
      throw ValidationError("regime window '" + w.label + "' (" + format_iso(w.first) + " to " + format_iso(w.last) +
                            ") is outside the data range");
    RegimeStats s;
    s.window = w;
    s.n = *hi - *lo + 1;
    std::size_t start = anchor == ReturnAnchor::PreviousDay ? *lo : *lo + 1;
    if (start == 0) start = 1;
    const std::vector<double> rets(r.begin() + std::ptrdiff_t(start), r.begin() + std::ptrdiff_t(*hi + 1));
    if (rets.size() >= 2) {
      s.mean_return_pct = 100.0 * mean(rets);
      const double sd = stddev(rets, convention);
      s.std_return_pct = 100.0 * sd;
      s.annualized_vol = sd * std::sqrt(365.0);
    }
    std::vector<double> vol, close;
    for (std::size_t i = *lo; i <= *hi; ++i) {
      vol.push_back(recs[i].volume);
      close.push_back(recs[i].close);
    }
    s.median_volume = median(vol);
    s.mean_volume = mean(vol);
    s.median_close = median(close);
    for (std::size_t i = *lo; i <= *hi; ++i) {
      if (i < rolling_window) continue;  // needs returns into days i - window + 1 .. i
      const std::span<const double> tail(r.data() + i + 1 - rolling_window, rolling_window);
      if (rolling_window < 2) continue;
      s.rolling_dates.push_back(recs[i].date);
      s.rolling_vol.push_back(stddev(tail, convention) * std::sqrt(365.0));
    }
    out.push_back(std::move(s));
  }
  return out;
}

std::string regime_csv(std::span<const RegimeStats> stats) {
  std::ostringstream out;
  out.precision(10);
  out << "regime,first,last,n_days,mean_log_return_pct,std_log_return_pct,annualized_volatility,median_volume,"
         "mean_volume,median_close\n";
  for (const auto& s : stats)
    out << '"' << s.window.label << "\"," << format_iso(s.window.first) << ',' << format_iso(s.window.last) << ','
        << s.n << ',' << s.mean_return_pct << ',' << s.std_return_pct << ',' << s.annualized_vol << ','
        << s.median_volume << ',' << s.mean_volume << ',' << s.median_close << '\n';
  return out.str();
}

std::string rolling_vol_csv(std::span<const RegimeStats> stats) {
  std::ostringstream out;
  out.precision(10);
  out << "regime,date,rolling_vol\n";
  for (const auto& s : stats)
    for (std::size_t i = 0; i < s.rolling_dates.size(); ++i)
      out << '"' << s.window.label << "\"," << format_iso(s.rolling_dates[i]) << ',' << s.rolling_vol[i] << '\n';
  return out.str();
}

Spread spread_of(std::span<const double> v) {
  Spread s;
  if (v.empty()) return s;
  s.mean = mean(v);
  s.stddev = v.size() >= 2 ? stddev(v, StdConvention::Sample) : 0.0;
  s.min = *std::min_element(v.begin(), v.end());
  s.max = *std::max_element(v.begin(), v.end());
  return s;
}

StabilitySummary stability_study(const OhlcvSeries& series, const SplitRatios& ratios, const PipelineConfig& config,
                                 std::span<const std::uint64_t> seeds, std::size_t threads,
                                 const std::function<void(const SeedOutcome&)>& on_done) {
  StabilitySummary summary;
  summary.runs.resize(seeds.size());
  std::atomic<std::size_t> next{0};
  std::mutex done_mutex;
  auto worker = [&] {
    for (std::size_t k; (k = next.fetch_add(1)) < seeds.size();) {
      SeedOutcome o;
      o.seed = seeds[k];
      try {
        const SplitDataset data(series, ratios);
        auto cfg = config;
        cfg.seed = seeds[k];
        cfg.parallel_base_training = false;
        const auto artifacts = run_protocol(data, cfg);
        o.report = evaluate(walk_forward(artifacts, data), artifacts);
        o.weights = artifacts.weights;
        o.ok = true;
      } catch (const std::exception& ex) {
        o.error = ex.what();
      }
      summary.runs[k] = o;
      if (on_done) {
        std::lock_guard lock(done_mutex);
        on_done(o);
      }
    }
  };
  const auto n = std::clamp<std::size_t>(threads, 1, std::max<std::size_t>(1, seeds.size()));
  std::vector<std::thread> pool;
  for (std::size_t t = 1; t < n; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  std::vector<double> mape, mae, rmse, acb, tft;
  for (const auto& o : summary.runs) {
    if (!o.ok) {
      ++summary.failures;
      continue;
    }
    mape.push_back(o.report.meta.mape);
    mae.push_back(o.report.meta.mae);
    rmse.push_back(o.report.meta.rmse);
    acb.push_back(o.report.acb.mape);
    tft.push_back(o.report.tft.mape);
  }
  summary.mape = spread_of(mape);
  summary.mae = spread_of(mae);
  summary.rmse = spread_of(rmse);
  summary.acb_mape = spread_of(acb);
  summary.tft_mape = spread_of(tft);
  return summary;
}

std::string StabilitySummary::to_json() const {
  json runs_j = json::array();
  for (const auto& o : runs) {
    json r{{"seed", o.seed}, {"ok", o.ok}};
    if (o.ok) {
      r["stacked"] = metrics_json(o.report.meta);
      r["acb"] = metrics_json(o.report.acb);
      r["tft"] = metrics_json(o.report.tft);
      r["naive_persistence"] = metrics_json(o.report.naive);
      r["W_bl"] = o.weights.w_bl;
      r["W_tft"] = o.weights.w_tft;
      r["config_hash"] = o.report.config_hash;
    } else {
      r["error"] = o.error;
    }
    runs_j.push_back(r);
  }
  json j{{"runs", runs_j},
         {"failures", failures},
         {"stacked", {{"MAPE", spread_json(mape)}, {"MAE", spread_json(mae)}, {"RMSE", spread_json(rmse)}}},
         {"acb_MAPE", spread_json(acb_mape)},
         {"tft_MAPE", spread_json(tft_mape)}};
  return j.dump(2) + "\n";
}

}  // namespace stackcast
