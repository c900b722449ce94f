#include "stackcast/stacking.hpp"

#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"
#include "stackcast/error.hpp"
#include "stackcast/metrics.hpp"
#include "stackcast/serialize.hpp"

namespace stackcast {

using nlohmann::json;

StackingWeights compute_weights(double error_bl, double error_tft) {
  if (!(error_bl > 0) || !(error_tft > 0) || !std::isfinite(error_bl) || !std::isfinite(error_tft))
    throw ValidationError("stacking weights need positive finite errors");
  const double inv_bl = 1.0 / error_bl, inv_tft = 1.0 / error_tft;
  const double total = inv_bl + inv_tft;
  return {inv_bl / total, inv_tft / total, error_bl, error_tft};
}

Eigen::MatrixXd build_meta_features(std::span<const double> preds_bl, std::span<const double> preds_tft,
                                    const StackingWeights& w) {
  if (preds_bl.size() != preds_tft.size())
    throw ValidationError("meta features: prediction lengths differ (" + std::to_string(preds_bl.size()) + " vs " +
                          std::to_string(preds_tft.size()) + ")");
  Eigen::MatrixXd out(Eigen::Index(preds_bl.size()), 2);
  for (std::size_t i = 0; i < preds_bl.size(); ++i) {
    out(Eigen::Index(i), 0) = w.w_bl * preds_bl[i];
    out(Eigen::Index(i), 1) = w.w_tft * preds_tft[i];
  }
  return out;
}

std::string StackingWeights::to_json() const {
  // Hex copies make the file round-trip bit-exactly; the decimals are for readers.
  json j{{"W_bl", w_bl},
         {"W_tft", w_tft},
         {"Error_bl", error_bl},
         {"Error_tft", error_tft},
         {"exact", {{"W_bl", hex_double(w_bl)}, {"W_tft", hex_double(w_tft)},
                    {"Error_bl", hex_double(error_bl)}, {"Error_tft", hex_double(error_tft)}}}};
  return j.dump(2) + "\n";
}

StackingWeights StackingWeights::from_json(std::string_view text) {
  try {
    const auto j = json::parse(text);
    const auto& e = j.at("exact");
    return {parse_hex_double(e.at("W_bl").get<std::string>()), parse_hex_double(e.at("W_tft").get<std::string>()),
            parse_hex_double(e.at("Error_bl").get<std::string>()),
            parse_hex_double(e.at("Error_tft").get<std::string>())};
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("weights file: ") + ex.what());
  }
}

void PipelineConfig::validate() const {
  acb.validate();
  tft.validate();
  acb_train.validate();
  tft_train.validate();
  meta.validate();
  if (acb.lookback != lookback || tft.lookback != lookback)
    throw ValidationError("both base learners must use the pipeline lookback of " + std::to_string(lookback));
  if (acb.inputs != kNumOhlcv) throw ValidationError("acb reads the five OHLCV features");
  if (tft.variables != kNumOhlcv + kNumCalendar) throw ValidationError("tft reads OHLCV plus 19 calendar indicators");
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stage) { return CounterRng(seed, stage).next_u64(); }

double to_usd(const MinMaxScaler& scaler, double normalized_close) {
  return scaler.inverse(Feature::Close, normalized_close);
}

std::string scaler_to_text(const MinMaxScaler& s) {
  std::ostringstream out;
  out << "stackcast-scaler 1\n";
  for (std::size_t f = 0; f < kNumOhlcv; ++f)
    out << kFeatureNames[f] << ' ' << hex_double(s.min()[f]) << ' ' << hex_double(s.max()[f]) << '\n';
  return out.str();
}

MinMaxScaler scaler_from_text(std::string_view text) {
  std::istringstream in{std::string(text)};
  std::string tok;
  in >> tok;
  if (tok != "stackcast-scaler") throw ValidationError("scaler file: bad header");
  in >> tok;
  std::array<double, kNumOhlcv> lo{}, hi{};
  for (std::size_t f = 0; f < kNumOhlcv; ++f) {
    std::string name, a, b;
    if (!(in >> name >> a >> b) || name != kFeatureNames[f]) throw ValidationError("scaler file: bad row " + std::to_string(f));
    lo[f] = parse_hex_double(a);
    hi[f] = parse_hex_double(b);
  }
  return MinMaxScaler::from_bounds(lo, hi);
}

namespace {

std::string model_text(AcbModel& m) {
  std::ostringstream out;
  m.save(out);
  return out.str();
}
std::string model_text(TftModel& m) {
  std::ostringstream out;
  m.save(out);
  return out.str();
}
std::string meta_text(const BoostedEnsemble& m) {
  std::ostringstream out;
  m.save(out);
  return out.str();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::ostringstream s;
  s << in.rdbuf();
  return s.str();
}

void write_file(const std::filesystem::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
  if (!out) throw IoError("cannot write " + p.string());
}

std::string gbt_log_csv(const GbtFitLog& log) {
  std::ostringstream out;
  out.precision(17);
  out << "round,train_mae,validation_mae\n";
  for (std::size_t r = 0; r < log.train_mae.size(); ++r) {
    out << r + 1 << ',' << log.train_mae[r] << ',';
    if (r < log.validation_mae.size()) out << log.validation_mae[r];
    out << '\n';
  }
  return out.str();
}

std::string hash_of(const std::string& acb, const std::string& tft, const std::string& weights,
                    const std::string& meta, const std::string& scaler) {
  std::uint64_t h = kFnvOffset;
  for (const auto* part : {&acb, &tft, &weights, &meta, &scaler}) {
    h = fnv1a(*part, h);
    h = fnv1a(std::string_view("\x1f", 1), h);
  }
  return hex64(h);
}

}  // namespace

std::string PipelineArtifacts::hash() const {
  if (!acb || !tft) throw ValidationError("artifacts: models missing");
  return hash_of(model_text(*acb), model_text(*tft), weights.to_json(), meta_text(meta), scaler_to_text(scaler));
}

void PipelineArtifacts::save(const std::filesystem::path& dir) const {
  if (!acb || !tft) throw ValidationError("artifacts: models missing");
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  const auto acb_text = model_text(*acb), tft_text = model_text(*tft), weights_text = weights.to_json(),
             meta_txt = meta_text(meta), scaler_txt = scaler_to_text(scaler);
  write_file(dir / "acb.model", acb_text);
  write_file(dir / "tft.model", tft_text);
  write_file(dir / "weights.json", weights_text);
  write_file(dir / "meta.gbt", meta_txt);
  write_file(dir / "scaler.txt", scaler_txt);
  write_file(dir / "ledger.csv", ledger_csv);
  write_file(dir / "acb_history.csv", acb_history.to_csv());
  write_file(dir / "tft_history.csv", tft_history.to_csv());
  write_file(dir / "meta_log.csv", gbt_log_csv(meta_log));
  write_file(dir / "config_hash.txt", config_hash + "\n");
  json manifest{{"format", "stackcast-artifacts 1"},
                {"artifact_hash", hash_of(acb_text, tft_text, weights_text, meta_txt, scaler_txt)},
                {"config_hash", config_hash},
                {"seed", seed},
                {"rows", boundaries.n},
                {"train_end", boundaries.train_end},
                {"validation_end", boundaries.validation_end},
                {"acb_best_epoch", acb_history.best_epoch},
                {"tft_best_epoch", tft_history.best_epoch},
                {"meta_trees", meta.trees().size()}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

PipelineArtifacts PipelineArtifacts::load(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) throw IoError("artifacts directory not found: " + dir.string());
  PipelineArtifacts a;
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& ex) {
    throw ValidationError(std::string("manifest: ") + ex.what());
  }
  const auto acb_text = read_file(dir / "acb.model"), tft_text = read_file(dir / "tft.model"),
             weights_text = read_file(dir / "weights.json"), meta_txt = read_file(dir / "meta.gbt"),
             scaler_txt = read_file(dir / "scaler.txt");
  const auto recorded = manifest.value("artifact_hash", std::string());
  const auto actual = hash_of(acb_text, tft_text, weights_text, meta_txt, scaler_txt);
  if (recorded != actual)
    throw LedgerError("artifact hash mismatch in " + dir.string() + ": manifest " + recorded + ", files " + actual);

  std::istringstream acb_in(acb_text), tft_in(tft_text), meta_in(meta_txt);
  a.acb = std::make_shared<AcbModel>(AcbModel::load(acb_in));
  a.tft = std::make_shared<TftModel>(TftModel::load(tft_in));
  a.weights = StackingWeights::from_json(weights_text);
  a.meta = BoostedEnsemble::load(meta_in);
  a.scaler = scaler_from_text(scaler_txt);
  a.seed = manifest.value("seed", std::uint64_t{0});
  a.config_hash = manifest.value("config_hash", std::string());
  a.boundaries.n = manifest.value("rows", std::size_t{0});
  a.boundaries.train_end = manifest.value("train_end", std::size_t{0});
  a.boundaries.validation_end = manifest.value("validation_end", std::size_t{0});
  if (std::filesystem::exists(dir / "ledger.csv")) a.ledger_csv = read_file(dir / "ledger.csv");
  return a;
}

MetaSet validation_meta_set(const PipelineArtifacts& a, const SplitDataset& data, std::string_view stage) {
  if (!(a.scaler == data.scaler())) throw LedgerError("scaler in artifacts differs from the train-only fit");
  const std::string s(stage);
  const auto acb_set = forecast_samples(data, Split::Validation, a.acb->lookback(), FeatureSet::Ohlcv, s + ".acb");
  const auto tft_set = forecast_samples(data, Split::Validation, a.tft->lookback(), FeatureSet::OhlcvCalendar, s + ".tft");
  MetaSet m;
  m.preds_bl = a.acb->predict(acb_set);
  m.preds_tft = a.tft->predict(tft_set);
  for (auto& p : m.preds_bl) p = to_usd(a.scaler, p);
  for (auto& p : m.preds_tft) p = to_usd(a.scaler, p);
  for (auto origin : acb_set.origins) m.targets.push_back(data.series()[origin].close);
  m.features = build_meta_features(m.preds_bl, m.preds_tft, a.weights);
  return m;
}

PipelineArtifacts run_protocol(const SplitDataset& data, const PipelineConfig& config) {
  config.validate();
  auto& ledger = data.ledger();
  ledger.seal_test_block();

  PipelineArtifacts a;
  a.seed = config.seed;
  a.config_hash = config.config_hash;
  a.scaler = data.scaler();
  a.boundaries = data.boundaries();
  a.acb = std::make_shared<AcbModel>(config.acb, derive_seed(config.seed, 1));
  a.tft = std::make_shared<TftModel>(config.tft, derive_seed(config.seed, 2));

  // (i) base learners on the training split; validation drives early stopping only.
  const auto acb_train = training_samples(data, config.lookback, FeatureSet::Ohlcv, "acb.train");
  const auto acb_val = forecast_samples(data, Split::Validation, config.lookback, FeatureSet::Ohlcv, "acb.early_stopping");
  const auto tft_train = training_samples(data, config.lookback, FeatureSet::OhlcvCalendar, "tft.train");
  const auto tft_val =
      forecast_samples(data, Split::Validation, config.lookback, FeatureSet::OhlcvCalendar, "tft.early_stopping");

  auto acb_cfg = config.acb_train;
  acb_cfg.seed = derive_seed(config.seed, 3);
  auto tft_cfg = config.tft_train;
  tft_cfg.seed = derive_seed(config.seed, 4);

  std::exception_ptr tft_error;
  auto train_tft = [&] {
    try {
      a.tft_history = train(*a.tft, tft_train, tft_val, tft_cfg);
    } catch (...) {
      tft_error = std::current_exception();
    }
  };
  if (config.parallel_base_training) {
    std::thread worker(train_tft);
    try {
      a.acb_history = train(*a.acb, acb_train, acb_val, acb_cfg);
    } catch (...) {
      worker.join();
      throw;
    }
    worker.join();
  } else {
    a.acb_history = train(*a.acb, acb_train, acb_val, acb_cfg);
    train_tft();
  }
  if (tft_error) std::rethrow_exception(tft_error);

  // (ii)-(iv) validation predictions, inverse-MAPE weights, weighted meta features.
  MetaSet m = validation_meta_set(a, data, "stacking.validation");
  a.weights = compute_weights(compute_metrics(m.targets, m.preds_bl).mape, compute_metrics(m.targets, m.preds_tft).mape);
  m.features = build_meta_features(m.preds_bl, m.preds_tft, a.weights);

  // (v) meta-learner on the validation block.
  auto gbt_cfg = config.meta;
  gbt_cfg.seed = derive_seed(config.seed, 5);
  a.meta = BoostedEnsemble::fit(m.features, m.targets, gbt_cfg, config.meta_early_stopping ? &m.features : nullptr,
                                m.targets, &a.meta_log);

  // (vi)-(vii) frozen; the ledger must show no test reads.
  if (ledger.count(Split::Test) != 0) throw LedgerError("test split was read before evaluation");
  a.ledger_csv = ledger.to_csv();
  return a;
}

}  // namespace stackcast
