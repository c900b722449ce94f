#include "stackcast/run_config.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "stackcast/error.hpp"
#include "stackcast/serialize.hpp"

namespace stackcast {

namespace {
std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

bool is_output_key(const std::string& key) { return key == "out" || key == "artifacts"; }
}  // namespace

const std::map<std::string, std::string>& RunConfig::defaults() {
  static const std::map<std::string, std::string> d{
      {"dataset", "data/btc_usd_daily.csv"},
      {"out", "out"},
      {"artifacts", "out/artifacts"},
      {"seed", "42"},
      {"split.train", "0.8"},
      {"split.validation", "0.1"},
      {"split.test", "0.1"},
      {"lookback", "60"},
      {"train.learning_rate", "0.001"},
      {"train.batch_size", "32"},
      {"train.max_epochs", "500"},
      {"train.patience", "10"},
      {"train.parallel", "true"},
      {"acb.hidden1", "64"},
      {"acb.hidden2", "32"},
      {"acb.dense", "64"},
      {"acb.dropout", "0.2"},
      {"acb.attention_prior", "0.5"},
      {"acb.clip_norm", "0"},
      {"tft.d_model", "32"},
      {"tft.dropout", "0.1"},
      {"tft.clip_norm", "0.1"},
      {"meta.n_estimators", "1000"},
      {"meta.learning_rate", "0.05"},
      {"meta.max_depth", "4"},
      {"meta.subsample", "0.7"},
      {"meta.colsample_bytree", "0.7"},
      {"meta.alpha", "1"},
      {"meta.lambda", "5"},
      {"meta.gamma", "1"},
      {"meta.min_child_weight", "10"},
      {"meta.early_stopping_rounds", "50"},
      {"meta.early_stopping", "true"},
      {"meta.verbosity", "1"},
      {"outlier.threshold", "3"},
      {"outlier.feature", "close"},
      {"ci.sigma", "sample"},
      {"regime.anchor", "previous_day"},
      {"stability.seeds", "1,2,3,4,5,6,7,8,9,10"},
      {"stability.threads", "1"},
  };
  return d;
}

RunConfig::RunConfig() : values_(defaults()) {}

RunConfig RunConfig::parse(std::string_view text, std::string_view source) {
  RunConfig c;
  std::istringstream in{std::string(text)};
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (const auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto t = trim(line);
    if (t.empty()) continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ValidationError(std::string(source) + ":" + std::to_string(n) + ": expected key=value");
    try {
      c.set(trim(std::string_view(t).substr(0, eq)), trim(std::string_view(t).substr(eq + 1)));
    } catch (const ValidationError& e) {
      throw ValidationError(std::string(source) + ":" + std::to_string(n) + ": " + e.what());
    }
  }
  c.pipeline();  // validates every typed field up front
  return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read config " + path.string());
  std::ostringstream s;
  s << in.rdbuf();
  return parse(s.str(), path.string());
}

void RunConfig::set(const std::string& key, const std::string& value) {
  if (!defaults().contains(key)) throw ValidationError("unknown config key '" + key + "'");
  values_[key] = value;
}

const std::string& RunConfig::get(const std::string& key) const {
  const auto it = values_.find(key);
  if (it == values_.end()) throw ValidationError("unknown config key '" + key + "'");
  return it->second;
}

std::string RunConfig::canonical() const {
  std::string out;
  for (const auto& [k, v] : values_)
    if (!is_output_key(k)) out += k + "=" + v + "\n";
  return out;
}

std::string RunConfig::hash() const { return hex64(fnv1a(canonical())); }

double RunConfig::number(const std::string& key) const {
  const auto& s = get(key);
  double v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v))
    throw ValidationError("config key '" + key + "': '" + s + "' is not a number");
  return v;
}

std::size_t RunConfig::count(const std::string& key) const {
  const auto& s = get(key);
  std::size_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size())
    throw ValidationError("config key '" + key + "': '" + s + "' is not a non-negative integer");
  return v;
}

bool RunConfig::flag(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ValidationError("config key '" + key + "': expected true or false, got '" + s + "'");
}

std::uint64_t RunConfig::seed() const {
  const auto& s = get("seed");
  std::uint64_t v = 0;
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ValidationError("config key 'seed': '" + s + "' is not a seed");
  return v;
}

SplitRatios RunConfig::ratios() const {
  SplitRatios r{number("split.train"), number("split.validation"), number("split.test")};
  if (r.train <= 0 || r.validation <= 0 || r.test <= 0 || std::abs(r.train + r.validation + r.test - 1.0) > 1e-9)
    throw ValidationError("split ratios must be positive and sum to 1");
  return r;
}

PipelineConfig RunConfig::pipeline() const {
  PipelineConfig p;
  p.lookback = count("lookback");
  p.seed = seed();
  p.config_hash = hash();
  p.acb.lookback = p.lookback;
  p.acb.hidden1 = count("acb.hidden1");
  p.acb.hidden2 = count("acb.hidden2");
  p.acb.dense = count("acb.dense");
  p.acb.dropout = number("acb.dropout");
  p.acb.prior = number("acb.attention_prior");
  p.tft.lookback = p.lookback;
  p.tft.d_model = count("tft.d_model");
  p.tft.dropout = number("tft.dropout");
  for (auto* t : {&p.acb_train, &p.tft_train}) {
    t->adam.learning_rate = number("train.learning_rate");
    t->batch_size = count("train.batch_size");
    t->max_epochs = count("train.max_epochs");
    t->patience = count("train.patience");
  }
  p.acb_train.clip_norm = number("acb.clip_norm");
  p.tft_train.clip_norm = number("tft.clip_norm");
  p.parallel_base_training = flag("train.parallel");
  p.meta.n_estimators = count("meta.n_estimators");
  p.meta.learning_rate = number("meta.learning_rate");
  p.meta.max_depth = count("meta.max_depth");
  p.meta.subsample = number("meta.subsample");
  p.meta.colsample_bytree = number("meta.colsample_bytree");
  p.meta.alpha = number("meta.alpha");
  p.meta.lambda = number("meta.lambda");
  p.meta.gamma = number("meta.gamma");
  p.meta.min_child_weight = number("meta.min_child_weight");
  p.meta.early_stopping_rounds = count("meta.early_stopping_rounds");
  p.meta.verbose = count("meta.verbosity") > 0;
  p.meta_early_stopping = flag("meta.early_stopping");
  ratios();
  outlier_threshold();
  outlier_feature();
  ci_sigma();
  regime_anchor();
  stability_seeds();
  stability_threads();
  p.validate();
  return p;
}

double RunConfig::outlier_threshold() const {
  const double t = number("outlier.threshold");
  if (!(t > 0)) throw ValidationError("outlier.threshold must be positive");
  return t;
}

Feature RunConfig::outlier_feature() const {
  const auto f = feature_from_name(get("outlier.feature"));
  if (!f) throw ValidationError("outlier.feature: unknown feature '" + get("outlier.feature") + "'");
  return *f;
}

StdConvention RunConfig::ci_sigma() const {
  const auto& s = get("ci.sigma");
  if (s == "sample") return StdConvention::Sample;
  if (s == "population") return StdConvention::Population;
  throw ValidationError("ci.sigma must be 'sample' or 'population'");
}

ReturnAnchor RunConfig::regime_anchor() const {
  const auto& s = get("regime.anchor");
  if (s == "previous_day") return ReturnAnchor::PreviousDay;
  if (s == "within_window") return ReturnAnchor::WithinWindow;
  throw ValidationError("regime.anchor must be 'previous_day' or 'within_window'");
}

std::vector<std::uint64_t> RunConfig::stability_seeds() const {
  std::vector<std::uint64_t> out;
  std::istringstream in(get("stability.seeds"));
  std::string tok;
  while (std::getline(in, tok, ',')) {
    tok = trim(tok);
    std::uint64_t v = 0;
    const auto [p, ec] = std::from_chars(tok.data(), tok.data() + tok.size(), v);
    if (tok.empty() || ec != std::errc() || p != tok.data() + tok.size())
      throw ValidationError("stability.seeds: '" + tok + "' is not a seed");
    out.push_back(v);
  }
  if (out.empty()) throw ValidationError("stability.seeds is empty");
  return out;
}

std::size_t RunConfig::stability_threads() const {
  const auto n = count("stability.threads");
  if (n == 0) throw ValidationError("stability.threads must be >= 1");
  return n;
}

}  // namespace stackcast
