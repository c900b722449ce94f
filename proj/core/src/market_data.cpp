#include "stackcast/market_data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <sstream>

#include "stackcast/error.hpp"

namespace stackcast {

namespace {

std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '"'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '"'))
    s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split_csv_line(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '"') quoted = !quoted;
    if (line[i] == ',' && !quoted) {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  out.push_back(trim(line.substr(start)));
  return out;
}

std::optional<int> parse_int(std::string_view s) {
  int v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

std::optional<double> parse_number(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::string buf;
  buf.reserve(s.size());
  for (char c : s)
    if (c != ',' && c != '_') buf.push_back(c);  // tolerate thousands separators inside quotes
  char* end = nullptr;
  const double v = std::strtod(buf.c_str(), &end);
  if (end != buf.c_str() + buf.size()) return std::nullopt;
  return v;
}

// Canonical column for each accepted header spelling.
const std::map<std::string, std::string, std::less<>>& header_aliases() {
  static const std::map<std::string, std::string, std::less<>> aliases{
      {"date", "date"},     {"timestamp", "date"}, {"day", "date"},
      {"open", "open"},     {"open price", "open"},
      {"high", "high"},     {"high price", "high"},
      {"low", "low"},       {"low price", "low"},
      {"close", "close"},   {"close price", "close"}, {"closing price", "close"},
      {"volume", "volume"}, {"vol", "volume"},        {"vol.", "volume"},
  };
  return aliases;
}

double mean_of(std::span<const double> xs) {
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

}  // namespace

std::optional<Date> parse_date(std::string_view text) {
  text = trim(text);
  // Drop a time-of-day suffix ("2014-10-01 00:00:00"); no time-zone conversion.
  if (auto sp = text.find_first_of(" T"); sp != std::string_view::npos && sp >= 8) text = text.substr(0, sp);
  int y = 0, m = 0, d = 0;
  if (text.size() == 10 && text[4] == '-' && text[7] == '-') {
    auto yy = parse_int(text.substr(0, 4)), mm = parse_int(text.substr(5, 2)), dd = parse_int(text.substr(8, 2));
    if (!yy || !mm || !dd) return std::nullopt;
    y = *yy, m = *mm, d = *dd;
  } else {
    auto p1 = text.find('/');
    auto p2 = p1 == std::string_view::npos ? p1 : text.find('/', p1 + 1);
    if (p2 == std::string_view::npos) return std::nullopt;
    auto dd = parse_int(text.substr(0, p1)), mm = parse_int(text.substr(p1 + 1, p2 - p1 - 1)),
         yy = parse_int(text.substr(p2 + 1));
    if (!yy || !mm || !dd || text.size() - p2 - 1 != 4) return std::nullopt;
    y = *yy, m = *mm, d = *dd;
  }
  const std::chrono::year_month_day ymd{std::chrono::year{y}, std::chrono::month{static_cast<unsigned>(m)},
                                        std::chrono::day{static_cast<unsigned>(d)}};
  if (!ymd.ok()) return std::nullopt;
  return Date{ymd};
}

std::string format_iso(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02u", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()));
  return buf;
}

std::string format_dmy(Date date) {
  const std::chrono::year_month_day ymd{date};
  char buf[16];
  std::snprintf(buf, sizeof buf, "%02u/%02u/%04d", static_cast<unsigned>(ymd.day()),
                static_cast<unsigned>(ymd.month()), static_cast<int>(ymd.year()));
  return buf;
}

std::optional<Feature> feature_from_name(std::string_view name) {
  const auto l = lower(name);
  for (std::size_t i = 0; i < kNumOhlcv; ++i)
    if (kFeatureNames[i] == l) return static_cast<Feature>(i);
  return std::nullopt;
}

double OhlcvRecord::get(Feature f) const noexcept {
  switch (f) {
    case Feature::Open: return open;
    case Feature::High: return high;
    case Feature::Low: return low;
    case Feature::Close: return close;
    case Feature::Volume: return volume;
  }
  return close;
}

OhlcvSeries::OhlcvSeries(std::vector<OhlcvRecord> records) : records_(std::move(records)) {
  for (std::size_t i = 0; i < records_.size(); ++i) {
    const auto& r = records_[i];
    const std::string where = "record " + std::to_string(i) + " (" + format_iso(r.date) + ")";
    for (double v : r.values())
      if (!std::isfinite(v)) throw ValidationError(where + ": non-finite value");
    if (r.low > std::min(r.open, r.close)) throw ValidationError(where + ": low above min(open, close)");
    if (r.high < std::max(r.open, r.close)) throw ValidationError(where + ": high below max(open, close)");
    if (r.volume < 0) throw ValidationError(where + ": negative volume");
    if (i > 0) {
      if (r.date == records_[i - 1].date) throw ValidationError(where + ": duplicate date");
      if (r.date < records_[i - 1].date) throw ValidationError(where + ": date not increasing");
    }
  }
}

std::vector<double> OhlcvSeries::column(Feature f) const {
  std::vector<double> out(records_.size());
  std::transform(records_.begin(), records_.end(), out.begin(), [f](const auto& r) { return r.get(f); });
  return out;
}

std::optional<std::size_t> OhlcvSeries::index_of(Date date) const {
  auto it = std::lower_bound(records_.begin(), records_.end(), date,
                             [](const OhlcvRecord& r, Date d) { return r.date < d; });
  if (it == records_.end() || it->date != date) return std::nullopt;
  return static_cast<std::size_t>(it - records_.begin());
}

OhlcvSeries OhlcvSeries::prefix(std::size_t n) const {
  n = std::min(n, records_.size());
  return OhlcvSeries(std::vector<OhlcvRecord>(records_.begin(), records_.begin() + static_cast<std::ptrdiff_t>(n)));
}

OhlcvSeries parse_ohlcv_csv(std::string_view text, std::string_view source) {
  std::vector<std::string_view> lines;
  for (std::size_t pos = 0; pos < text.size();) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    auto line = text.substr(pos, nl - pos);
    if (!trim(line).empty()) lines.push_back(line);
    pos = nl + 1;
  }
  const std::string src(source);
  if (lines.empty()) throw ValidationError(src + ": no records");

  const auto header = split_csv_line(lines.front());
  std::map<std::string, std::size_t> col;
  for (std::size_t i = 0; i < header.size(); ++i) {
    auto h = lower(header[i]);
    if (i == 0 && h.size() >= 3 && static_cast<unsigned char>(h[0]) == 0xEF) h = h.substr(3);  // BOM
    if (auto it = header_aliases().find(h); it != header_aliases().end()) col.try_emplace(it->second, i);
  }
  for (const char* need : {"date", "open", "high", "low", "close", "volume"})
    if (!col.count(need)) throw ValidationError(src + ": missing column '" + need + "'");
  if (lines.size() == 1) throw ValidationError(src + ": no records");

  std::vector<OhlcvRecord> records;
  records.reserve(lines.size() - 1);
  for (std::size_t li = 1; li < lines.size(); ++li) {
    const auto cells = split_csv_line(lines[li]);
    const std::string where = src + ": row " + std::to_string(li + 1);
    auto cell = [&](const char* name) -> std::string_view {
      const auto idx = col.at(name);
      if (idx >= cells.size() || cells[idx].empty()) throw ValidationError(where + ": missing value for " + name);
      return cells[idx];
    };
    OhlcvRecord r;
    auto date = parse_date(cell("date"));
    if (!date) throw ValidationError(where + ": unparseable date '" + std::string(cell("date")) + "'");
    r.date = *date;
    auto num = [&](const char* name) {
      auto v = parse_number(cell(name));
      if (!v) throw ValidationError(where + ": unparseable " + name + " '" + std::string(cell(name)) + "'");
      return *v;
    };
    r.open = num("open");
    r.high = num("high");
    r.low = num("low");
    r.close = num("close");
    r.volume = num("volume");
    if (!records.empty()) {
      if (r.date == records.back().date) throw ValidationError(where + ": duplicate date " + format_iso(r.date));
      if (r.date < records.back().date) throw ValidationError(where + ": non-increasing date " + format_iso(r.date));
    }
    records.push_back(r);
  }
  try {
    return OhlcvSeries(std::move(records));
  } catch (const ValidationError& e) {
    throw ValidationError(src + ": " + e.what());
  }
}

OhlcvSeries load_ohlcv(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_ohlcv_csv(ss.str(), path.string());
}

Split SplitBoundaries::split_of(std::size_t row) const noexcept {
  if (row < train_end) return Split::Train;
  if (row < validation_end) return Split::Validation;
  return Split::Test;
}

std::size_t SplitBoundaries::begin(Split s) const noexcept {
  switch (s) {
    case Split::Train: return 0;
    case Split::Validation: return train_end;
    case Split::Test: return validation_end;
  }
  return 0;
}

std::size_t SplitBoundaries::end(Split s) const noexcept {
  switch (s) {
    case Split::Train: return train_end;
    case Split::Validation: return validation_end;
    case Split::Test: return n;
  }
  return n;
}

SplitBoundaries chronological_split(std::size_t n, const SplitRatios& ratios) {
  if (ratios.train <= 0 || ratios.validation <= 0 || ratios.test <= 0)
    throw ValidationError("split ratios must be positive");
  if (std::abs(ratios.train + ratios.validation + ratios.test - 1.0) > 1e-9)
    throw ValidationError("split ratios must sum to 1");
  // Small epsilon guards products like 0.8 * 10 = 7.999999...
  const auto floor_of = [n](double r) {
    return static_cast<std::size_t>(std::floor(r * static_cast<double>(n) + 1e-9));
  };
  SplitBoundaries b;
  b.n = n;
  b.train_end = floor_of(ratios.train);
  b.validation_end = b.train_end + floor_of(ratios.validation);
  if (b.train_size() < 1 || b.validation_size() < 1 || b.test_size() < 1)
    throw ValidationError("series of " + std::to_string(n) + " rows is too small to split");
  return b;
}

MinMaxScaler MinMaxScaler::fit(std::span<const OhlcvRecord> train_rows) {
  if (train_rows.size() < 2) throw ValidationError("scaler needs at least 2 training rows");
  MinMaxScaler s;
  s.min_.fill(std::numeric_limits<double>::infinity());
  s.max_.fill(-std::numeric_limits<double>::infinity());
  for (const auto& r : train_rows) {
    const auto v = r.values();
    for (std::size_t f = 0; f < kNumOhlcv; ++f) {
      s.min_[f] = std::min(s.min_[f], v[f]);
      s.max_[f] = std::max(s.max_[f], v[f]);
    }
  }
  for (std::size_t f = 0; f < kNumOhlcv; ++f)
    if (!(s.max_[f] > s.min_[f]))
      throw ValidationError("scaler: feature '" + std::string(kFeatureNames[f]) + "' is constant on the training split");
  return s;
}

MinMaxScaler MinMaxScaler::from_bounds(std::array<double, kNumOhlcv> min, std::array<double, kNumOhlcv> max) {
  for (std::size_t f = 0; f < kNumOhlcv; ++f)
    if (!(max[f] > min[f]))
      throw ValidationError("scaler: feature '" + std::string(kFeatureNames[f]) + "' has max <= min");
  MinMaxScaler s;
  s.min_ = min;
  s.max_ = max;
  return s;
}

double MinMaxScaler::transform(Feature f, double value) const noexcept {
  const auto i = static_cast<std::size_t>(f);
  return (value - min_[i]) / (max_[i] - min_[i]);
}

double MinMaxScaler::inverse(Feature f, double scaled) const noexcept {
  const auto i = static_cast<std::size_t>(f);
  return min_[i] + scaled * (max_[i] - min_[i]);
}

std::array<double, kNumOhlcv> MinMaxScaler::transform(const OhlcvRecord& r) const noexcept {
  std::array<double, kNumOhlcv> out{};
  const auto v = r.values();
  for (std::size_t f = 0; f < kNumOhlcv; ++f) out[f] = (v[f] - min_[f]) / (max_[f] - min_[f]);
  return out;
}

std::size_t weekday_index(Date date) {
  // iso_encoding: Monday = 1 ... Sunday = 7
  return std::chrono::weekday{date}.iso_encoding() - 1;
}

std::size_t month_index(Date date) {
  return static_cast<unsigned>(std::chrono::year_month_day{date}.month()) - 1;
}

std::array<double, kNumCalendar> calendar_covariates(Date date) {
  std::array<double, kNumCalendar> out{};
  out[weekday_index(date)] = 1.0;
  out[7 + month_index(date)] = 1.0;
  return out;
}

Eigen::MatrixXd calendar_covariates(std::span<const OhlcvRecord> records) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(Eigen::Index(records.size()), Eigen::Index(kNumCalendar));
  for (std::size_t i = 0; i < records.size(); ++i) {
    const auto c = calendar_covariates(records[i].date);
    for (std::size_t j = 0; j < kNumCalendar; ++j) out(Eigen::Index(i), Eigen::Index(j)) = c[j];
  }
  return out;
}

OutlierReport zscore_outliers(const OhlcvSeries& series, std::size_t stats_rows, double threshold,
                              Feature feature, StdConvention convention) {
  if (stats_rows < 2 || stats_rows > series.size())
    throw ValidationError("outlier statistics need 2..N rows");
  const auto values = series.column(feature);
  const std::span<const double> train(values.data(), stats_rows);
  OutlierReport rep;
  rep.feature = feature;
  rep.threshold = threshold;
  rep.mean = mean_of(train);
  double ss = 0;
  for (double v : train) ss += (v - rep.mean) * (v - rep.mean);
  const double dof = convention == StdConvention::Sample ? double(stats_rows - 1) : double(stats_rows);
  rep.stddev = std::sqrt(ss / dof);
  if (!(rep.stddev > 0)) throw ValidationError("outliers: zero standard deviation on the training split");
  rep.z.resize(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) {
    rep.z[i] = (values[i] - rep.mean) / rep.stddev;
    if (std::abs(rep.z[i]) > threshold) rep.flagged.push_back(i);
  }
  return rep;
}

SplitDataset::SplitDataset(OhlcvSeries series, const SplitRatios& ratios, std::shared_ptr<AccessLedger> ledger)
    : series_(std::make_shared<const OhlcvSeries>(std::move(series))),
      bounds_(chronological_split(series_->size(), ratios)),
      scaler_(MinMaxScaler::fit(series_->records().subspan(0, bounds_.train_end))),
      ledger_(std::move(ledger)) {
  const auto n = Eigen::Index(series_->size());
  Eigen::MatrixXd ohlcv(n, Eigen::Index(kNumOhlcv));
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto v = scaler_.transform((*series_)[std::size_t(i)]);
    for (std::size_t f = 0; f < kNumOhlcv; ++f) ohlcv(i, Eigen::Index(f)) = v[f];
  }
  Eigen::MatrixXd full(n, Eigen::Index(kNumOhlcv + kNumCalendar));
  full.leftCols(Eigen::Index(kNumOhlcv)) = ohlcv;
  full.rightCols(Eigen::Index(kNumCalendar)) = calendar_covariates(series_->records());
  ohlcv_ = std::make_shared<const Eigen::MatrixXd>(std::move(ohlcv));
  full_ = std::make_shared<const Eigen::MatrixXd>(std::move(full));
}

void SplitDataset::touch(std::string_view stage, std::size_t first, std::size_t last) const {
  for (Split s : {Split::Train, Split::Validation, Split::Test}) {
    const auto lo = std::max(first, bounds_.begin(s));
    const auto hi = std::min(last + 1, bounds_.end(s));
    if (lo < hi) ledger_->record(stage, s, lo, hi - 1);
  }
}

std::pair<Date, Date> SplitDataset::date_range(Split s) const {
  return {(*series_)[bounds_.begin(s)].date, (*series_)[bounds_.end(s) - 1].date};
}

SampleSet make_windows(std::shared_ptr<const Eigen::MatrixXd> rows, std::size_t lookback, Eigen::Index target_col) {
  if (lookback == 0) throw ValidationError("lookback must be positive");
  const auto n = static_cast<std::size_t>(rows->rows());
  if (n <= lookback)
    throw ValidationError("need more than " + std::to_string(lookback) + " rows for windowing, got " + std::to_string(n));
  SampleSet s;
  s.lookback = lookback;
  for (std::size_t origin = lookback; origin < n; ++origin) {
    s.origins.push_back(origin);
    s.targets.push_back((*rows)(Eigen::Index(origin), target_col));
  }
  s.rows = std::move(rows);
  return s;
}

namespace {
std::shared_ptr<const Eigen::MatrixXd> feature_rows(const SplitDataset& data, FeatureSet fs) {
  return fs == FeatureSet::Ohlcv ? data.normalized_ptr() : data.with_calendar_ptr();
}
}  // namespace

SampleSet training_samples(const SplitDataset& data, std::size_t lookback, FeatureSet fs, std::string_view stage) {
  const auto& b = data.boundaries();
  if (b.train_end <= lookback)
    throw ValidationError("training split has " + std::to_string(b.train_end) + " rows; lookback is " + std::to_string(lookback));
  SampleSet s;
  s.rows = feature_rows(data, fs);
  s.lookback = lookback;
  for (std::size_t origin = lookback; origin < b.train_end; ++origin) {
    s.origins.push_back(origin);
    s.targets.push_back((*s.rows)(Eigen::Index(origin), Eigen::Index(Feature::Close)));
  }
  data.touch(stage, 0, b.train_end - 1);
  return s;
}

SampleSet forecast_samples(const SplitDataset& data, Split split, std::size_t lookback, FeatureSet fs,
                           std::string_view stage) {
  const auto& b = data.boundaries();
  const auto begin = b.begin(split), end = b.end(split);
  if (begin < lookback) throw ValidationError("not enough history before the split for the lookback window");
  if (split == Split::Test && data.ledger().test_block_sealed())
    throw LedgerError("stage '" + std::string(stage) + "' tried to read the sealed test split");
  SampleSet s;
  s.rows = feature_rows(data, fs);
  s.lookback = lookback;
  for (std::size_t origin = begin; origin < end; ++origin) {
    s.origins.push_back(origin);
    s.targets.push_back((*s.rows)(Eigen::Index(origin), Eigen::Index(Feature::Close)));
  }
  data.touch(stage, begin - lookback, end - 1);
  return s;
}

std::string normalized_csv(const SplitDataset& data) {
  std::ostringstream out;
  out.precision(10);
  out << "Date,Split,Open minmax,High minmax,Low minmax,Volume minmax,Close minmax\n";
  const auto& m = data.normalized();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    out << format_iso(data.series()[std::size_t(i)].date) << ','
        << to_string(data.boundaries().split_of(std::size_t(i))) << ',' << m(i, 0) << ',' << m(i, 1) << ','
        << m(i, 2) << ',' << m(i, 4) << ',' << m(i, 3) << '\n';
  }
  return out.str();
}

std::string outlier_csv(const OhlcvSeries& series, const OutlierReport& report) {
  std::ostringstream out;
  out.precision(10);
  out << "date," << kFeatureNames[static_cast<std::size_t>(report.feature)] << ",z\n";
  for (auto i : report.flagged)
    out << format_iso(series[i].date) << ',' << series[i].get(report.feature) << ',' << report.z[i] << '\n';
  return out.str();
}

}  // namespace stackcast
