#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "stackcast/evaluation.hpp"
#include "stackcast/stacking.hpp"

namespace stackcast {

/// Flat key=value configuration. Every key has a default equal to the published setting;
/// `#` starts a comment. Unknown keys are rejected.
class RunConfig {
 public:
  RunConfig();

  static RunConfig parse(std::string_view text, std::string_view source = "<memory>");
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool contains(const std::string& key) const { return values_.contains(key); }

  /// Canonical sorted key=value text. Output-location keys are left out of the hash.
  std::string canonical() const;
  std::string hash() const;

  std::filesystem::path dataset() const { return get("dataset"); }
  std::filesystem::path out_dir() const { return get("out"); }
  std::filesystem::path artifacts_dir() const { return get("artifacts"); }
  std::uint64_t seed() const;
  SplitRatios ratios() const;
  PipelineConfig pipeline() const;
  double outlier_threshold() const;
  Feature outlier_feature() const;
  StdConvention ci_sigma() const;
  ReturnAnchor regime_anchor() const;
  std::vector<std::uint64_t> stability_seeds() const;
  std::size_t stability_threads() const;

  static const std::map<std::string, std::string>& defaults();

 private:
  double number(const std::string& key) const;
  std::size_t count(const std::string& key) const;
  bool flag(const std::string& key) const;

  std::map<std::string, std::string> values_;
};

}  // namespace stackcast
