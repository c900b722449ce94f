#pragma once

#include <cstddef>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

namespace stackcast {

enum class Split { Train, Validation, Test };

std::string_view to_string(Split split) noexcept;

/// One recorded read of a contiguous row range inside one split.
struct AccessRecord {
  std::string stage;
  Split split;
  std::size_t first_row;  // absolute row index in the series
  std::size_t last_row;   // inclusive
};

/// Append-only record of every split read made by the pipeline, tagged with the
/// pipeline stage that made it. Thread-safe: both base learners may read concurrently.
class AccessLedger {
 public:
  void record(std::string_view stage, Split split, std::size_t first_row, std::size_t last_row);

  std::vector<AccessRecord> records() const;
  std::size_t count(Split split) const;
  std::size_t count(Split split, std::string_view stage) const;

  /// Once sealed, any Test read raises LedgerError until `open_test_block` is called.
  void seal_test_block();
  void open_test_block(std::string_view stage);
  bool test_block_sealed() const;
  /// Stage that last unsealed the test block, empty if never.
  std::string opened_by() const;

  /// CSV: stage,split,first_row,last_row
  std::string to_csv() const;

 private:
  mutable std::mutex mutex_;
  std::vector<AccessRecord> records_;
  bool test_sealed_ = false;
  std::string opened_by_;
};

}  // namespace stackcast
