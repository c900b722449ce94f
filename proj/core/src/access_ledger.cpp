#include "stackcast/access_ledger.hpp"

#include <algorithm>
#include <sstream>

#include "stackcast/error.hpp"

namespace stackcast {

std::string_view to_string(Split split) noexcept {
  switch (split) {
    case Split::Train: return "train";
    case Split::Validation: return "validation";
    case Split::Test: return "test";
  }
  return "?";
}

void AccessLedger::record(std::string_view stage, Split split, std::size_t first_row, std::size_t last_row) {
  std::lock_guard lock(mutex_);
  if (split == Split::Test && test_sealed_)
    throw LedgerError("stage '" + std::string(stage) + "' read test rows while the test block is sealed");
  records_.push_back({std::string(stage), split, first_row, last_row});
}

std::vector<AccessRecord> AccessLedger::records() const {
  std::lock_guard lock(mutex_);
  return records_;
}

std::size_t AccessLedger::count(Split split) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(
      std::count_if(records_.begin(), records_.end(), [&](const auto& r) { return r.split == split; }));
}

std::size_t AccessLedger::count(Split split, std::string_view stage) const {
  std::lock_guard lock(mutex_);
  return static_cast<std::size_t>(std::count_if(records_.begin(), records_.end(), [&](const auto& r) {
    return r.split == split && r.stage == stage;
  }));
}

void AccessLedger::seal_test_block() {
  std::lock_guard lock(mutex_);
  test_sealed_ = true;
}

void AccessLedger::open_test_block(std::string_view stage) {
  std::lock_guard lock(mutex_);
  test_sealed_ = false;
  opened_by_ = std::string(stage);
}

std::string AccessLedger::opened_by() const {
  std::lock_guard lock(mutex_);
  return opened_by_;
}

bool AccessLedger::test_block_sealed() const {
  std::lock_guard lock(mutex_);
  return test_sealed_;
}

std::string AccessLedger::to_csv() const {
  std::lock_guard lock(mutex_);
  std::ostringstream out;
  out << "stage,split,first_row,last_row\n";
  for (const auto& r : records_) out << r.stage << ',' << to_string(r.split) << ',' << r.first_row << ',' << r.last_row << '\n';
  return out.str();
}

}  // namespace stackcast
