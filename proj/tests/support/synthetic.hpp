#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "stackcast/market_data.hpp"
#include "stackcast/stacking.hpp"

namespace stackcast::synth {

inline constexpr Date kStart{std::chrono::year{2014} / std::chrono::October / 1};

/// Geometric random walk with consistent OHLC bars and positive volume.
OhlcvSeries random_walk(std::size_t n, std::uint64_t seed, double start_close = 383.61, double drift = 0.0005,
                        double vol = 0.02, Date start = kStart);

/// Bars built around the given closes (open = previous close).
OhlcvSeries from_closes(const std::vector<double>& closes, Date start = kStart);

std::string to_csv(const OhlcvSeries& series);

/// A few-second pipeline: short lookback, narrow models, a handful of epochs.
PipelineConfig tiny_pipeline(std::size_t lookback = 8, std::size_t epochs = 3);

}  // namespace stackcast::synth
