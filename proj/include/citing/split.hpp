#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "citing/records.hpp"

namespace citing {

using SplitRatios = std::array<double, 3>;

inline constexpr SplitRatios kDefaultSplitRatios{8.0, 1.0, 1.0};

struct DatasetSplit {
  std::vector<InstructionRecord> train;
  std::vector<InstructionRecord> validation;
  std::vector<InstructionRecord> test;
  std::uint64_t seed = 0;
  SplitRatios ratios = kDefaultSplitRatios;
};

/// Part sizes for `n` items. Validation and test receive the floor of their
/// exact quota; every leftover goes to train. When train's ratio is zero the
/// leftovers are handed out by largest fractional remainder (ties to the
/// earlier part) among parts with a positive ratio.
std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios);

/// Seeded shuffle, then consecutive slices of the computed sizes.
DatasetSplit split_dataset(std::vector<InstructionRecord> records, const SplitRatios& ratios,
                           std::uint64_t seed);

/// Parses "8:1:1".
SplitRatios parse_split_ratios(const std::string& text);

}  // namespace citing
