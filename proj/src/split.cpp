#include "citing/split.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "citing/error.hpp"
#include "citing/random.hpp"

namespace citing {

std::array<std::size_t, 3> split_sizes(std::size_t n, const SplitRatios& ratios) {
  double total = 0.0;
  for (double r : ratios) {
    if (!(r >= 0.0) || !std::isfinite(r)) throw DataError("split ratios must be finite and non-negative");
    total += r;
  }
  if (total <= 0.0) throw DataError("split ratios must not all be zero");

  std::array<std::size_t, 3> sizes{};
  std::array<double, 3> remainder{};
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < 3; ++i) {
    // Exact quota computed in long double so 52000 * 0.1 floors to 5200.
    const long double quota = static_cast<long double>(n) * ratios[i] / total;
    auto whole = static_cast<std::size_t>(std::floor(quota + 1e-9L));
    if (whole > n) whole = n;
    sizes[i] = whole;
    remainder[i] = static_cast<double>(quota - static_cast<long double>(whole));
    assigned += whole;
  }
  while (assigned > n) {
    // Only reachable through the epsilon guard above; trim from the largest part.
    auto it = std::max_element(sizes.begin(), sizes.end());
    --*it;
    --assigned;
  }
  std::size_t leftover = n - assigned;
  if (ratios[0] > 0.0) {
    sizes[0] += leftover;
    return sizes;
  }
  // Fractional remainders sum to `leftover`, each below one, so a single
  // pass over the positive parts suffices.
  std::array<std::size_t, 3> order{0, 1, 2};
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t i : order) {
    if (leftover == 0) break;
    if (ratios[i] <= 0.0) continue;
    ++sizes[i];
    --leftover;
  }
  sizes[order[0]] += leftover;
  return sizes;
}

DatasetSplit split_dataset(std::vector<InstructionRecord> records, const SplitRatios& ratios,
                           std::uint64_t seed) {
  const auto sizes = split_sizes(records.size(), ratios);
  DeterministicRng rng(seed);
  rng.shuffle(std::span<InstructionRecord>(records));

  DatasetSplit out;
  out.seed = seed;
  out.ratios = ratios;
  auto it = std::make_move_iterator(records.begin());
  out.train.assign(it, it + static_cast<std::ptrdiff_t>(sizes[0]));
  it += static_cast<std::ptrdiff_t>(sizes[0]);
  out.validation.assign(it, it + static_cast<std::ptrdiff_t>(sizes[1]));
  it += static_cast<std::ptrdiff_t>(sizes[1]);
  out.test.assign(it, it + static_cast<std::ptrdiff_t>(sizes[2]));
  return out;
}

SplitRatios parse_split_ratios(const std::string& text) {
  SplitRatios out{};
  std::stringstream ss(text);
  std::string part;
  std::size_t i = 0;
  while (std::getline(ss, part, ':')) {
    if (i >= 3) throw UsageError("split ratios need exactly three parts: " + text);
    try {
      std::size_t used = 0;
      out[i] = std::stod(part, &used);
      if (used != part.size()) throw std::invalid_argument(part);
    } catch (const std::exception&) {
      throw UsageError("invalid split ratio \"" + part + "\"");
    }
    ++i;
  }
  if (i != 3) throw UsageError("split ratios need exactly three parts: " + text);
  for (double r : out) {
    if (!(r >= 0.0)) throw UsageError("split ratios must be non-negative: " + text);
  }
  if (out[0] + out[1] + out[2] <= 0.0) throw UsageError("split ratios must not all be zero: " + text);
  return out;
}

}  // namespace citing
