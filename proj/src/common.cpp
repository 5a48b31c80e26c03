// SPDX-License-Identifier: Apache-2.0

#include "ivdfm/common.hpp"

#include <iostream>

namespace ivdfm {

void log_warning(const std::string& msg) { std::cerr << "[ivdfm] warning: " << msg << "\n"; }

std::uint64_t derive_seed(std::uint64_t base, std::uint64_t salt) {
  // splitmix64 finalizer over the combined state.
  std::uint64_t z = base + 0x9E3779B97F4A7C15ull * (salt + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

}  // namespace ivdfm
