#pragma once

#include <cstdint>

#include "flstore/types.hpp"

namespace flstore {

// 1000 clients x 1000 rounds of this size come to about 79 TiB.
inline constexpr std::uint64_t kDefaultModelBytes = 88'604'672;  // 84.5 MiB

struct JobSpec {
  std::uint32_t pool_size = 250;
  std::uint32_t per_round = 10;
  std::uint32_t rounds = 1000;
  std::uint32_t round_origin = 0;
  std::uint64_t model_size_bytes = kDefaultModelBytes;
  std::uint64_t metadata_size_bytes = 4096;
  std::uint64_t seed = 0;
  // Length of the synthetic weight vectors the kernels actually see.
  std::uint32_t dim = 16;
  double round_interval_s = 600.0;
  double request_spacing_s = 30.0;

  void validate() const;
};

}  // namespace flstore
