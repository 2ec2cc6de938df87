#pragma once

#include <cstdint>
#include <string>

#include "archgrad/supernet.hpp"

namespace ag {

enum class DatasetKind {
  TwoGaussians,     // unit-variance blobs at (-2, 0) and (+2, 0)
  ConcentricRings,  // radii 1 and 2, radial noise sigma = 0.1
};

const char* dataset_kind_name(DatasetKind k);
DatasetKind dataset_kind_from_name(const std::string& name);

struct DatasetSpec {
  DatasetKind kind = DatasetKind::TwoGaussians;
  std::uint64_t seed = 1;
  std::size_t size = 256;  // must be even
  // extra pure-noise N(0,1) columns appended after the two signal
  // coordinates; inputs that provably carry no label signal
  std::size_t noise_dims = 0;
};

struct SyntheticDataset {
  DatasetSpec spec;
  Tensor points;            // (size, 2 + noise_dims)
  std::vector<int> labels;  // interleaved 0,1,0,1,... so any prefix balances
};

/// Deterministic generation from a split-mix64 stream: normals by the
/// 12-uniform sum, ring directions by rejection sampling. Identical bytes
/// for identical (kind, seed, size) on every binary64 platform.
SyntheticDataset generate_dataset(const DatasetSpec& spec);

std::string dataset_to_csv(const SyntheticDataset& data);

Batch dataset_batch(const SyntheticDataset& data);
/// Rows [begin, end).
Batch dataset_slice(const SyntheticDataset& data, std::size_t begin,
                    std::size_t end);

}  // namespace ag
