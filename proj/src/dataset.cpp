#include "archgrad/dataset.hpp"

#include "archgrad/jsonio.hpp"
#include "archgrad/rng.hpp"
#include "archgrad/status.hpp"

namespace ag {

const char* dataset_kind_name(DatasetKind k) {
  switch (k) {
    case DatasetKind::TwoGaussians: return "two_gaussians";
    case DatasetKind::ConcentricRings: return "concentric_rings";
  }
  return "unknown";
}

DatasetKind dataset_kind_from_name(const std::string& name) {
  if (name == "two_gaussians") return DatasetKind::TwoGaussians;
  if (name == "concentric_rings") return DatasetKind::ConcentricRings;
  throw Error(Status::Config, "unknown dataset: " + name);
}

SyntheticDataset generate_dataset(const DatasetSpec& spec) {
  if (spec.size == 0 || spec.size % 2 != 0) {
    throw Error(Status::InvalidArgument, "dataset size must be even");
  }
  SyntheticDataset data;
  data.spec = spec;
  const std::size_t width = 2 + spec.noise_dims;
  data.points = Tensor({spec.size, width});
  data.labels.resize(spec.size);
  Rng rng(spec.seed);
  for (std::size_t i = 0; i < spec.size; ++i) {
    const int label = static_cast<int>(i % 2);
    data.labels[i] = label;
    switch (spec.kind) {
      case DatasetKind::TwoGaussians: {
        const double cx = label == 0 ? -2.0 : 2.0;
        data.points.at(i, 0) = cx + rng.normal();
        data.points.at(i, 1) = rng.normal();
        break;
      }
      case DatasetKind::ConcentricRings: {
        const double radius = (label == 0 ? 1.0 : 2.0) + 0.1 * rng.normal();
        double ux, uy;
        rng.unit_circle(ux, uy);
        data.points.at(i, 0) = radius * ux;
        data.points.at(i, 1) = radius * uy;
        break;
      }
    }
    for (std::size_t d = 0; d < spec.noise_dims; ++d) {
      data.points.at(i, 2 + d) = rng.normal();
    }
  }
  return data;
}

std::string dataset_to_csv(const SyntheticDataset& data) {
  const std::size_t width = data.points.cols();
  std::string out;
  for (std::size_t d = 0; d < width; ++d) {
    out += "x" + std::to_string(d) + ",";
  }
  out += "label\n";
  for (std::size_t i = 0; i < data.labels.size(); ++i) {
    for (std::size_t d = 0; d < width; ++d) {
      out += format_double(data.points.at(i, d));
      out += ',';
    }
    out += std::to_string(data.labels[i]);
    out += '\n';
  }
  return out;
}

Batch dataset_batch(const SyntheticDataset& data) {
  return dataset_slice(data, 0, data.labels.size());
}

Batch dataset_slice(const SyntheticDataset& data, std::size_t begin,
                    std::size_t end) {
  if (begin >= end || end > data.labels.size()) {
    throw Error(Status::InvalidArgument, "dataset slice out of range");
  }
  const std::size_t width = data.points.cols();
  Batch b;
  b.points = Tensor({end - begin, width});
  b.labels.assign(data.labels.begin() + begin, data.labels.begin() + end);
  for (std::size_t i = begin; i < end; ++i) {
    for (std::size_t d = 0; d < width; ++d) {
      b.points.at(i - begin, d) = data.points.at(i, d);
    }
  }
  return b;
}

}  // namespace ag
