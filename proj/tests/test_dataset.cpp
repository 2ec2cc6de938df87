#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <fstream>
#include <sstream>

#include "archgrad/dataset.hpp"
#include "archgrad/status.hpp"

using namespace ag;

namespace {

std::string read_golden(const std::string& name) {
  std::ifstream in(std::string(AG_GOLDEN_DIR) + "/" + name,
                   std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("two gaussians golden file is byte stable") {
  SyntheticDataset data = generate_dataset({DatasetKind::TwoGaussians, 1, 8});
  CHECK(dataset_to_csv(data) == read_golden("dataset_two_gaussians_s1_n8.csv"));
}

TEST_CASE("class counts are equal") {
  for (auto kind : {DatasetKind::TwoGaussians, DatasetKind::ConcentricRings}) {
    auto data = generate_dataset({kind, 7, 64});
    int ones = 0;
    for (int l : data.labels) ones += l;
    CHECK(ones == 32);
  }
}

TEST_CASE("generation is deterministic and seed sensitive") {
  DatasetSpec spec{DatasetKind::ConcentricRings, 42, 32};
  auto a = generate_dataset(spec);
  auto b = generate_dataset(spec);
  CHECK(dataset_to_csv(a) == dataset_to_csv(b));

  spec.seed = 43;
  auto c = generate_dataset(spec);
  CHECK(dataset_to_csv(a) != dataset_to_csv(c));
}

TEST_CASE("ring radii cluster around 1 and 2") {
  auto data = generate_dataset({DatasetKind::ConcentricRings, 5, 200});
  for (std::size_t i = 0; i < 200; ++i) {
    const double r = std::hypot(data.points.at(i, 0), data.points.at(i, 1));
    const double expect = data.labels[i] == 0 ? 1.0 : 2.0;
    CHECK(std::fabs(r - expect) < 0.8);  // 6-sigma radial noise plus margin
  }
}

TEST_CASE("gaussian blobs sit at plus and minus two") {
  auto data = generate_dataset({DatasetKind::TwoGaussians, 9, 400});
  double mean0 = 0.0, mean1 = 0.0;
  for (std::size_t i = 0; i < 400; ++i) {
    if (data.labels[i] == 0) {
      mean0 += data.points.at(i, 0);
    } else {
      mean1 += data.points.at(i, 0);
    }
  }
  CHECK(std::fabs(mean0 / 200.0 + 2.0) < 0.3);
  CHECK(std::fabs(mean1 / 200.0 - 2.0) < 0.3);
}

TEST_CASE("odd sizes are rejected") {
  CHECK_THROWS_AS((void)generate_dataset({DatasetKind::TwoGaussians, 1, 7}),
                  Error);
}

TEST_CASE("slices partition the data") {
  auto data = generate_dataset({DatasetKind::TwoGaussians, 3, 16});
  auto lo = dataset_slice(data, 0, 8);
  auto hi = dataset_slice(data, 8, 16);
  CHECK(lo.points.rows() == 8);
  CHECK(hi.points.rows() == 8);
  CHECK(lo.points.at(0, 0) == data.points.at(0, 0));
  CHECK(hi.points.at(0, 0) == data.points.at(8, 0));
}
