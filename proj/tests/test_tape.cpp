#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "archgrad/rng.hpp"
#include "archgrad/status.hpp"
#include "archgrad/tape.hpp"

using namespace ag;

namespace {

// Test-side central-difference oracle, independent of Tape::backward.
std::vector<double> central_diff(
    const std::function<double(const std::vector<double>&)>& f,
    std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double xi = x[i];
    x[i] = xi + h;
    const double fp = f(x);
    x[i] = xi - h;
    const double fm = f(x);
    x[i] = xi;
    g[i] = (fp - fm) / (2.0 * h);
  }
  return g;
}

}  // namespace

TEST_CASE("componentwise ops") {
  Tape t;
  auto a = t.leaf(Tensor({2}, {1.0, 2.0}));
  auto b = t.leaf(Tensor({2}, {3.0, 4.0}));
  auto s = t.add(a, b);
  CHECK(t.value(s).data() == std::vector<double>{4.0, 6.0});

  auto d = t.sub(b, a);
  CHECK(t.value(d).data() == std::vector<double>{2.0, 2.0});

  auto m = t.mul(a, b);
  CHECK(t.value(m).data() == std::vector<double>{3.0, 8.0});
}

TEST_CASE("softmax of equal logits is uniform and normalized") {
  Tape t;
  auto x = t.leaf(Tensor({3}, {0.0, 0.0, 0.0}));
  auto y = t.softmax_last_axis(x);
  for (double v : t.value(y).data()) {
    CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
  }

  Rng rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    Tape tt;
    Tensor logits({4, 6});
    for (auto& v : logits.data()) v = rng.uniform(-30.0, 30.0);
    auto sm = tt.softmax_last_axis(tt.leaf(logits));
    const Tensor& out = tt.value(sm);
    for (std::size_t r = 0; r < 4; ++r) {
      double row = 0.0;
      for (std::size_t c = 0; c < 6; ++c) {
        CHECK(out.at(r, c) > 0.0);
        row += out.at(r, c);
      }
      CHECK(std::fabs(row - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("matmul identity") {
  Tape t;
  auto eye = t.constant(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  auto m = t.leaf(Tensor({2, 2}, {5.0, 6.0, 7.0, 8.0}));
  auto p = t.matmul(eye, m);
  CHECK(t.value(p).data() == std::vector<double>{5.0, 6.0, 7.0, 8.0});
}

TEST_CASE("shape mismatch names the op") {
  Tape t;
  auto a = t.leaf(Tensor({2}, {1.0, 2.0}));
  auto b = t.leaf(Tensor({3}, {1.0, 2.0, 3.0}));
  CHECK_THROWS_WITH_AS(t.add(a, b),
                       doctest::Contains("add"), Error);
  CHECK_THROWS_WITH_AS(t.squared_error(a, b),
                       doctest::Contains("squared-error"), Error);
}

TEST_CASE("backward of w^2") {
  Tape t;
  auto w = t.leaf(Tensor::scalar(3.0), "omega");
  auto y = t.mul(w, w);
  auto g = t.backward(y, {"omega"});
  CHECK(g.grad("omega", w)[0] == 6.0);
}

TEST_CASE("backward of the scalar two-sample loss") {
  // f(w, a) = (w*1 - a)^2 at w=2, a=1
  Tape t;
  auto w = t.leaf(Tensor::scalar(2.0), "omega");
  auto a = t.leaf(Tensor::scalar(1.0), "alpha");
  auto pred = t.scale(w, 1.0);
  auto loss = t.squared_error(pred, a);
  CHECK(t.value(loss)[0] == 1.0);
  auto g = t.backward(loss, {"omega", "alpha"});
  CHECK(g.grad("omega", w)[0] == 2.0);
  CHECK(g.grad("alpha", a)[0] == -2.0);
}

TEST_CASE("non-scalar backward is rejected") {
  Tape t;
  auto a = t.leaf(Tensor({2}, {1.0, 2.0}), "omega");
  auto b = t.add(a, a);
  CHECK_THROWS_AS((void)t.backward(b, {"omega"}), Error);
  try {
    (void)t.backward(b, {"omega"});
  } catch (const Error& e) {
    CHECK(e.status() == Status::NonScalarOutput);
  }
}

TEST_CASE("leaves outside requested groups are skipped") {
  Tape t;
  auto w = t.leaf(Tensor::scalar(2.0), "omega");
  auto a = t.leaf(Tensor::scalar(1.0), "alpha");
  auto loss = t.squared_error(w, a);
  auto g = t.backward(loss, {"omega"});
  CHECK(g.by_group.count("alpha") == 0);
  CHECK(g.by_group.at("omega").size() == 1);
}

TEST_CASE("random tanh network gradient matches central differences") {
  Rng rng(1234);
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t batch = 3, in = 4, hidden = 5, out = 2;
    const std::size_t n_params =
        in * hidden + hidden + hidden * hidden + hidden + hidden * out + out;
    std::vector<double> params(n_params);
    for (auto& p : params) p = rng.normal(0.0, 0.7);
    Tensor xin({batch, in});
    for (auto& v : xin.data()) v = rng.normal();
    std::vector<int> labels{0, 1, 0};

    auto build = [&](const std::vector<double>& p, Tape& t,
                     std::vector<ValueRef>& leaves) {
      std::size_t off = 0;
      auto take = [&](std::vector<std::size_t> shape) {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        Tensor v(std::move(shape),
                 std::vector<double>(p.begin() + off, p.begin() + off + n));
        off += n;
        auto r = t.leaf(std::move(v), "omega");
        leaves.push_back(r);
        return r;
      };
      auto w1 = take({in, hidden});
      auto b1 = take({hidden});
      auto w2 = take({hidden, hidden});
      auto b2 = take({hidden});
      auto w3 = take({hidden, out});
      auto b3 = take({out});
      auto x = t.constant(xin);
      auto h1 = t.tanh(t.affine(x, w1, b1));
      auto h2 = t.tanh(t.affine(h1, w2, b2));
      auto logits = t.affine(h2, w3, b3);
      return t.softmax_cross_entropy(logits, labels);
    };

    auto value = [&](const std::vector<double>& p) {
      Tape t;
      std::vector<ValueRef> leaves;
      return t.value(build(p, t, leaves))[0];
    };

    Tape t;
    std::vector<ValueRef> leaves;
    auto loss = build(params, t, leaves);
    auto bundle = t.backward(loss, {"omega"});
    auto ad = bundle.flat("omega");
    auto fd = central_diff(value, params, 1e-5);
    REQUIRE(ad.size() == fd.size());
    for (std::size_t i = 0; i < ad.size(); ++i) {
      CHECK(std::fabs(ad[i] - fd[i]) / std::max(1.0, std::fabs(fd[i])) <
            1e-5);
    }
  }
}

TEST_CASE("backward is deterministic bit for bit") {
  Rng rng(77);
  Tensor xin({4, 3});
  for (auto& v : xin.data()) v = rng.normal();
  Tensor w({3, 3});
  for (auto& v : w.data()) v = rng.normal();

  auto run = [&]() {
    Tape t;
    auto wl = t.leaf(w, "omega");
    auto x = t.constant(xin);
    auto h = t.tanh(t.matmul(x, wl));
    auto sm = t.softmax_last_axis(h);
    auto loss = t.mean(t.mul(sm, sm));
    return t.backward(loss, {"omega"}).flat("omega");
  };
  auto g1 = run();
  auto g2 = run();
  REQUIRE(g1.size() == g2.size());
  for (std::size_t i = 0; i < g1.size(); ++i) {
    CHECK(std::memcmp(&g1[i], &g2[i], sizeof(double)) == 0);
  }
}

TEST_CASE("concat round trip gradient") {
  Rng rng(31);
  std::vector<double> p(12);
  for (auto& v : p) v = rng.normal();
  auto value = [&](const std::vector<double>& x) {
    Tape t;
    auto a = t.leaf(Tensor({2, 3}, {x[0], x[1], x[2], x[3], x[4], x[5]}));
    auto b = t.leaf(Tensor({2, 3}, {x[6], x[7], x[8], x[9], x[10], x[11]}));
    auto c = t.concat({a, b});
    Tensor wconst({2, 6});
    for (std::size_t i = 0; i < 12; ++i) wconst[i] = 0.1 * (1.0 + i);
    auto weighted = t.mul(c, t.constant(wconst));
    return t.value(t.sum(weighted))[0];
  };
  Tape t;
  auto a = t.leaf(Tensor({2, 3}, {p[0], p[1], p[2], p[3], p[4], p[5]}), "w");
  auto b = t.leaf(Tensor({2, 3}, {p[6], p[7], p[8], p[9], p[10], p[11]}), "w");
  auto c = t.concat({a, b});
  Tensor wconst({2, 6});
  for (std::size_t i = 0; i < 12; ++i) wconst[i] = 0.1 * (1.0 + i);
  auto loss = t.sum(t.mul(c, t.constant(wconst)));
  auto ad = t.backward(loss, {"w"}).flat("w");
  auto fd = central_diff(value, p, 1e-6);
  for (std::size_t i = 0; i < 12; ++i) {
    CHECK(ad[i] == doctest::Approx(fd[i]).epsilon(1e-7));
  }
}

TEST_CASE("log rejects nonpositive input") {
  Tape t;
  auto a = t.leaf(Tensor({2}, {1.0, -1.0}));
  CHECK_THROWS_AS((void)t.log(a), Error);
}
