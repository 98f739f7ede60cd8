#include <catch_amalgamated.hpp>

#include <cmath>

#include "e3/ops.hpp"
#include "gradcheck_suite.hpp"

using namespace e3;
using Catch::Approx;

TEST_CASE("sigmoid and softmax basic values", "[tensor]") {
  auto z = tensor::vector({0.0f});
  CHECK(sigmoid(z)[0] == Approx(0.5));
  auto s = softmax(tensor::vector({0.0f, 0.0f}), 0);
  CHECK(s[0] == Approx(0.5));
  CHECK(s[1] == Approx(0.5));
}

TEST_CASE("matmul with identity returns the operand", "[tensor]") {
  auto eye = tensor::matrix(3, 3, {1, 0, 0, 0, 1, 0, 0, 0, 1});
  auto a = tensor::matrix(3, 3, {1, 2, 3, 4, 5, 6, 7, 8, 9});
  auto c = matmul(eye, a);
  CHECK(c.values() == a.values());
}

TEST_CASE("shape mismatches report both shapes", "[tensor]") {
  auto a = tensor::zeros({2, 3});
  auto b = tensor::zeros({2, 3});
  try {
    matmul(a, b);
    FAIL("expected shape_error");
  } catch (const shape_error& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
  CHECK_THROWS_AS(add(a, tensor::zeros({3, 2})), shape_error);
  CHECK_THROWS_AS(softmax(a, 2), shape_error);
  CHECK_THROWS_AS(tensor::zeros({0}), shape_error);
  CHECK_THROWS_AS(tensor::from_values({2}, {1.0f}), shape_error);
}

TEST_CASE("backward of simple expressions", "[tensor]") {
  SECTION("sum of squares") {
    auto x = tensor::vector({3.0f}, true);
    sum(mul(x, x)).backward();
    CHECK(x.grad()[0] == Approx(6.0));
  }
  SECTION("sigmoid derivative at zero") {
    auto w = tensor::vector({0.0f}, true);
    sum(sigmoid(w)).backward();
    CHECK(w.grad()[0] == Approx(0.25));
  }
  SECTION("repeated calls accumulate into leaves") {
    auto x = tensor::vector({3.0f}, true);
    auto loss = sum(mul(x, x));
    loss.backward();
    loss.backward();
    CHECK(x.grad()[0] == Approx(12.0));
  }
  SECTION("non-scalar loss is rejected") {
    auto x = tensor::vector({1.0f, 2.0f}, true);
    CHECK_THROWS_AS(mul(x, x).backward(), shape_error);
  }
}

TEST_CASE("dropout modes", "[tensor]") {
  rng_t rng(1);
  auto x = tensor::vector({1, 2, 3, 4, 5, 6});
  CHECK(dropout(x, 0.4, false, rng).values() == x.values());
  CHECK(dropout(x, 0.0, true, rng).values() == x.values());
  auto y = dropout(x, 0.5, true, rng);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK((y[i] == 0.0f || y[i] == Approx(2 * x[i])));
  CHECK_THROWS_AS(dropout(x, 1.0, true, rng), std::invalid_argument);
}

TEST_CASE("softmax rows are distributions", "[tensor][property]") {
  rng_t rng(3);
  std::normal_distribution<double> d(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<float> v(12);
    for (auto& x : v) x = static_cast<float>(d(rng));
    auto m = tensor::matrix(3, 4, v);
    for (std::size_t axis : {0u, 1u}) {
      auto s = softmax(m, axis);
      for (float p : s.data()) CHECK(p >= 0.0f);
      if (axis == 1) {
        for (std::size_t r = 0; r < 3; ++r) {
          double total = 0;
          for (std::size_t c = 0; c < 4; ++c) total += s.at(r, c);
          CHECK(std::abs(total - 1.0) < 1e-6);
        }
      } else {
        for (std::size_t c = 0; c < 4; ++c) {
          double total = 0;
          for (std::size_t r = 0; r < 3; ++r) total += s.at(r, c);
          CHECK(std::abs(total - 1.0) < 1e-6);
        }
      }
    }
  }
}

namespace {

using testing::check_leaves;
using testing::random_leaves;

// Runs a generic op-loss through the float/double checker on `trials` random
// instances and returns the worst errors.
template <class Build>
testing::leaf_check_result worst_over(const std::vector<shape_t>& shapes, Build build, int trials = 10,
                                      double lo = -1.0, double hi = 1.0) {
  std::mt19937_64 rng(42);
  testing::leaf_check_result worst;
  for (int t = 0; t < trials; ++t) {
    auto init = random_leaves(shapes, rng, lo, hi);
    auto r = check_leaves(
        init, [&](std::vector<tensor>& x) { return build(x); },
        [&](std::vector<basic_tensor<double>>& x) { return build(x); });
    worst.err32 = std::max(worst.err32, r.err32);
    worst.err64 = std::max(worst.err64, r.err64);
  }
  return worst;
}

// Projects an arbitrary tensor to a scalar with fixed non-uniform weights so
// every output coordinate influences the loss differently.
template <class T>
basic_tensor<T> probe(const basic_tensor<T>& y) {
  std::vector<T> w(y.size());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = T(0.3) + T(0.17) * static_cast<T>(i % 7);
  return sum(mul(reshape(y, {y.size()}), basic_tensor<T>::vector(w)));
}

}  // namespace

TEST_CASE("finite-difference gradient checks per op", "[tensor][gradcheck]") {
  for (const auto& c : testing::op_gradient_checks(10)) {
    INFO(c.name << " err32=" << c.worst.err32 << " err64=" << c.worst.err64);
    CHECK(c.worst.err32 < 1e-3);
    CHECK(c.worst.err64 < 1e-5);
  }
}
TEST_CASE("random two-layer network matches finite differences", "[tensor][gradcheck]") {
  auto net = [](auto& x) {
    // x[0]: input [4,5], x[1]: W1 [5,6], x[2]: b1 [6], x[3]: W2 [6,3], x[4]: b2 [3]
    auto h = tanh(add_bias(matmul(x[0], x[1]), x[2]));
    auto logits = add_bias(matmul(h, x[3]), x[4]);
    return sum(log_softmax(logits, 1));
  };
  auto r = worst_over({{4, 5}, {5, 6}, {6}, {6, 3}, {3}}, net, 10);
  INFO("err32=" << r.err32 << " err64=" << r.err64);
  CHECK(r.err32 < 1e-3);
  CHECK(r.err64 < 1e-5);
}

TEST_CASE("no_grad suppresses graph recording", "[tensor]") {
  auto x = tensor::vector({1.0f, 2.0f}, true);
  {
    no_grad_guard g;
    auto y = mul(x, x);
    CHECK_FALSE(y.requires_grad());
  }
  CHECK(mul(x, x).requires_grad());
}
