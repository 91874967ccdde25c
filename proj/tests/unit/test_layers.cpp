#include <cmath>

#include "doctest.h"
#include "gradcheck.hpp"
#include "reference.hpp"
#include "splitfed/errors.hpp"
#include "splitfed/layers.hpp"

using namespace splitfed;

TEST_CASE("1x1 identity kernel returns the input") {
  const Tensor x = ref::random_tensor({1, 3, 3}, 1);
  auto [y, cache] = conv2d(x, Tensor({1, 1, 1, 1}, 1.0f), Tensor({1}, 0.0f));
  CHECK(y == x);
}

TEST_CASE("3x3 all-ones kernel over all-ones input counts the window") {
  auto [y, cache] = conv2d(Tensor({1, 3, 3}, 1.0f), Tensor({1, 1, 3, 3}, 1.0f), Tensor({1}, 0.0f));
  CHECK(y.at(0, 1, 1) == 9.0f);
  CHECK(y.at(0, 0, 0) == 4.0f);
  CHECK(y.at(0, 0, 2) == 4.0f);
  CHECK(y.at(0, 2, 0) == 4.0f);
  CHECK(y.at(0, 2, 2) == 4.0f);
  CHECK(y.at(0, 0, 1) == 6.0f);
}

TEST_CASE("conv matches the double reference on odd sizes") {
  const Tensor x = ref::random_tensor({3, 5, 7}, 2);
  const Tensor w = ref::random_tensor({5, 3, 3, 3}, 3);
  const Tensor b = ref::random_tensor({5}, 4);
  auto [y, cache] = conv2d(x, w, b);
  const auto expected = ref::conv2d(ref::widen(x), ref::widen(w), ref::widen(b));
  for (std::size_t i = 0; i < y.size(); ++i) CHECK(y[i] == doctest::Approx(expected.data[i]).epsilon(1e-5));
}

TEST_CASE("conv shape errors name the axis") {
  const Tensor x({2, 4, 4});
  CHECK_THROWS_WITH_AS(conv2d(x, Tensor({1, 3, 3, 3}), Tensor({1})), doctest::Contains("axis 1"), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 2, 2}), Tensor({1})), ShapeError);
  CHECK_THROWS_AS(conv2d(x, Tensor({1, 2, 3, 3}), Tensor({2})), ShapeError);
}

TEST_CASE("relu forward and subgradient at zero") {
  const Tensor x({3}, std::vector<float>{-1.0f, 0.0f, 2.0f});
  auto [y, cache] = relu(x);
  CHECK(y == Tensor({3}, std::vector<float>{0.0f, 0.0f, 2.0f}));
  CHECK(relu_backward(cache, Tensor({3}, 1.0f)) == Tensor({3}, std::vector<float>{0.0f, 0.0f, 1.0f}));
}

TEST_CASE("maxpool picks the window max and routes the gradient to it") {
  const Tensor x({1, 2, 2}, std::vector<float>{1, 2, 3, 4});
  auto [y, cache] = maxpool2(x);
  CHECK(y.size() == 1);
  CHECK(y[0] == 4.0f);
  CHECK(maxpool2_backward(cache, Tensor({1, 1, 1}, 1.0f)) == Tensor({1, 2, 2}, std::vector<float>{0, 0, 0, 1}));
}

TEST_CASE("maxpool ties go to the top-left of each window") {
  auto [y, cache] = maxpool2(Tensor({2, 4, 4}, 0.5f));
  CHECK(y == Tensor({2, 2, 2}, 0.5f));
  const Tensor g = maxpool2_backward(cache, Tensor({2, 2, 2}, 1.0f));
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t yy = 0; yy < 4; ++yy) {
      for (std::size_t xx = 0; xx < 4; ++xx) {
        CHECK(g.at(c, yy, xx) == ((yy % 2 == 0 && xx % 2 == 0) ? 1.0f : 0.0f));
      }
    }
  }
}

TEST_CASE("maxpool rejects odd extents") {
  CHECK_THROWS_AS(maxpool2(Tensor({1, 3, 4})), ShapeError);
  CHECK_THROWS_AS(maxpool2(Tensor({1, 4, 5})), ShapeError);
}

TEST_CASE("upsample replicates and its backward sums blocks") {
  auto [y, cache] = upsample2(Tensor({1, 1, 1}, 1.0f));
  CHECK(y == Tensor({1, 2, 2}, 1.0f));
  CHECK(upsample2_backward(cache, Tensor({1, 2, 2}, 1.0f)) == Tensor({1, 1, 1}, 4.0f));
}

TEST_CASE("upsample then maxpool is the identity on non-negative input") {
  const Tensor x = ref::random_tensor({3, 4, 5}, 9, 0.0, 2.0);
  CHECK(maxpool2(upsample2(x).first).first == x);
}

TEST_CASE("upsample backward is the adjoint of upsample") {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Tensor x = ref::random_tensor({2, 3, 4}, 20 + s);
    const Tensor y = ref::random_tensor({2, 6, 8}, 40 + s);
    auto [ux, cache] = upsample2(x);
    const double lhs = ref::dot(ref::widen(ux), ref::widen(y));
    const double rhs = ref::dot(ref::widen(x), ref::widen(upsample2_backward(cache, y)));
    CHECK(std::abs(lhs - rhs) < 1e-5);
  }
}

TEST_CASE("sigmoid stays strictly inside (0,1)") {
  for (float z : {-1000.0f, -90.0f, -20.0f, 0.0f, 20.0f, 90.0f, 1000.0f}) {
    CHECK(sigmoid(z) > 0.0f);
    CHECK(sigmoid(z) < 1.0f);
  }
  CHECK(sigmoid(0.0f) == 0.5f);
}

TEST_CASE("layers are deterministic") {
  const Tensor x = ref::random_tensor({2, 8, 8}, 5);
  const Tensor w = ref::random_tensor({4, 2, 3, 3}, 6);
  const Tensor b = ref::random_tensor({4}, 7);
  auto [y1, c1] = conv2d(x, w, b);
  auto [y2, c2] = conv2d(x, w, b);
  CHECK(y1 == y2);
  const Tensor r = ref::random_tensor({4, 8, 8}, 8);
  const auto g1 = conv2d_backward(c1, r), g2 = conv2d_backward(c2, r);
  CHECK(g1.d_input == g2.d_input);
  CHECK(g1.d_weight == g2.d_weight);
}

TEST_CASE("backward skips what is not needed") {
  auto [y, cache] = conv2d(ref::random_tensor({1, 4, 4}, 1), ref::random_tensor({2, 1, 3, 3}, 2), Tensor({2}));
  const auto only_params = conv2d_backward(cache, Tensor({2, 4, 4}, 1.0f), {false, true});
  CHECK(only_params.d_input.empty());
  CHECK_FALSE(only_params.d_weight.empty());
  const auto only_input = conv2d_backward(cache, Tensor({2, 4, 4}, 1.0f), {true, false});
  CHECK(only_input.d_weight.empty());
  CHECK(only_input.d_input == conv2d_backward(cache, Tensor({2, 4, 4}, 1.0f)).d_input);
}

TEST_CASE("finite-difference gradient checks") {
  for (const auto& r : ref::check_all_layers(20, 1234)) {
    INFO(r.layer << ": max rel error " << r.max_rel_error << " over " << r.entries << " entries");
    CHECK(r.instances >= 20);
    CHECK(r.max_rel_error < 1e-3);
  }
}
