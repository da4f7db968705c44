#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "gridnet/tensor.hpp"

using namespace gridnet;

TEST_CASE("shape arithmetic") {
  CHECK(numel({2, 3, 4}) == 24);
  CHECK(numel({5}) == 5);
  CHECK(shape_str({3, 32, 32}) == "[3x32x32]");
}

TEST_CASE("construction and flat storage are row-major") {
  Tensor<double> t = Tensor<double>::from_values({2, 2}, {1, 2, 3, 4});
  CHECK(t.at(0, 0) == 1);
  CHECK(t.at(0, 1) == 2);
  CHECK(t.at(1, 0) == 3);
  CHECK(t.at(1, 1) == 4);
  CHECK(t.size() == 4);
  CHECK(t.rank() == 2);
  CHECK(t.extent(1) == 2);
}

TEST_CASE("value count must fill the shape") {
  CHECK_THROWS_AS(Tensor<double>::from_values({2, 2}, {1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>(Shape{0, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor<double>(Shape{2, -1}), DimensionError);
}

TEST_CASE("reshape preserves elements and rejects count changes") {
  Tensor<double> t = Tensor<double>::from_values({2, 3}, {1, 2, 3, 4, 5, 6});
  Tensor<double> r = t.reshaped({6});
  CHECK(r[4] == 5);
  CHECK_THROWS_AS(t.reshaped({4}), DimensionError);
}

TEST_CASE("finite check is a hard error on NaN and Inf") {
  Tensor<double> t(Shape{3});
  CHECK_NOTHROW(t.check_finite("test"));
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_THROWS_AS(t.check_finite("test"), NumericError);
  t[1] = std::numeric_limits<double>::infinity();
  CHECK_THROWS_AS(t.check_finite("test"), NumericError);
}

TEST_CASE("float32 tensors carry the same layout") {
  Tensor<float> t = Tensor<float>::constant({2, 2}, 1.5f);
  CHECK(t.array().sum() == 6.0f);
}
