#include "lipsync/tensor.hpp"

#include <vector>

#include "doctest.h"
#include "lipsync/errors.hpp"

using lipsync::ShapeError;
using lipsync::Tensor;

TEST_SUITE("tensor") {

TEST_CASE("zeros and shape accounting") {
  Tensor t = Tensor::zeros({2, 3, 4});
  CHECK(t.rank() == 3);
  CHECK(t.numel() == 24);
  CHECK(t.dim(0) == 2);
  CHECK(t.dim(1) == 3);
  CHECK(t.dim(2) == 4);
  for (std::int64_t i = 0; i < t.numel(); ++i) CHECK(t[i] == 0.0);
}

TEST_CASE("at() uses row-major strides") {
  Tensor t = Tensor::zeros({2, 3, 4});
  t.at({1, 2, 3}) = 7.0;
  CHECK(t[1 * 12 + 2 * 4 + 3] == 7.0);
  t.at({0, 1, 0}) = 2.5;
  CHECK(t[4] == 2.5);
}

TEST_CASE("scalar and full") {
  Tensor s = Tensor::scalar(3.5);
  CHECK(s.rank() == 1);
  CHECK(s.numel() == 1);
  CHECK(s[0] == 3.5);
  Tensor f = Tensor::full({2, 2}, -1.25);
  for (std::int64_t i = 0; i < 4; ++i) CHECK(f[i] == -1.25);
}

TEST_CASE("reshape preserves data and checks element count") {
  Tensor t({2, 6}, std::vector<double>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11});
  Tensor r = t.reshaped({3, 4});
  CHECK(r.numel() == 12);
  for (std::int64_t i = 0; i < 12; ++i) CHECK(r[i] == static_cast<double>(i));
  CHECK_THROWS_AS(t.reshaped({5, 2}), ShapeError);
}

TEST_CASE("constructor rejects mismatched data length") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1.0, 2.0, 3.0}), ShapeError);
}

TEST_CASE("negative dims rejected") {
  CHECK_THROWS_AS(Tensor::zeros({2, -1}), ShapeError);
}

TEST_CASE("add_scaled accumulates in place") {
  Tensor a({3}, std::vector<double>{1, 2, 3});
  Tensor b({3}, std::vector<double>{10, 20, 30});
  a.add_scaled(b, 0.5);
  CHECK(a[0] == doctest::Approx(6.0));
  CHECK(a[1] == doctest::Approx(12.0));
  CHECK(a[2] == doctest::Approx(18.0));
  Tensor c = Tensor::zeros({2});
  CHECK_THROWS_AS(a.add_scaled(c, 1.0), ShapeError);
}

TEST_CASE("require_shape names the offender") {
  Tensor t = Tensor::zeros({2, 3});
  CHECK_NOTHROW(t.require_shape({2, 3}, "input"));
  CHECK_THROWS_WITH_AS(t.require_shape({3, 2}, "input"),
                       doctest::Contains("input"), ShapeError);
}

}  // TEST_SUITE
