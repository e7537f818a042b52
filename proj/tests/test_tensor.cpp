#include <sstream>

#include "doctest.h"
#include "cubefocus/tensor.hpp"

using namespace cubefocus;

TEST_CASE("tensor shape must match data length") {
  CHECK_THROWS_AS(Tensor(Shape{2, 3}, std::vector<double>(5)), std::invalid_argument);
  const Tensor t(Shape{2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.sum() == doctest::Approx(9.0));
  CHECK(Tensor::scalar(4.0).rank() == 0);
}

TEST_CASE("4-d accessor is row-major over H x W x T x C") {
  Tensor t(Shape{2, 3, 4, 5});
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = static_cast<double>(i);
  CHECK(t.at(1, 2, 3, 4) == 119.0);
  CHECK(t.at(0, 1, 0, 0) == 20.0);
}

TEST_CASE("finite check") {
  Tensor t(Shape{3}, 0.0);
  CHECK(t.all_finite());
  t[1] = std::numeric_limits<double>::quiet_NaN();
  CHECK_FALSE(t.all_finite());
}

TEST_CASE("raw tensor format round trips and is little-endian") {
  const Tensor t(Shape{2, 1, 3}, std::vector<double>{1, -2, 3.25, 4, 5, 1e-300});
  std::stringstream ss;
  write_tensor(ss, t);
  const std::string bytes = ss.str();
  REQUIRE(bytes.size() == 4 + 4 + 3 * 4 + 6 * 8);
  CHECK(bytes.substr(0, 4) == "ATSR");
  CHECK(static_cast<unsigned char>(bytes[4]) == 3);  // rank, low byte first
  CHECK(bytes[5] == 0);
  CHECK(static_cast<unsigned char>(bytes[16]) == 3);  // third extent
  // 1.0 = 0x3ff0000000000000: last byte of the first value is 0x3f.
  CHECK(static_cast<unsigned char>(bytes[20 + 7]) == 0x3f);
  std::stringstream in(bytes);
  CHECK(read_tensor(in) == t);
}

TEST_CASE("raw tensor reader rejects bad input") {
  std::stringstream bad_magic("XXXX");
  CHECK_THROWS(read_tensor(bad_magic));
  std::stringstream ss;
  write_tensor(ss, Tensor(Shape{4}, 1.0));
  std::string truncated = ss.str();
  truncated.resize(truncated.size() - 3);
  std::stringstream in(truncated);
  CHECK_THROWS(read_tensor(in));
}

TEST_CASE("require_shape names both shapes") {
  try {
    require_shape(Tensor(Shape{2, 2}), Shape{3}, "weights");
    FAIL("expected an exception");
  } catch (const std::invalid_argument& e) {
    const std::string msg = e.what();
    CHECK(msg.find("weights") != std::string::npos);
    CHECK(msg.find(shape_string(Shape{2, 2})) != std::string::npos);
    CHECK(msg.find(shape_string(Shape{3})) != std::string::npos);
  }
}
