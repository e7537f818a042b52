#pragma once

#include <cstddef>
#include <filesystem>
#include <initializer_list>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cubefocus {

using Shape = std::vector<std::size_t>;

std::string shape_string(const Shape& shape);
std::size_t shape_volume(const Shape& shape);

// Dense row-major float64 array. Videos and feature maps use H x W x T x C.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0);
  Tensor(Shape s, std::vector<double> values);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::initializer_list<double> values);

  std::size_t rank() const { return shape.size(); }
  std::size_t size() const { return data.size(); }
  std::size_t extent(std::size_t axis) const { return shape.at(axis); }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  // 4-D accessors for H x W x T x C volumes.
  double& at(std::size_t h, std::size_t w, std::size_t t, std::size_t c) {
    return data[((h * shape[1] + w) * shape[2] + t) * shape[3] + c];
  }
  const double& at(std::size_t h, std::size_t w, std::size_t t, std::size_t c) const {
    return data[((h * shape[1] + w) * shape[2] + t) * shape[3] + c];
  }

  std::span<double> values() { return data; }
  std::span<const double> values() const { return data; }

  bool all_finite() const;
  double sum() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

void require_shape(const Tensor& t, const Shape& expected, const char* what);

// Raw tensor file: "ATSR", u32 rank, u32 extents, float64 payload, all little-endian.
void write_tensor(std::ostream& out, const Tensor& t);
Tensor read_tensor(std::istream& in);
void save_tensor(const std::filesystem::path& path, const Tensor& t);
Tensor load_tensor(const std::filesystem::path& path);

}  // namespace cubefocus
