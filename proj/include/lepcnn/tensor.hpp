#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lepcnn/int256.hpp"

namespace lepcnn {

struct Shape3 {
  uint32_t height = 1;
  uint32_t width = 1;
  uint32_t depth = 1;

  size_t size() const {
    return static_cast<size_t>(height) * width * depth;
  }
  std::string to_string() const;
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

// Dense height x width x depth array of integers. Elements are stored
// row-major with depth innermost: index = (y * width + x) * depth + c.
// Vectors are 1 x 1 x length tensors.
class Tensor3 {
 public:
  Tensor3() = default;
  explicit Tensor3(Shape3 shape);
  Tensor3(Shape3 shape, std::vector<Int256> elements);

  static Tensor3 vector(std::vector<Int256> elements);

  const Shape3& shape() const { return shape_; }
  size_t size() const { return elements_.size(); }

  Int256& at(uint32_t y, uint32_t x, uint32_t c) {
    return elements_[index(y, x, c)];
  }
  const Int256& at(uint32_t y, uint32_t x, uint32_t c) const {
    return elements_[index(y, x, c)];
  }
  size_t index(uint32_t y, uint32_t x, uint32_t c) const {
    return (static_cast<size_t>(y) * shape_.width + x) * shape_.depth + c;
  }

  Int256& operator[](size_t i) { return elements_[i]; }
  const Int256& operator[](size_t i) const { return elements_[i]; }

  std::span<Int256> elements() { return elements_; }
  std::span<const Int256> elements() const { return elements_; }

  // Same elements viewed as a 1 x 1 x size() vector.
  Tensor3 flattened() const&;
  Tensor3 flattened() &&;

  friend bool operator==(const Tensor3&, const Tensor3&) = default;

 private:
  Shape3 shape_{};
  std::vector<Int256> elements_;
};

}  // namespace lepcnn
