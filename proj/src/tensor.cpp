#include "lepcnn/tensor.hpp"

#include "lepcnn/errors.hpp"

namespace lepcnn {

namespace {

void check_shape(const Shape3& s) {
  if (s.height < 1 || s.width < 1 || s.depth < 1) {
    throw DimensionError("tensor dimensions must be >= 1, got " + s.to_string());
  }
}

}  // namespace

std::string Shape3::to_string() const {
  return std::to_string(height) + "x" + std::to_string(width) + "x" +
         std::to_string(depth);
}

Tensor3::Tensor3(Shape3 shape) : shape_(shape) {
  check_shape(shape_);
  elements_.assign(shape_.size(), Int256());
}

Tensor3::Tensor3(Shape3 shape, std::vector<Int256> elements)
    : shape_(shape), elements_(std::move(elements)) {
  check_shape(shape_);
  if (elements_.size() != shape_.size()) {
    throw DimensionError("element count " + std::to_string(elements_.size()) +
                         " does not match shape " + shape_.to_string());
  }
}

Tensor3 Tensor3::vector(std::vector<Int256> elements) {
  const auto n = static_cast<uint32_t>(elements.size());
  return Tensor3(Shape3{1, 1, n}, std::move(elements));
}

Tensor3 Tensor3::flattened() const& {
  return Tensor3::vector(elements_);
}

Tensor3 Tensor3::flattened() && {
  return Tensor3::vector(std::move(elements_));
}

}  // namespace lepcnn
