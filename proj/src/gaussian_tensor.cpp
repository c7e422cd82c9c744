#include "pfp/gaussian_tensor.hpp"

#include <fmt/format.h>
#include <fmt/ranges.h>

namespace pfp {

const char* to_string(SpreadKind kind) {
  return kind == SpreadKind::Variance ? "variance" : "second_raw_moment";
}

std::size_t element_count(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  return fmt::format("({})", fmt::join(shape, ","));
}

}  // namespace pfp
