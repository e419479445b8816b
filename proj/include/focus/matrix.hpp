#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "focus/error.hpp"

namespace focus {

// Dense row-major batch of equally sized vectors.
struct RowMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  RowMatrix() = default;
  RowMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), data(r * c, 0.0) {}

  std::span<double> row(std::size_t i) { return {data.data() + i * cols, cols}; }
  std::span<const double> row(std::size_t i) const {
    return {data.data() + i * cols, cols};
  }

  void push_row(std::span<const double> values) {
    if (rows == 0 && data.empty()) cols = values.size();
    if (values.size() != cols) fail(ErrorKind::shape, "row length mismatch");
    data.insert(data.end(), values.begin(), values.end());
    ++rows;
  }
};

}  // namespace focus
