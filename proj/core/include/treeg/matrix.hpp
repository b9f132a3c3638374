#pragma once

#include <cstddef>
#include <vector>

namespace treeg {

// Minimal dense row-major matrix of doubles; used for per-dimension
// categorical tables, one-hot relaxations, and gradient arrays.
struct RowMatrix {
  int rows = 0;
  int cols = 0;
  std::vector<double> data;

  RowMatrix() = default;
  RowMatrix(int r, int c, double fill = 0.0)
      : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

  double& operator()(int r, int c) {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }
  double operator()(int r, int c) const {
    return data[static_cast<std::size_t>(r) * static_cast<std::size_t>(cols) + static_cast<std::size_t>(c)];
  }

  double* row(int r) { return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols); }
  const double* row(int r) const {
    return data.data() + static_cast<std::size_t>(r) * static_cast<std::size_t>(cols);
  }
};

// One-hot rows for a hard token sequence (tokens must be in [0, cols)).
inline RowMatrix one_hot_rows(const std::vector<int>& tokens, int cols) {
  RowMatrix m(static_cast<int>(tokens.size()), cols);
  for (int d = 0; d < m.rows; ++d) m(d, tokens[static_cast<std::size_t>(d)]) = 1.0;
  return m;
}

}  // namespace treeg
