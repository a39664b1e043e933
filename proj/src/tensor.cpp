#include "facediff/tensor.hpp"

#include "facediff/error.hpp"

#include <string>

namespace facediff {

void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(what) + ": shape mismatch " + std::to_string(a.rows()) + "x" +
                         std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                         std::to_string(b.cols()));
  }
}

bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace facediff
