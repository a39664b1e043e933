#include "facediff/rng.hpp"

#include "facediff/error.hpp"

#include <algorithm>
#include <sstream>

namespace facediff {

Matrix Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = normal();
  }
  return m;
}

std::vector<std::size_t> Rng::sample_distinct(std::size_t n, std::size_t count) {
  if (count > n) throw ValidationError("sample_distinct: cannot draw more indices than available");
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    auto i = static_cast<std::size_t>(uniform_int(0, static_cast<std::int64_t>(n) - 1));
    if (std::find(out.begin(), out.end(), i) == out.end()) out.push_back(i);
  }
  return out;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_ << ' ' << normal_ << ' ' << uniform_;
  return os.str();
}

Rng Rng::deserialize(const std::string& state) {
  Rng rng;
  std::istringstream is(state);
  is >> rng.engine_ >> rng.normal_ >> rng.uniform_;
  if (!is) throw ValidationError("malformed rng state");
  return rng;
}

}  // namespace facediff
