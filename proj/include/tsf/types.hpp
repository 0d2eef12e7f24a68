#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace tsf {

// 64-bit floats throughout: the test suite leans on finite-difference
// gradient checks that 32-bit precision cannot pass.
using Scalar = double;

// Row-major so the flat data buffer of a tensor reads in row order.
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using Index = Eigen::Index;
using IndexList = std::vector<Index>;

namespace detail {

inline void format_into(std::ostringstream&) {}

template <typename T, typename... Rest>
void format_into(std::ostringstream& os, const T& head, const Rest&... rest) {
  os << head;
  format_into(os, rest...);
}

}  // namespace detail

template <typename... Args>
std::string strcat(const Args&... args) {
  std::ostringstream os;
  detail::format_into(os, args...);
  return os.str();
}

inline std::string shape_str(const Matrix& m) {
  return strcat(m.rows(), "x", m.cols());
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw std::invalid_argument(strcat(args...));
}

template <typename... Args>
void require(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

}  // namespace tsf
