#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>

#include <Eigen/Dense>

namespace usbf {

using cplx = std::complex<double>;
using cplxf = std::complex<float>;

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RMatrix = Eigen::MatrixXd;
using RVector = Eigen::VectorXd;

inline constexpr double kPi = 3.14159265358979323846;

// Error categories double as CLI exit-code classes, see commands.hpp.
enum class ErrorCode {
  invalid_argument,
  dimension_mismatch,
  index_out_of_range,
  singular_matrix,
  not_converged,
  degenerate_region,
  invalid_config,
  io_error,
  format_error,
  header_mismatch,
};

inline std::string_view to_string(ErrorCode code) {
  switch (code) {
    case ErrorCode::invalid_argument: return "invalid_argument";
    case ErrorCode::dimension_mismatch: return "dimension_mismatch";
    case ErrorCode::index_out_of_range: return "index_out_of_range";
    case ErrorCode::singular_matrix: return "singular_matrix";
    case ErrorCode::not_converged: return "not_converged";
    case ErrorCode::degenerate_region: return "degenerate_region";
    case ErrorCode::invalid_config: return "invalid_config";
    case ErrorCode::io_error: return "io_error";
    case ErrorCode::format_error: return "format_error";
    case ErrorCode::header_mismatch: return "header_mismatch";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& what)
      : std::runtime_error(what), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

inline void require(bool condition, ErrorCode code, const std::string& what) {
  if (!condition) throw Error(code, what);
}

}  // namespace usbf
