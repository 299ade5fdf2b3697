#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace shortorbit {

/// Largest ambient dimension supported. Points live on the stack.
inline constexpr int kMaxDim = 4;

using Vec = Eigen::Matrix<double, Eigen::Dynamic, 1, Eigen::ColMajor, kMaxDim, 1>;
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::ColMajor, kMaxDim, kMaxDim>;

enum class ErrorCode {
  NonFinite,
  NoConvergence,
  OutsideCollar,
  EmptyInterior,
  OutsideDomain,
  PointOutsideDomain,
  LeftDomain,
  DegenerateTau,
  HessianAssemblyFailure,
  StageDiverged,
  TauCollapse,
  TauBlowup,
  NoBouncesFound,
  SpeedNotUnit,
  TangentialBounce,
  TangentialIncidence,
  MarchStall,
  CollapsedEdge,
  SchemaError,
  InvalidArgument,
};

const char *to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
  Error(ErrorCode code, const std::string &what) : std::runtime_error(what), code_(code) {}
  [[nodiscard]] ErrorCode code() const noexcept { return code_; }

private:
  ErrorCode code_;
};

[[noreturn]] void fail(ErrorCode code, const std::string &what);

} // namespace shortorbit
