#include "shortorbit/types.hpp"

namespace shortorbit {

const char *to_string(ErrorCode code) {
  switch (code) {
  case ErrorCode::NonFinite: return "NonFinite";
  case ErrorCode::NoConvergence: return "NoConvergence";
  case ErrorCode::OutsideCollar: return "OutsideCollar";
  case ErrorCode::EmptyInterior: return "EmptyInterior";
  case ErrorCode::OutsideDomain: return "OutsideDomain";
  case ErrorCode::PointOutsideDomain: return "PointOutsideDomain";
  case ErrorCode::LeftDomain: return "LeftDomain";
  case ErrorCode::DegenerateTau: return "DegenerateTau";
  case ErrorCode::HessianAssemblyFailure: return "HessianAssemblyFailure";
  case ErrorCode::StageDiverged: return "StageDiverged";
  case ErrorCode::TauCollapse: return "TauCollapse";
  case ErrorCode::TauBlowup: return "TauBlowup";
  case ErrorCode::NoBouncesFound: return "NoBouncesFound";
  case ErrorCode::SpeedNotUnit: return "SpeedNotUnit";
  case ErrorCode::TangentialBounce: return "TangentialBounce";
  case ErrorCode::TangentialIncidence: return "TangentialIncidence";
  case ErrorCode::MarchStall: return "MarchStall";
  case ErrorCode::CollapsedEdge: return "CollapsedEdge";
  case ErrorCode::SchemaError: return "SchemaError";
  case ErrorCode::InvalidArgument: return "InvalidArgument";
  }
  return "Unknown";
}

void fail(ErrorCode code, const std::string &what) {
  throw Error(code, std::string(to_string(code)) + ": " + what);
}

} // namespace shortorbit
