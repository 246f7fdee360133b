#include "fairforest/error.hpp"

namespace fairforest {

const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kConfig: return "config";
    case ErrorKind::kShape: return "shape";
    case ErrorKind::kDomain: return "domain";
    case ErrorKind::kData: return "data";
    case ErrorKind::kNumerical: return "numerical";
    case ErrorKind::kPrecondition: return "precondition";
    case ErrorKind::kIo: return "io";
  }
  return "unknown";
}

}  // namespace fairforest
