#include "atm/error.hpp"

namespace atm {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::invalid_argument: return "invalid_argument";
    case Errc::capacity: return "capacity";
    case Errc::empty_slice: return "empty_slice";
    case Errc::unsupported_profile: return "unsupported_profile";
    case Errc::protocol: return "protocol";
    case Errc::numerical: return "numerical";
    case Errc::io: return "io";
    case Errc::parse: return "parse";
    case Errc::dimension_mismatch: return "dimension_mismatch";
  }
  return "unknown";
}

}  // namespace atm
