#pragma once

#include <stdexcept>
#include <string>

namespace atm {

// Error categories surfaced by the core. The C API maps these one-to-one onto
// its status codes, so keep the numbering in sync with atm.h.
enum class Errc {
  invalid_argument = 1,
  capacity = 2,
  empty_slice = 3,
  unsupported_profile = 4,
  protocol = 5,
  numerical = 6,
  io = 7,
  parse = 8,
  dimension_mismatch = 9,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

[[noreturn]] inline void fail(Errc code, const std::string& what) { throw Error(code, what); }

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) fail(code, what);
}

}  // namespace atm
