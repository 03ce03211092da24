#pragma once

#include <stdexcept>
#include <string>

namespace pcan {

enum class Errc {
  invalid_argument,
  dimension_mismatch,
  bad_magic,
  truncated,
  dimension_overflow,
  io,
  numeric,
  unsupported,
  empty_instance,
};

const char* errc_name(Errc code);

// All library failures are reported through this type; `code()` lets callers
// (the CLI in particular) map failures to exit codes without string matching.
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

}  // namespace pcan
