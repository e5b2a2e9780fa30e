#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qknit {

// Each value doubles as the CLI exit code for that failure class.
enum class errc : int {
  invalid_argument = 2,
  io = 3,
  version_mismatch = 4,
  truncated_file = 5,
  schema = 6,
  impossible_outcome = 7,
  insufficient_data = 8,
  non_monotone = 9,
};

class error : public std::runtime_error {
 public:
  error(errc code, const std::string& what) : std::runtime_error(what), code_(code) {}

  errc code() const noexcept { return code_; }

 private:
  errc code_;
};

[[noreturn]] inline void fail(errc code, const std::string& what) { throw error(code, what); }

inline void require(bool cond, std::string_view what) {
  if (!cond) fail(errc::invalid_argument, std::string(what));
}

}  // namespace qknit
