#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace utc {

enum class Errc {
  parse,
  validation,
  dangling_reference,
  not_found,
  unreachable,
  precondition,
  invalid_action,
  oversaturated,
  duplicate,
  singular,
  protocol,
  turn_limit,
  not_enabled,
  missing_baseline,
  scenario_mismatch,
  io,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure raised by the library carries a machine-readable code so the
/// wire protocol and the CLI can report it without string matching.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace utc
