#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace acss {

enum class ErrorKind {
  invalid_spec,
  configuration,
  dimension,
  parameter,
  invalid_split,
  sub_nyquist_violation,
  guard_violation,
  criterion_unsatisfiable,
};

inline std::string_view to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_spec: return "invalid-spec";
    case ErrorKind::configuration: return "configuration";
    case ErrorKind::dimension: return "dimension";
    case ErrorKind::parameter: return "parameter";
    case ErrorKind::invalid_split: return "invalid-split";
    case ErrorKind::sub_nyquist_violation: return "sub-nyquist-violation";
    case ErrorKind::guard_violation: return "guard-violation";
    case ErrorKind::criterion_unsatisfiable: return "criterion-unsatisfiable";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (and the
/// CLI exit-code mapping) can tell configuration mistakes from runtime ones.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

namespace detail {

inline void require(bool ok, ErrorKind kind, const std::string& what) {
  if (!ok) throw Error(kind, what);
}

}  // namespace detail
}  // namespace acss
