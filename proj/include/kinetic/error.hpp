#pragma once

#include <stdexcept>
#include <string>

namespace kinetic {

enum class ErrorKind {
  invalid_input,
  domain_violation,
  grazing_rejected,
  data_corrupt,
  singular_input,
  contract_violation,
  step_rejected,
  positivity_violation,
  degenerate_state,
  incomplete_run,
  fit_undefined,
  config_error,
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::invalid_input: return "invalid-input";
    case ErrorKind::domain_violation: return "domain-violation";
    case ErrorKind::grazing_rejected: return "grazing-rejected";
    case ErrorKind::data_corrupt: return "data-corrupt";
    case ErrorKind::singular_input: return "singular-input";
    case ErrorKind::contract_violation: return "contract-violation";
    case ErrorKind::step_rejected: return "step-rejected";
    case ErrorKind::positivity_violation: return "positivity-violation";
    case ErrorKind::degenerate_state: return "degenerate-state";
    case ErrorKind::incomplete_run: return "incomplete-run";
    case ErrorKind::fit_undefined: return "fit-undefined";
    case ErrorKind::config_error: return "config-error";
  }
  return "unknown";
}

/// Every failure raised by the library carries a kind so callers (and the CLI
/// exit-code mapping) can dispatch without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace kinetic
