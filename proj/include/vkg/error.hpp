#pragma once

#include <stdexcept>
#include <string>

namespace vkg {

/// Error raised by every module. `code()` is a stable kebab-case identifier
/// (e.g. "foreign-frame-ref") that the service layer forwards verbatim;
/// `context()` names the offending object (window id, file:line, ...).
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message, std::string context = {})
      : std::runtime_error(message), code_(std::move(code)), context_(std::move(context)) {}

  const std::string& code() const noexcept { return code_; }
  const std::string& context() const noexcept { return context_; }

 private:
  std::string code_;
  std::string context_;
};

}  // namespace vkg
