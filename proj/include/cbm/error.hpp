#pragma once

#include <stdexcept>
#include <string>

namespace cbm {

enum class ErrorKind {
  kInvalidArgument,  // precondition violated by the caller
  kInput,            // malformed file or record
  kConfig,           // bad or unknown configuration key/value
  kIo,               // file could not be opened or written
  kRuntime,          // numerical failure or inconsistent state
  kMismatch,         // model/records id-table hash mismatch
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void Fail(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

inline void Require(bool condition, const std::string& message) {
  if (!condition) Fail(ErrorKind::kInvalidArgument, message);
}

}  // namespace cbm
