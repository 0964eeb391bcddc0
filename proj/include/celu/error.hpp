#ifndef CELU_ERROR_HPP
#define CELU_ERROR_HPP

#include <stdexcept>
#include <string>

namespace celu {

enum class ErrorKind {
  config,
  shape,
  data,
  parse,
  range,
  logic,
  numeric,
  metric,
  protocol,
  size,
  channel_closed,
  io,
};

const char* error_kind_name(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void raise(ErrorKind kind, const std::string& message) {
  throw Error(kind, message);
}

}  // namespace celu

#endif  // CELU_ERROR_HPP
