#ifndef COPSENS_ERRORS_HPP
#define COPSENS_ERRORS_HPP

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <utility>

namespace copsens {

/// Base of every exception thrown by the library. `kind()` is a short
/// machine-readable tag ("dimension", "singular_fit", ...) used by the CLI
/// when it reports errors as JSON.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& message)
      : std::runtime_error(message), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

 private:
  std::string kind_;
};

/// Invalid input: wrong dimensions, malformed files, violated preconditions.
class InputError : public Error {
 public:
  using Error::Error;
};

/// A numerical procedure failed (non-convergence, singular systems that are
/// not the caller's fault, separation in a likelihood fit).
class NumericalError : public Error {
 public:
  using Error::Error;
};

namespace detail {

struct WarningSink {
  std::mutex mutex;
  std::function<void(const std::string&)> handler = [](const std::string& msg) {
    std::cerr << "copsens warning: " << msg << '\n';
  };
};

inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}

}  // namespace detail

/// Replace the process-wide warning handler. Passing an empty function
/// silences warnings.
inline void set_warning_handler(std::function<void(const std::string&)> handler) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  sink.handler = std::move(handler);
}

inline void warn(const std::string& message) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  if (sink.handler) sink.handler(message);
}

inline void require(bool condition, const char* kind, const std::string& message) {
  if (!condition) throw InputError(kind, message);
}

}  // namespace copsens

#endif  // COPSENS_ERRORS_HPP
