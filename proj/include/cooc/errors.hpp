#pragma once

#include <functional>
#include <iostream>
#include <mutex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>

namespace cooc {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Shapes or dimensions of operands disagree.
class DimensionError : public Error {
 public:
  using Error::Error;
};

// Argument outside the domain of the operation (D < 2, empty offsets, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Bad magic or version in a binary container.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Declared shape and payload length disagree.
class CorruptionError : public Error {
 public:
  using Error::Error;
};

// Payload decoded but violates a value invariant (NaN/Inf, overlapping sets).
class ValidationError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

using WarningHandler = std::function<void(std::string_view)>;

namespace detail {

struct WarningSink {
  std::mutex mutex;
  WarningHandler handler = [](std::string_view msg) {
    std::cerr << "warning: " << msg << '\n';
  };
};

inline WarningSink& warning_sink() {
  static WarningSink sink;
  return sink;
}

}  // namespace detail

/// Installs a process-wide handler for non-fatal diagnostics and returns the
/// previous one. Calls into the handler are serialized.
inline WarningHandler set_warning_handler(WarningHandler handler) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  return std::exchange(sink.handler, std::move(handler));
}

inline void warn(std::string_view message) {
  auto& sink = detail::warning_sink();
  std::lock_guard lock(sink.mutex);
  if (sink.handler) sink.handler(message);
}

}  // namespace cooc
