#pragma once

#include <functional>
#include <iostream>
#include <stdexcept>
#include <string>

namespace physdf {

/// Base exception for every recoverable failure raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Process-wide sink for non-fatal diagnostics. Tests swap it out to count or
/// silence warnings.
inline std::function<void(const std::string&)>& warning_sink() {
  static std::function<void(const std::string&)> sink =
      [](const std::string& msg) { std::clog << "physdf warning: " << msg << '\n'; };
  return sink;
}

inline void warn(const std::string& msg) {
  if (auto& sink = warning_sink()) sink(msg);
}

}  // namespace physdf
