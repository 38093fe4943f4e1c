#pragma once

#include <stdexcept>
#include <string>

namespace cadbench {

// All library failures surface as this type; what() is a short, stable,
// lowercase message ("bad magic", "truncated", ...) that callers may match on.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cadbench
