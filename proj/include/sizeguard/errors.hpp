#ifndef SIZEGUARD_ERRORS_HPP
#define SIZEGUARD_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace sizeguard {

// Invalid user-supplied data: malformed files, out-of-range parameters,
// violated type invariants. Maps to CLI exit code 2.
class input_error : public std::runtime_error {
 public:
  explicit input_error(const std::string& what) : std::runtime_error(what) {}
};

// Numerical degeneracy that valid inputs should never trigger: failed
// positive-definite factorization, order search exceeding its cap.
// Maps to CLI exit code 4.
class numerical_error : public std::runtime_error {
 public:
  explicit numerical_error(const std::string& what)
      : std::runtime_error(what) {}
};

}  // namespace sizeguard

#endif
