#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace canm {

/// Base class for all library errors.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not line up.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// A NaN or infinity showed up where finite values are required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Input data that violates a precondition (too short, zero variance, ...).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Training could not produce a finite objective.
class TrainingError : public Error {
 public:
  using Error::Error;
};

enum class Verdict { forward, backward, undecided };

constexpr std::string_view to_string(Verdict v) noexcept {
  switch (v) {
    case Verdict::forward: return "Forward";
    case Verdict::backward: return "Backward";
    case Verdict::undecided: return "Undecided";
  }
  return "Undecided";
}

inline Verdict verdict_from_string(std::string_view s) {
  if (s == "Forward") return Verdict::forward;
  if (s == "Backward") return Verdict::backward;
  if (s == "Undecided") return Verdict::undecided;
  throw DataError("unknown verdict '" + std::string(s) + "'");
}

}  // namespace canm
