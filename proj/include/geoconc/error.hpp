#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace geoconc {

// Error categories map onto CLI exit codes (config -> 2, numeric -> 3).
enum class ErrorCategory { invalid_input, numeric };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}
  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

class InvalidArgument : public Error {
 public:
  explicit InvalidArgument(const std::string& what)
      : Error(ErrorCategory::invalid_input, what) {}
};

class NumericError : public Error {
 public:
  explicit NumericError(const std::string& what)
      : Error(ErrorCategory::numeric, what) {}
};

// Operation needs a dense kernel but got a sampler-only one.
class UnsupportedRepresentation : public InvalidArgument {
 public:
  explicit UnsupportedRepresentation(const std::string& op)
      : InvalidArgument(op + ": requires a dense (finite) kernel") {}
};

class SingularSystem : public NumericError {
 public:
  explicit SingularSystem(const std::string& what) : NumericError(what) {}
};

struct Violation {
  std::size_t x;
  std::size_t s;
  double deficit;  // delta*nu(s) - P^m(x,s)
};

class CertificateViolation : public InvalidArgument {
 public:
  explicit CertificateViolation(std::vector<Violation> violations)
      : InvalidArgument(describe(violations)), violations_(std::move(violations)) {}
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string describe(const std::vector<Violation>& v) {
    std::string msg = "minorization certificate violated at (x,s):";
    for (std::size_t i = 0; i < v.size() && i < 8; ++i)
      msg += " (" + std::to_string(v[i].x) + "," + std::to_string(v[i].s) + ")";
    if (v.size() > 8) msg += " ... (" + std::to_string(v.size()) + " total)";
    return msg;
  }
  std::vector<Violation> violations_;
};

class AtomDegenerate : public InvalidArgument {
 public:
  AtomDegenerate()
      : InvalidArgument("delta = 1: C is an atom and the residual kernel is undefined on C") {}
};

class SkeletonRequired : public InvalidArgument {
 public:
  explicit SkeletonRequired(int m)
      : InvalidArgument("certificate lag m = " + std::to_string(m) +
                        " > 1: use the skeleton lift") {}
};

class MomentDiverges : public NumericError {
 public:
  MomentDiverges(double kappa, double kappa_star)
      : NumericError("exponential moment diverges: kappa = " + std::to_string(kappa) +
                     " >= critical kappa* = " + std::to_string(kappa_star)),
        kappa_star_(kappa_star) {}
  double kappa_star() const noexcept { return kappa_star_; }

 private:
  double kappa_star_;
};

class EnumerationLimit : public InvalidArgument {
 public:
  EnumerationLimit(double paths, double limit)
      : InvalidArgument("enumeration of " + std::to_string(paths) +
                        " paths exceeds the limit " + std::to_string(limit)) {}
};

class TruncationError : public InvalidArgument {
 public:
  TruncationError(std::size_t needed, std::size_t s_max)
      : InvalidArgument("certificate needs state " + std::to_string(needed) +
                        " but the ladder is truncated at s_max = " + std::to_string(s_max) +
                        "; increase s_max"),
        needed_(needed) {}
  std::size_t needed() const noexcept { return needed_; }

 private:
  std::size_t needed_;
};

class DegenerateFunctional : public InvalidArgument {
 public:
  DegenerateFunctional()
      : InvalidArgument("all oscillation constants are zero but t > 0") {}
};

}  // namespace geoconc
