#ifndef MFK_ERRORS_HPP
#define MFK_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace mfk {

// Broad failure categories; the CLI maps each one to an exit code.
enum class ErrorCategory { Usage, Data, Numerical };

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, std::string kind, const std::string& detail)
      : std::runtime_error(kind + ": " + detail), category_(category), kind_(std::move(kind)), detail_(detail) {}

  ErrorCategory category() const noexcept { return category_; }
  // Short machine-readable tag, e.g. "ill-conditioned".
  const std::string& kind() const noexcept { return kind_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  ErrorCategory category_;
  std::string kind_;
  std::string detail_;
};

struct InvalidHyperparameter : Error {
  explicit InvalidHyperparameter(const std::string& d) : Error(ErrorCategory::Usage, "invalid-hyperparameter", d) {}
};

struct ShapeError : Error {
  explicit ShapeError(const std::string& d) : Error(ErrorCategory::Data, "shape", d) {}
};

struct StructuralError : Error {
  explicit StructuralError(const std::string& d) : Error(ErrorCategory::Data, "structure", d) {}
};

struct ParseError : Error {
  explicit ParseError(const std::string& d) : Error(ErrorCategory::Data, "parse", d) {}
};

struct NestingError : Error {
  explicit NestingError(const std::string& d) : Error(ErrorCategory::Data, "nesting", d) {}
};

struct InsufficientData : Error {
  explicit InsufficientData(const std::string& d) : Error(ErrorCategory::Data, "insufficient-data", d) {}
};

class IllConditioned : public Error {
 public:
  IllConditioned(const std::string& d, double last_nugget)
      : Error(ErrorCategory::Numerical, "ill-conditioned", d), last_nugget_(last_nugget) {}
  double last_nugget() const noexcept { return last_nugget_; }

 private:
  double last_nugget_;
};

struct SingularSystem : Error {
  explicit SingularSystem(const std::string& d) : Error(ErrorCategory::Numerical, "singular-system", d) {}
};

struct DegeneratePosterior : Error {
  explicit DegeneratePosterior(const std::string& d) : Error(ErrorCategory::Numerical, "degenerate-posterior", d) {}
};

struct OptimizationFailed : Error {
  explicit OptimizationFailed(const std::string& d) : Error(ErrorCategory::Numerical, "optimization-failed", d) {}
};

struct LevelFitError : Error {
  LevelFitError(int level, const Error& cause)
      : Error(cause.category(), cause.kind(), "level " + std::to_string(level) + ": " + cause.detail()), level_(level) {}
  int level() const noexcept { return level_; }

 private:
  int level_;
};

}  // namespace mfk

#endif  // MFK_ERRORS_HPP
