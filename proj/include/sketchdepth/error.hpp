#pragma once

#include <stdexcept>
#include <string>

namespace sketchdepth {

/// Failure categories. The CLI prints the category as a machine-parseable
/// prefix (`error[<category>]: ...`).
enum class ErrorCategory {
  Domain,          // argument outside the mathematical domain
  Shape,           // dimension mismatch between buffers
  Format,          // malformed file or record
  DegenerateInput, // not enough distinct / non-collinear sites
  UndefinedLoss,   // loss over an empty pixel set
  UndefinedMetric, // evaluation without valid ground truth
  Parameter,       // non-finite or inconsistent network parameters
  Contract,        // API misuse (stale activations, violated precondition)
  Io,              // filesystem failure
  Spec,            // invalid synthetic scene description
};

inline const char* category_name(ErrorCategory c) {
  switch (c) {
    case ErrorCategory::Domain: return "domain";
    case ErrorCategory::Shape: return "shape";
    case ErrorCategory::Format: return "format";
    case ErrorCategory::DegenerateInput: return "degenerate-input";
    case ErrorCategory::UndefinedLoss: return "undefined-loss";
    case ErrorCategory::UndefinedMetric: return "undefined-metric";
    case ErrorCategory::Parameter: return "parameter";
    case ErrorCategory::Contract: return "contract";
    case ErrorCategory::Io: return "io";
    case ErrorCategory::Spec: return "spec";
  }
  return "unknown";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorCategory category, const std::string& what)
      : std::runtime_error(what), category_(category) {}

  ErrorCategory category() const noexcept { return category_; }

 private:
  ErrorCategory category_;
};

#define SKETCHDEPTH_DEFINE_ERROR(Name, Cat)                              \
  struct Name : Error {                                                  \
    explicit Name(const std::string& what) : Error(ErrorCategory::Cat, what) {} \
  };

SKETCHDEPTH_DEFINE_ERROR(DomainError, Domain)
SKETCHDEPTH_DEFINE_ERROR(ShapeError, Shape)
SKETCHDEPTH_DEFINE_ERROR(FormatError, Format)
SKETCHDEPTH_DEFINE_ERROR(DegenerateInputError, DegenerateInput)
SKETCHDEPTH_DEFINE_ERROR(UndefinedLossError, UndefinedLoss)
SKETCHDEPTH_DEFINE_ERROR(UndefinedMetricError, UndefinedMetric)
SKETCHDEPTH_DEFINE_ERROR(ParameterError, Parameter)
SKETCHDEPTH_DEFINE_ERROR(ContractError, Contract)
SKETCHDEPTH_DEFINE_ERROR(IoError, Io)
SKETCHDEPTH_DEFINE_ERROR(SpecError, Spec)

#undef SKETCHDEPTH_DEFINE_ERROR

}  // namespace sketchdepth
