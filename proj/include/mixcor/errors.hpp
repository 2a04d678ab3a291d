#pragma once

#include <stdexcept>
#include <string>

namespace mixcor {

// Base class for every error raised by the library. Callers that only care
// about "did it fail" catch this; tests and the CLI dispatch on the subclass.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define MIXCOR_DEFINE_ERROR(Name)            \
  class Name : public Error {                \
   public:                                   \
    using Error::Error;                      \
  }

MIXCOR_DEFINE_ERROR(InvalidArgument);
MIXCOR_DEFINE_ERROR(OutOfRange);
MIXCOR_DEFINE_ERROR(SingularCorrelation);

// Data ingestion.
MIXCOR_DEFINE_ERROR(CodeOutOfRange);
MIXCOR_DEFINE_ERROR(NonFiniteCell);
MIXCOR_DEFINE_ERROR(TooFewRows);
MIXCOR_DEFINE_ERROR(ParseError);

// Equation system construction.
MIXCOR_DEFINE_ERROR(UnknownPair);
MIXCOR_DEFINE_ERROR(UncoveredParameter);

// Estimation.
MIXCOR_DEFINE_ERROR(DegenerateWeight);
MIXCOR_DEFINE_ERROR(LineSearchFailure);
MIXCOR_DEFINE_ERROR(NonFiniteLoss);

// Simulation.
MIXCOR_DEFINE_ERROR(NotPositiveDefinite);
MIXCOR_DEFINE_ERROR(AllReplicationsFailed);

#undef MIXCOR_DEFINE_ERROR

class EmptyCategory : public Error {
 public:
  EmptyCategory(std::string variable, int category)
      : Error("empty category " + std::to_string(category) + " in ordinal variable '" +
              variable + "'"),
        variable_(std::move(variable)),
        category_(category) {}

  const std::string& variable() const noexcept { return variable_; }
  int category() const noexcept { return category_; }

 private:
  std::string variable_;
  int category_;
};

}  // namespace mixcor
