#pragma once

#include <stdexcept>
#include <string>

namespace mu2x {

// Coarse error families; the CLI maps them onto exit codes.
enum class ErrorFamily { Usage, Data, Numeric, Logic };

class Error : public std::runtime_error {
 public:
  Error(ErrorFamily family, const std::string& what)
      : std::runtime_error(what), family_(family) {}
  ErrorFamily family() const noexcept { return family_; }

 private:
  ErrorFamily family_;
};

#define MU2X_DEFINE_ERROR(Name, Family)                                  \
  class Name : public Error {                                            \
   public:                                                               \
    explicit Name(const std::string& what) : Error(ErrorFamily::Family,  \
                                                   #Name ": " + what) {} \
  };

// graph-store
MU2X_DEFINE_ERROR(MalformedRecord, Data)
MU2X_DEFINE_ERROR(UnknownRelationKind, Data)
MU2X_DEFINE_ERROR(DanglingEdge, Data)
MU2X_DEFINE_ERROR(DuplicateId, Data)
MU2X_DEFINE_ERROR(RelationConstraint, Data)
MU2X_DEFINE_ERROR(UnknownNode, Data)

// feature-encoding
MU2X_DEFINE_ERROR(MissingEmbedding, Data)
MU2X_DEFINE_ERROR(DimensionMismatch, Data)

// tensor-autodiff
MU2X_DEFINE_ERROR(ShapeMismatch, Logic)
MU2X_DEFINE_ERROR(EmptyMask, Logic)
MU2X_DEFINE_ERROR(NotScalarLoss, Logic)
MU2X_DEFINE_ERROR(TapeReused, Logic)
MU2X_DEFINE_ERROR(InputNotOnTape, Logic)

// gat-classifier
MU2X_DEFINE_ERROR(SingleClassTrainingSet, Data)
MU2X_DEFINE_ERROR(NonFiniteLoss, Numeric)
MU2X_DEFINE_ERROR(DimOutOfRange, Data)

// explainers
MU2X_DEFINE_ERROR(TooFewSamples, Data)
MU2X_DEFINE_ERROR(KernelSizeMismatch, Logic)
MU2X_DEFINE_ERROR(NeighborhoodTooSmall, Data)
MU2X_DEFINE_ERROR(NonConvergence, Numeric)
MU2X_DEFINE_ERROR(EmptyText, Data)
MU2X_DEFINE_ERROR(ModeUnavailable, Usage)

// evaluation-protocols
MU2X_DEFINE_ERROR(LengthMismatch, Data)
MU2X_DEFINE_ERROR(EmptyInput, Data)
MU2X_DEFINE_ERROR(LayoutMismatch, Data)
MU2X_DEFINE_ERROR(NoTestNodes, Data)

// synth / config
MU2X_DEFINE_ERROR(InvalidConfig, Usage)

#undef MU2X_DEFINE_ERROR

}  // namespace mu2x
