#pragma once

#include <stdexcept>
#include <string>

namespace trep {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define TREP_DEFINE_ERROR(Name)            \
  class Name : public Error {              \
   public:                                 \
    using Error::Error;                    \
  }

TREP_DEFINE_ERROR(InvalidArgument);
TREP_DEFINE_ERROR(BorderViolation);
TREP_DEFINE_ERROR(TooFewCandidates);
TREP_DEFINE_ERROR(BehindCamera);
TREP_DEFINE_ERROR(DegenerateBaseline);
TREP_DEFINE_ERROR(CheiralityViolation);
TREP_DEFINE_ERROR(TooFewCorrespondences);
TREP_DEFINE_ERROR(NoConsensus);
TREP_DEFINE_ERROR(ShapeMismatch);
TREP_DEFINE_ERROR(EmptyDataset);
TREP_DEFINE_ERROR(VersionMismatch);
TREP_DEFINE_ERROR(CorruptFile);
TREP_DEFINE_ERROR(TooFewObservations);
TREP_DEFINE_ERROR(NoDescriptors);
TREP_DEFINE_ERROR(KTooLarge);
TREP_DEFINE_ERROR(InfeasibleSpec);
TREP_DEFINE_ERROR(UnknownPoint);

#undef TREP_DEFINE_ERROR

}  // namespace trep
