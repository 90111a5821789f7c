#pragma once

#include <stdexcept>
#include <string>

namespace nfcalib {

// Base for every error the library raises. kind() is a stable identifier used
// in machine-readable error reports.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
  virtual const char* kind() const noexcept { return "Error"; }
};

#define NFCALIB_DEFINE_ERROR(Name, Base)                              \
  class Name : public Base {                                          \
   public:                                                            \
    using Base::Base;                                                 \
    const char* kind() const noexcept override { return #Name; }      \
  };

// geometry
NFCALIB_DEFINE_ERROR(DegenerateGeometry, Error)

// I/O and validation
NFCALIB_DEFINE_ERROR(IoError, Error)
NFCALIB_DEFINE_ERROR(MissingFile, IoError)
NFCALIB_DEFINE_ERROR(MalformedInput, IoError)
NFCALIB_DEFINE_ERROR(DimensionMismatch, MalformedInput)
NFCALIB_DEFINE_ERROR(EmptyInput, Error)
NFCALIB_DEFINE_ERROR(ValidationError, Error)
NFCALIB_DEFINE_ERROR(ConfigError, Error)

// optical pipeline
NFCALIB_DEFINE_ERROR(NoTargetDetected, Error)
NFCALIB_DEFINE_ERROR(InsufficientData, Error)
NFCALIB_DEFINE_ERROR(FitFailed, Error)
NFCALIB_DEFINE_ERROR(AmbiguousOrdering, Error)

// radar pipeline
NFCALIB_DEFINE_ERROR(InsufficientClusters, Error)
NFCALIB_DEFINE_ERROR(LocalizationFailed, Error)

// registration
NFCALIB_DEFINE_ERROR(InsufficientCorrespondences, Error)

// synthetic scenes
NFCALIB_DEFINE_ERROR(SceneError, Error)

#undef NFCALIB_DEFINE_ERROR

}  // namespace nfcalib
