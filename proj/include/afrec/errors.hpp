#pragma once

#include <stdexcept>
#include <string>

namespace afrec {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Problems with input data: manifests, images, sampling preconditions.
class DataError : public Error {
 public:
  using Error::Error;
};

// Problems with model parameters, shapes, or checkpoints.
class ModelError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

#define AFREC_DEFINE_ERROR(Name, Base) \
  class Name : public Base {           \
   public:                             \
    using Base::Base;                  \
  }

AFREC_DEFINE_ERROR(MissingImage, DataError);
AFREC_DEFINE_ERROR(SchemaViolation, DataError);
AFREC_DEFINE_ERROR(DanglingPairReference, DataError);
AFREC_DEFINE_ERROR(EmptyCorpus, DataError);
AFREC_DEFINE_ERROR(ConfigInvalid, DataError);
AFREC_DEFINE_ERROR(NoNegativeAvailable, DataError);
AFREC_DEFINE_ERROR(InsufficientNegatives, DataError);
AFREC_DEFINE_ERROR(DecodeError, DataError);

AFREC_DEFINE_ERROR(ShapeMismatch, ModelError);
AFREC_DEFINE_ERROR(SchemaMismatch, ModelError);
AFREC_DEFINE_ERROR(EmptyBatch, ModelError);
AFREC_DEFINE_ERROR(UnscoredCase, ModelError);

#undef AFREC_DEFINE_ERROR

}  // namespace afrec
