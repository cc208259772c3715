#pragma once

#include <stdexcept>
#include <string>

namespace eids {

// Base class for all toolkit errors. Catch this at the CLI boundary.
struct Error : std::runtime_error {
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

#define EIDS_ERROR_TYPE(Name)                                    \
  struct Name : Error {                                          \
    explicit Name(const std::string& msg) : Error(msg) {}        \
  }

// Capture parsing
EIDS_ERROR_TYPE(UnknownMagic);
EIDS_ERROR_TYPE(TruncatedHeader);
EIDS_ERROR_TYPE(TruncatedRecord);

// Flow preprocessing
EIDS_ERROR_TYPE(NotIPv4);
EIDS_ERROR_TYPE(TooShort);
EIDS_ERROR_TYPE(EmptyFlow);
EIDS_ERROR_TYPE(ViolatedMonotonicity);
EIDS_ERROR_TYPE(UnknownFilter);

// Model
EIDS_ERROR_TYPE(ShapeMismatch);
EIDS_ERROR_TYPE(NonFiniteActivation);
EIDS_ERROR_TYPE(EmptyDataset);

// Weight archives
EIDS_ERROR_TYPE(VersionMismatch);
EIDS_ERROR_TYPE(ChecksumMismatch);

// Configuration / dataset plumbing
EIDS_ERROR_TYPE(InsufficientSamples);
EIDS_ERROR_TYPE(InvalidSpec);
EIDS_ERROR_TYPE(InputError);

#undef EIDS_ERROR_TYPE

}  // namespace eids
