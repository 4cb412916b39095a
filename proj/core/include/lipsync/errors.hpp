#pragma once

#include <stdexcept>
#include <string>

namespace lipsync {

/// Base class for all errors thrown by this library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A tensor or batch had the wrong rank, dimension, or channel count.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// Two configuration records (or a config and the data it describes) disagree.
class ConfigMismatch : public Error {
 public:
  using Error::Error;
};

/// Input data is too short to satisfy an operation's windowing precondition.
class InputTooShort : public Error {
 public:
  using Error::Error;
};

/// A requested window or index falls outside the available data.
class OutOfRange : public Error {
 public:
  using Error::Error;
};

/// A serialized file is corrupt, truncated, or has an unsupported version.
class FormatError : public Error {
 public:
  using Error::Error;
};

/// A caller violated an API contract (e.g. mutating a frozen parameter set).
class ContractViolation : public Error {
 public:
  using Error::Error;
};

/// External media could not be decoded or encoded.
class MediaError : public Error {
 public:
  using Error::Error;
};

}  // namespace lipsync
