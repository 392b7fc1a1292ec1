#pragma once

#include <stdexcept>
#include <string>

namespace efflex {

/// Precondition violated by the caller (bad shape, empty trajectory, k >= n, ...).
class DomainError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// File missing or unreadable.
class IoError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Binary artifact with wrong magic, version, or truncated payload.
class FormatError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Ingestion or filtering left no trajectories.
class EmptyDatasetError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Non-finite loss or parameters during training.
class NumericError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

} // namespace efflex
