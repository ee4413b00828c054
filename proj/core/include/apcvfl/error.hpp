#pragma once

#include <stdexcept>
#include <string>

namespace apcvfl {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can map failures to exit codes without string matching.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Precondition violated by the caller: shape mismatch, out-of-range argument.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Invalid configuration (architecture widths, scenario files, registry).
class ConfigError : public Error {
 public:
  using Error::Error;
};

// Sample-ID sets that are expected to agree do not.
class AlignmentError : public Error {
 public:
  using Error::Error;
};

// Malformed input file. Messages carry the row/column location.
class ParseError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during optimisation (non-finite loss or gradient).
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Malformed frame or unexpected message on the wire. Connection-fatal.
class ProtocolError : public Error {
 public:
  using Error::Error;
};

// I/O failure on a transport. The operation may be retried.
class TransportError : public Error {
 public:
  using Error::Error;
};

}  // namespace apcvfl
