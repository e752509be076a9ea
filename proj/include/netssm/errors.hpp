#pragma once

#include <stdexcept>
#include <string>

namespace netssm {

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Malformed container or unknown magic.
struct FormatError : Error {
  using Error::Error;
};

// Record header declares more bytes than remain in the stream.
struct TruncationError : Error {
  using Error::Error;
};

// A domain-type invariant was violated (lengths, normalization, ...).
struct InvariantError : Error {
  using Error::Error;
};

// Token ID outside the vocabulary, or unknown special token.
struct VocabularyError : Error {
  using Error::Error;
};

// Token frame of the wrong shape.
struct FrameError : Error {
  using Error::Error;
};

// Packet does not match the protocol stack required by a FrameProfile.
struct ProfileMismatchError : Error {
  using Error::Error;
};

struct InsufficientDataError : Error {
  using Error::Error;
};

struct RangeError : Error {
  using Error::Error;
};

struct ContextError : Error {
  using Error::Error;
};

struct ShapeError : Error {
  using Error::Error;
};

struct NumericError : Error {
  using Error::Error;
};

struct InputError : Error {
  using Error::Error;
};

// Generation ran out of retry budget before reaching its packet target.
struct PartialOutputError : Error {
  PartialOutputError(const std::string& what, std::size_t produced, std::size_t target)
      : Error(what), produced(produced), target(target) {}
  std::size_t produced;
  std::size_t target;
};

struct PairingError : Error {
  using Error::Error;
};

// A phase of a chained generation failed; carries the phase name.
struct ChainError : Error {
  ChainError(const std::string& what, std::string phase)
      : Error(what), phase(std::move(phase)) {}
  std::string phase;
};

}  // namespace netssm
