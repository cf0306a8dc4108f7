#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace egoact {

// Error taxonomy, mapped to CLI exit codes in tools/main.cpp:
//   ConfigError -> 1, FormatError/IoError/GeometryError -> 2,
//   ShapeError/NumericError -> 3.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad usage, bad config file, bad override key/value.
struct ConfigError : Error {
  using Error::Error;
};

// Malformed on-disk data (manifests, sequence files, checkpoints).
struct FormatError : Error {
  using Error::Error;
};

// Filesystem failures (missing file, unwritable directory).
struct IoError : Error {
  using Error::Error;
};

// Non-projectable points and other geometric preconditions.
struct GeometryError : Error {
  using Error::Error;
};

// Tensor shape mismatches.
struct ShapeError : Error {
  using Error::Error;
};

// Non-finite values where finite ones are required.
struct NumericError : Error {
  using Error::Error;
};

using Rng = std::mt19937_64;

// Deterministic stream derivation: one global seed fans out into
// independent per-(epoch, sample) streams.
inline Rng make_rng(std::uint64_t seed, std::uint64_t a = 0, std::uint64_t b = 0) {
  std::seed_seq seq{seed, a, b};
  return Rng(seq);
}

}  // namespace egoact
