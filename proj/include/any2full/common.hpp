#pragma once

#include <stdexcept>
#include <string>

namespace a2f {

// Error taxonomy shared across the library. Everything derives from Error so
// callers can catch the whole family at the CLI boundary.
struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct ShapeError : Error {
  using Error::Error;
};
struct EmptyRow : Error {
  using Error::Error;
};
struct EmptyInput : Error {
  using Error::Error;
};
struct EmptySparseInput : Error {
  using Error::Error;
};
struct ScaleDegenerate : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct FormatError : Error {
  using Error::Error;
};
struct DataError : Error {
  using Error::Error;
};

inline constexpr const char* kArtifactVersion = "0.1.0";

}  // namespace a2f
