#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace twin {

enum class Errc {
  MalformedHeader,
  DimensionMismatch,
  NonFinitePixel,
  NonMonotonicTimestamps,
  TooFewFrames,
  RankTooLarge,
  NonFiniteInput,
  SvdFailure,
  SingularSigma,
  WindowTooShort,
  TooFewSamples,
  TooManySamples,
  DegenerateKernel,
  NoData,
  SensorFault,
  MTooLarge,
  InsufficientHistory,
  IndexOutOfRange,
  RegionOutOfBounds,
  BadConfig,
  PortInUse,
  DiskFull,
  ClientOverflow,
  Io,
};

std::string_view to_string(Errc code) noexcept;

/// Every recoverable failure in the library is thrown as a twin::Error.
/// `index()` carries the offending element for NonFinitePixel and
/// IndexOutOfRange, and the required frame count for InsufficientHistory.
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what, long long index = -1)
      : std::runtime_error(std::string(to_string(code)) + ": " + what),
        code_(code),
        index_(index) {}

  Errc code() const noexcept { return code_; }
  long long index() const noexcept { return index_; }

 private:
  Errc code_;
  long long index_;
};

inline void require(bool cond, Errc code, const std::string& what) {
  if (!cond) throw Error(code, what);
}

/// Literal messages are only turned into a string when the check fails, so
/// this overload is safe on allocation-free paths.
inline void require(bool cond, Errc code, const char* what) {
  if (!cond) throw Error(code, what);
}

}  // namespace twin
