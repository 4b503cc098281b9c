#include "thermotwin/error.hpp"

namespace twin {

std::string_view to_string(Errc code) noexcept {
  switch (code) {
    case Errc::MalformedHeader: return "MalformedHeader";
    case Errc::DimensionMismatch: return "DimensionMismatch";
    case Errc::NonFinitePixel: return "NonFinitePixel";
    case Errc::NonMonotonicTimestamps: return "NonMonotonicTimestamps";
    case Errc::TooFewFrames: return "TooFewFrames";
    case Errc::RankTooLarge: return "RankTooLarge";
    case Errc::NonFiniteInput: return "NonFiniteInput";
    case Errc::SvdFailure: return "SvdFailure";
    case Errc::SingularSigma: return "SingularSigma";
    case Errc::WindowTooShort: return "WindowTooShort";
    case Errc::TooFewSamples: return "TooFewSamples";
    case Errc::TooManySamples: return "TooManySamples";
    case Errc::DegenerateKernel: return "DegenerateKernel";
    case Errc::NoData: return "NoData";
    case Errc::SensorFault: return "SensorFault";
    case Errc::MTooLarge: return "MTooLarge";
    case Errc::InsufficientHistory: return "InsufficientHistory";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::RegionOutOfBounds: return "RegionOutOfBounds";
    case Errc::BadConfig: return "BadConfig";
    case Errc::PortInUse: return "PortInUse";
    case Errc::DiskFull: return "DiskFull";
    case Errc::ClientOverflow: return "ClientOverflow";
    case Errc::Io: return "Io";
  }
  return "Unknown";
}

}  // namespace twin
