#include "pddn/error.hpp"

namespace pddn {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::BadMagic: return "BadMagic";
    case Errc::UnsupportedDatatype: return "UnsupportedDatatype";
    case Errc::UnsupportedDimensionality: return "UnsupportedDimensionality";
    case Errc::TruncatedHeader: return "TruncatedHeader";
    case Errc::TruncatedData: return "TruncatedData";
    case Errc::IoError: return "IoError";
    case Errc::ValueOutOfRange: return "ValueOutOfRange";
    case Errc::InvalidAtlas: return "InvalidAtlas";
    case Errc::DuplicateId: return "DuplicateId";
    case Errc::MissingId: return "MissingId";
    case Errc::UnknownRelevance: return "UnknownRelevance";
    case Errc::EmptyFile: return "EmptyFile";
    case Errc::NonFinite: return "NonFinite";
    case Errc::InvalidArgument: return "InvalidArgument";
    case Errc::IndivisibleDims: return "IndivisibleDims";
    case Errc::DimMismatch: return "DimMismatch";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::InvalidStage: return "InvalidStage";
    case Errc::EmptyCohort: return "EmptyCohort";
    case Errc::NoHealthySubjects: return "NoHealthySubjects";
    case Errc::SingleClass: return "SingleClass";
    case Errc::CommandNotFound: return "CommandNotFound";
    case Errc::CommandFailed: return "CommandFailed";
    case Errc::OutputMissing: return "OutputMissing";
    case Errc::InvalidConfig: return "InvalidConfig";
  }
  return "Unknown";
}

Error::Error(Errc code, const std::string& detail)
    : std::runtime_error(std::string(errc_name(code)) + ": " + detail), code_(code) {}

}  // namespace pddn
