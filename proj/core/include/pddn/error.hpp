#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace pddn {

enum class Errc {
  // volume_io
  BadMagic,
  UnsupportedDatatype,
  UnsupportedDimensionality,
  TruncatedHeader,
  TruncatedData,
  IoError,
  ValueOutOfRange,
  InvalidAtlas,
  // priors
  DuplicateId,
  MissingId,
  UnknownRelevance,
  EmptyFile,
  // numerics and shapes
  NonFinite,
  InvalidArgument,
  IndivisibleDims,
  DimMismatch,
  LengthMismatch,
  ChannelMismatch,
  ShapeMismatch,
  // training
  InvalidStage,
  EmptyCohort,
  NoHealthySubjects,
  SingleClass,
  // preprocess
  CommandNotFound,
  CommandFailed,
  OutputMissing,
  InvalidConfig,
};

std::string_view errc_name(Errc code) noexcept;

/// Every failure in the library surfaces as this exception; `code()` is the
/// stable part, `what()` carries "<ErrcName>: <detail>".
class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail);

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

}  // namespace pddn
