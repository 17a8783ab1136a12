#pragma once

#include <stdexcept>
#include <string>

namespace lungdn {

/// Base class for every error the toolkit raises. `contract()` separates
/// caller mistakes (bad input, bad config) from internal faults; the CLI maps
/// them to exit codes 2 and 1.
class Error : public std::runtime_error {
 public:
  Error(std::string kind, const std::string& what, bool contract = true)
      : std::runtime_error(kind + ": " + what), kind_(std::move(kind)), contract_(contract) {}

  const std::string& kind() const noexcept { return kind_; }
  bool contract() const noexcept { return contract_; }

 private:
  std::string kind_;
  bool contract_;
};

#define LUNGDN_DEFINE_ERROR(Name, contract_flag)                  \
  class Name : public Error {                                     \
   public:                                                        \
    explicit Name(const std::string& what) : Error(#Name, what, contract_flag) {} \
  };

// signal_io
LUNGDN_DEFINE_ERROR(ParseError, true)
LUNGDN_DEFINE_ERROR(UnsupportedFormat, true)
LUNGDN_DEFINE_ERROR(EmptyAudio, true)
LUNGDN_DEFINE_ERROR(RangeError, true)
LUNGDN_DEFINE_ERROR(FilterLengthError, true)
LUNGDN_DEFINE_ERROR(IoError, true)
// segmenter
LUNGDN_DEFINE_ERROR(RateError, true)
LUNGDN_DEFINE_ERROR(CorpusTooSmall, true)
// noise_forge
LUNGDN_DEFINE_ERROR(LengthError, true)
LUNGDN_DEFINE_ERROR(DegenerateNoise, true)
LUNGDN_DEFINE_ERROR(PoolError, true)
// tensor_core / model
LUNGDN_DEFINE_ERROR(ShapeError, true)
LUNGDN_DEFINE_ERROR(TapeError, true)
LUNGDN_DEFINE_ERROR(ConfigError, true)
LUNGDN_DEFINE_ERROR(NumericFault, false)
LUNGDN_DEFINE_ERROR(CorruptCheckpoint, true)
// trainer
LUNGDN_DEFINE_ERROR(DivergenceFault, false)
// metrics
LUNGDN_DEFINE_ERROR(DegenerateReference, true)
LUNGDN_DEFINE_ERROR(ManifestError, true)

#undef LUNGDN_DEFINE_ERROR

}  // namespace lungdn
