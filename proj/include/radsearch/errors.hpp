#pragma once

#include <stdexcept>
#include <string>

namespace radsearch {

// Every error carries a stable machine-readable code; the HTTP layer and the
// CLI both surface it verbatim.
class Error : public std::runtime_error {
 public:
  Error(std::string code, const std::string& message)
      : std::runtime_error(message), code_(std::move(code)) {}

  const std::string& code() const noexcept { return code_; }

 private:
  std::string code_;
};

#define RADSEARCH_DEFINE_ERROR(Name, Code)                                   \
  class Name : public Error {                                                \
   public:                                                                   \
    explicit Name(const std::string& message) : Error(Code, message) {}      \
  }

RADSEARCH_DEFINE_ERROR(DimensionError, "dimension_error");
RADSEARCH_DEFINE_ERROR(DegenerateInputError, "degenerate_input");
RADSEARCH_DEFINE_ERROR(ContractError, "contract_error");
RADSEARCH_DEFINE_ERROR(ConfigError, "config_error");
RADSEARCH_DEFINE_ERROR(LengthError, "length_error");
RADSEARCH_DEFINE_ERROR(VocabularyError, "vocabulary_error");
RADSEARCH_DEFINE_ERROR(InputError, "input_error");
RADSEARCH_DEFINE_ERROR(FormatError, "format_error");
RADSEARCH_DEFINE_ERROR(LexiconError, "lexicon_error");
RADSEARCH_DEFINE_ERROR(RangeError, "range_error");
RADSEARCH_DEFINE_ERROR(DataError, "data_error");
RADSEARCH_DEFINE_ERROR(TrainingError, "training_error");
RADSEARCH_DEFINE_ERROR(FingerprintError, "fingerprint_error");
RADSEARCH_DEFINE_ERROR(ArgumentError, "argument_error");
RADSEARCH_DEFINE_ERROR(StateError, "state_error");
RADSEARCH_DEFINE_ERROR(UnparseableQueryError, "unparseable_query");
RADSEARCH_DEFINE_ERROR(IoError, "io_error");

#undef RADSEARCH_DEFINE_ERROR

}  // namespace radsearch
