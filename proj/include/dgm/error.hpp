#pragma once

#include <stdexcept>
#include <string>

namespace dgm {

// Error categories surfaced by the library. The CLI maps each kind to an
// exit code, so keep this list in sync with cli.cpp.
enum class ErrorKind {
  kDimension,
  kConfig,
  kContract,
  kParse,
  kData,
  kSampling,
  kTraining,
  kIo,
};

const char* to_string(ErrorKind kind);

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

 private:
  ErrorKind kind_;
};

inline Error dimension_error(const std::string& m) { return {ErrorKind::kDimension, m}; }
inline Error config_error(const std::string& m) { return {ErrorKind::kConfig, m}; }
inline Error contract_error(const std::string& m) { return {ErrorKind::kContract, m}; }
inline Error parse_error(const std::string& m) { return {ErrorKind::kParse, m}; }
inline Error data_error(const std::string& m) { return {ErrorKind::kData, m}; }
inline Error sampling_error(const std::string& m) { return {ErrorKind::kSampling, m}; }
inline Error training_error(const std::string& m) { return {ErrorKind::kTraining, m}; }
inline Error io_error(const std::string& m) { return {ErrorKind::kIo, m}; }

}  // namespace dgm
