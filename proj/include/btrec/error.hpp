#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace btrec {

/// How a failure surfaces at the command line.
enum class ErrorKind {
  usage,     // bad flags or configuration (exit 2)
  data,      // bad or missing input data (exit 3)
  internal,  // everything else (exit 1)
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string name, const std::string& message)
      : std::runtime_error(message), kind_(kind), name_(std::move(name)) {}

  ErrorKind kind() const { return kind_; }
  /// Short machine-readable error name, e.g. "MissingColumn".
  const std::string& name() const { return name_; }

 private:
  ErrorKind kind_;
  std::string name_;
};

class DataError : public Error {
 public:
  DataError(std::string name, const std::string& message)
      : Error(ErrorKind::data, std::move(name), message) {}
};

class UsageError : public Error {
 public:
  explicit UsageError(const std::string& message)
      : Error(ErrorKind::usage, "UsageError", message) {}
  UsageError(std::string name, const std::string& message)
      : Error(ErrorKind::usage, std::move(name), message) {}
};

class InternalError : public Error {
 public:
  InternalError(std::string name, const std::string& message)
      : Error(ErrorKind::internal, std::move(name), message) {}
};

// Named failures. Each carries its own type so tests and callers can catch
// exactly what they expect.

struct MissingColumn : DataError {
  explicit MissingColumn(const std::string& column)
      : DataError("MissingColumn", "missing required column '" + column + "'"), column(column) {}
  std::string column;
};

struct UnknownPoi : DataError {
  explicit UnknownPoi(long long poi_id)
      : DataError("UnknownPoi", "check-in references unknown poi " + std::to_string(poi_id)),
        poi_id(poi_id) {}
  long long poi_id;
};

struct EmptyDataset : DataError {
  EmptyDataset() : DataError("EmptyDataset", "no trajectories to split") {}
};

struct InfeasibleConfig : UsageError {
  explicit InfeasibleConfig(const std::string& why) : UsageError("InfeasibleConfig", why) {}
};

struct ConfigError : UsageError {
  explicit ConfigError(const std::string& why) : UsageError("ConfigError", why) {}
};

struct TokenNotInVocab : DataError {
  explicit TokenNotInVocab(const std::string& token)
      : DataError("TokenNotInVocab", "token not in vocabulary: " + token), token(token) {}
  std::string token;
};

struct SequenceTooLong : DataError {
  SequenceTooLong(std::size_t len, std::size_t max_len)
      : DataError("SequenceTooLong", "sequence length " + std::to_string(len) +
                                         " exceeds max_len " + std::to_string(max_len)) {}
};

struct NoLabeledPositions : DataError {
  NoLabeledPositions() : DataError("NoLabeledPositions", "batch has no labeled positions") {}
};

struct DivergedLoss : InternalError {
  explicit DivergedLoss(int epoch)
      : InternalError("DivergedLoss", "loss became non-finite in epoch " + std::to_string(epoch)) {}
};

struct NoMask : DataError {
  NoMask() : DataError("NoMask", "query sentence has no [MASK] token") {}
};

struct MultipleMasks : DataError {
  MultipleMasks() : DataError("MultipleMasks", "query sentence has more than one [MASK] token") {}
};

struct VersionMismatch : DataError {
  VersionMismatch(unsigned found, unsigned expected)
      : DataError("VersionMismatch", "model file version " + std::to_string(found) +
                                         ", expected " + std::to_string(expected)) {}
};

struct CorruptFile : DataError {
  explicit CorruptFile(const std::string& why) : DataError("CorruptFile", why) {}
};

struct NoCandidatePois : DataError {
  NoCandidatePois()
      : DataError("NoCandidatePois", "vocabulary has no POIs besides the query endpoints") {}
};

struct EmptyTruth : DataError {
  EmptyTruth() : DataError("EmptyTruth", "ground-truth POI set is empty") {}
};

}  // namespace btrec
