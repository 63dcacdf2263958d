#pragma once

#include <stdexcept>
#include <string>

namespace xlr {

/// Malformed or inconsistent input data (corpus, topics, qrels, runs, configs).
class DataError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Bad command-line or configuration usage.
class UsageError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Any failure raised while obtaining sentence scores.
class ScorerError : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

/// Transport-level failure talking to an external scorer. Retriable.
class TransportError : public ScorerError {
  public:
    using ScorerError::ScorerError;
};

/// The external scorer answered, but the answer violates the wire contract.
class ProtocolError : public ScorerError {
  public:
    ProtocolError(std::string request_id, const std::string& what)
        : ScorerError("request " + request_id + ": " + what), request_id_(std::move(request_id))
    {}

    const std::string& request_id() const noexcept { return request_id_; }

  private:
    std::string request_id_;
};

}  // namespace xlr
