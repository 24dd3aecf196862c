#pragma once

#include <stdexcept>
#include <string>

namespace nrp {

/// Bad input data: malformed files, violated invariants, unknown ids.
/// The CLI maps this family to exit code 2.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a caller violates a documented precondition.
class PreconditionError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Base of every failure reported by a scorer backend.
class ScorerError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class HandshakeError : public ScorerError {
public:
    using ScorerError::ScorerError;
};

class MissingItemError : public ScorerError {
public:
    explicit MissingItemError(std::string item_id)
        : ScorerError("scorer omitted item " + item_id), item_id_(std::move(item_id)) {}

    const std::string& item_id() const noexcept { return item_id_; }

private:
    std::string item_id_;
};

class NonFiniteScoreError : public ScorerError {
public:
    using ScorerError::ScorerError;
};

class ScorerTimeoutError : public ScorerError {
public:
    using ScorerError::ScorerError;
};

/// The adapter answered an item with an `error` field instead of a score.
class ItemRejectedError : public ScorerError {
public:
    using ScorerError::ScorerError;
};

/// Process spawn, pipe, socket or malformed-line failures.
class TransportError : public ScorerError {
public:
    using ScorerError::ScorerError;
};

}  // namespace nrp
