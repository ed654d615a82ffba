#pragma once

#include <stdexcept>
#include <string>

namespace rise {

// Error taxonomy mirrors the CLI exit codes: ConfigError -> 1,
// BackendError (and subclasses) -> 2, InvariantError -> 3.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct ConfigError : Error {
    using Error::Error;
};

struct BackendError : Error {
    using Error::Error;
};

// Transient network failure; safe to retry idempotent requests.
struct TransportError : BackendError {
    using BackendError::BackendError;
};

// Server replied but the payload did not match the wire contract.
// Carries the raw payload for postmortems.
struct ProtocolError : BackendError {
    ProtocolError(const std::string& msg, std::string payload)
        : BackendError(msg), raw_payload(std::move(payload)) {}
    std::string raw_payload;
};

struct CapabilityError : BackendError {
    using BackendError::BackendError;
};

// Oracle-world failures: enumeration bound exceeded, contradictory
// observations, unknown symbols.
struct OracleError : BackendError {
    using BackendError::BackendError;
};

struct InvariantError : Error {
    using Error::Error;
};

} // namespace rise
