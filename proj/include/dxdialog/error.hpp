#pragma once

#include <stdexcept>
#include <string>

namespace dxdialog {

/// Malformed or inconsistent knowledge-graph input.
class GraphError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Unknown concept id or a disease/symptom kind mismatch in a graph query.
class ConceptError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// next_turn on a session whose phase is terminated.
class SessionClosedError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Remote model backend exhausted its retries.
class BackendUnavailableError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Vector/matrix dimensions that do not line up.
class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Input that parses but violates a data contract (ids, lengths, vocabularies).
class ValidationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Filesystem failure; mapped to exit code 2 by the CLI.
class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace dxdialog
