#pragma once

#include <stdexcept>
#include <string>

namespace hazardiv {

/// Base for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Input and contract failures: malformed files, invalid values, violated
// preconditions. The CLI maps these to exit code 2.
class InputError : public Error {
public:
    using Error::Error;
};

class SchemaError : public InputError {
public:
    using InputError::InputError;
};

class ValueError : public InputError {
public:
    using InputError::InputError;
};

class DomainError : public InputError {
public:
    using InputError::InputError;
};

class ContractError : public InputError {
public:
    using InputError::InputError;
};

class InvalidScenarioError : public InputError {
public:
    using InputError::InputError;
};

class EmptyEventsError : public InputError {
public:
    using InputError::InputError;
};

// Estimation failures on otherwise valid input. The CLI maps these to
// exit code 3.
class EstimationError : public Error {
public:
    using Error::Error;
};

class SeparationError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class ConvergenceError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class WeakIdentificationError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class DegenerateEstimateError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class DegenerateDenominatorError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class NoRootError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class MultipleRootsError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class SingularInformationError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class FlatScoreError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

class FlatLikelihoodError : public EstimationError {
public:
    using EstimationError::EstimationError;
};

}  // namespace hazardiv
