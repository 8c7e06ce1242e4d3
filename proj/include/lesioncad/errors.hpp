#pragma once

#include <stdexcept>
#include <string>

namespace lesioncad {

// Invalid configuration or specification values. Maps to CLI exit code 2.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed or inconsistent input files (CSV rows, study directories).
class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Cohort cannot be split into the requested number of folds.
class SplitError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class TrainingError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class MetricError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace lesioncad
