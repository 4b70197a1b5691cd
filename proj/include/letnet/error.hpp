#pragma once

#include <stdexcept>
#include <string>

namespace letnet {

// Invalid shapes, hyperparameters or configuration values.
class ConfigError : public std::invalid_argument {
   public:
    using std::invalid_argument::invalid_argument;
};

// API misuse, e.g. calling backward twice on the same graph.
class UsageError : public std::logic_error {
   public:
    using std::logic_error::logic_error;
};

// Malformed or out-of-range input data (files, label values).
class DataError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

// Non-finite values or other numeric breakdown.
class NumericError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

class IoError : public std::runtime_error {
   public:
    using std::runtime_error::runtime_error;
};

}  // namespace letnet
