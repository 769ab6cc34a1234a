#pragma once

#include <stdexcept>
#include <string>

namespace freqlens {

// Base class for every error the toolkit raises on purpose.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// A scalar argument violated its precondition (non-positive delta, negative
// squared distance, non-finite input, ...).
class invalid_parameter_error : public error {
    using error::error;
};

// A power ratio was requested for data whose total power is zero.
class undefined_ratio_error : public error {
    using error::error;
};

// An operation needs more points than the caller supplied.
class insufficient_data_error : public error {
    using error::error;
};

// A curve has no strictly positive slope, so it has no peak.
class no_peak_error : public error {
    using error::error;
};

// Matrix or vector dimensions do not line up.
class shape_error : public error {
    using error::error;
};

// A file (CSV, IDX, checkpoint, record) could not be parsed.
class parse_error : public error {
    using error::error;
};

// An experiment or CLI configuration is invalid.
class config_error : public error {
    using error::error;
};

}  // namespace freqlens
