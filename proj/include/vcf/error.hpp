#pragma once

#include <stdexcept>
#include <string>

namespace vcf {

// Base class for all library errors.
class error : public std::runtime_error {
public:
    explicit error(const std::string& msg) : std::runtime_error(msg) {}
};

// Unrecognized magic bytes or malformed container structure.
class format_error : public error {
public:
    explicit format_error(const std::string& msg) : error(msg) {}
};

// Declared sizes disagree with the payload actually present.
class length_error : public error {
public:
    explicit length_error(const std::string& msg) : error(msg) {}
};

// Structurally valid input that violates a schema contract
// (duplicate channel names, shape mismatch, wrong keypoint count).
class schema_error : public error {
public:
    explicit schema_error(const std::string& msg) : error(msg) {}
};

// Run-length mask data inconsistent with the declared canvas.
class mask_error : public error {
public:
    explicit mask_error(const std::string& msg) : error(msg) {}
};

// Stream or filesystem failure.
class io_error : public error {
public:
    explicit io_error(const std::string& msg) : error(msg) {}
};

// Value outside the mathematical domain of an operation
// (non-positive sigma, undefined loss, bad config field).
class domain_error : public error {
public:
    explicit domain_error(const std::string& msg) : error(msg) {}
};

// Rejection sampling exhausted its attempt budget.
class generation_error : public error {
public:
    explicit generation_error(const std::string& msg) : error(msg) {}
};

} // namespace vcf
