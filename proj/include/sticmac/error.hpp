#pragma once

#include <stdexcept>
#include <string>

namespace sticmac {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Raised for out-of-range configuration or arguments; the CLI maps it to exit code 2.
class ValidationError : public Error {
public:
    ValidationError(std::string field, const std::string& message)
        : Error(message)
        , field_(std::move(field))
    {
    }

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

} // namespace sticmac
