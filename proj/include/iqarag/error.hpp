#pragma once

#include <stdexcept>
#include <string>

namespace iqarag {

// Base of every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input: malformed files, out-of-range values, unknown ids, bad flags.
// The CLI maps these to exit code 1.
class ValidationError : public Error {
public:
    using Error::Error;
};

class FileNotFoundError : public ValidationError {
public:
    explicit FileNotFoundError(const std::string& path)
        : ValidationError("file not found: " + path), path_(path) {}
    const std::string& path() const noexcept { return path_; }

private:
    std::string path_;
};

// Operating-system level read/write failure.
class IoError : public Error {
public:
    using Error::Error;
};

// Connection refused, timeout, or a server that went away. Retryable.
class TransportError : public Error {
public:
    using Error::Error;
};

// The remote side answered, but the answer is unusable (missing word,
// non-finite value, explicit error payload). Not retried.
class BackendError : public Error {
public:
    using Error::Error;
};

}  // namespace iqarag
