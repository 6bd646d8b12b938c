#pragma once

#include <stdexcept>
#include <string>

namespace attrib {

// Exit-code class a CLI failure maps to.
enum class ErrorKind { Usage = 1, Validation = 2, Io = 3 };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct UsageError : Error {
    explicit UsageError(const std::string& w) : Error(ErrorKind::Usage, w) {}
};

struct DimensionError : Error {
    explicit DimensionError(const std::string& w) : Error(ErrorKind::Validation, "dimension error: " + w) {}
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(ErrorKind::Validation, "config error: " + w) {}
};

struct ValidationError : Error {
    explicit ValidationError(const std::string& w) : Error(ErrorKind::Validation, "validation error: " + w) {}
};

struct ParseError : Error {
    explicit ParseError(const std::string& w) : Error(ErrorKind::Validation, "parse error: " + w) {}
};

struct FormatError : Error {
    explicit FormatError(const std::string& w) : Error(ErrorKind::Validation, "format error: " + w) {}
};

struct LookupError : Error {
    explicit LookupError(const std::string& w) : Error(ErrorKind::Validation, "lookup error: " + w) {}
};

struct IoError : Error {
    explicit IoError(const std::string& w) : Error(ErrorKind::Io, "I/O error: " + w) {}
};

}  // namespace attrib
