#pragma once

#include <stdexcept>
#include <string>

namespace talo {

enum class ErrorKind {
    InvalidArgument,
    InvalidDepth,
    InsufficientPoints,
    InsufficientFrames,
    DegenerateConfiguration,
    DegenerateAverage,
    DegenerateBaseline,
    NoOverlap,
    ParseError,
    IoError,
    GenerationError,
    EmptyInput,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

} // namespace talo
