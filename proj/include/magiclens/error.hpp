#pragma once

#include <stdexcept>
#include <string>

namespace magiclens {

/// Invalid parameters handed to an operation (bad dims, radius 0, out-of-range FoV, ...).
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Failures while reading or writing persisted artifacts.
class FormatError : public std::runtime_error {
public:
    enum class Kind { BadMagic, VersionUnsupported, ShapeMismatch, CorruptPayload, Io, Schema };

    FormatError(Kind kind, const std::string& what) : std::runtime_error(name(kind) + ": " + what), kind_(kind) {}

    Kind kind() const noexcept { return kind_; }

    static std::string name(Kind k) {
        switch (k) {
            case Kind::BadMagic: return "BadMagic";
            case Kind::VersionUnsupported: return "VersionUnsupported";
            case Kind::ShapeMismatch: return "ShapeMismatch";
            case Kind::CorruptPayload: return "CorruptPayload";
            case Kind::Io: return "Io";
            case Kind::Schema: return "Schema";
        }
        return "Unknown";
    }

private:
    Kind kind_;
};

/// Text-format parse failure carrying the 1-based line number.
class ParseError : public FormatError {
public:
    ParseError(std::size_t line, const std::string& what)
        : FormatError(Kind::CorruptPayload, "line " + std::to_string(line) + ": " + what), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

}  // namespace magiclens
