#ifndef LEGTK_ERROR_HPP
#define LEGTK_ERROR_HPP

#include <stdexcept>
#include <string>

namespace legtk {

enum class ErrorCode {
    Arity,
    Range,
    NoTailModel,
    NotTracked,
    NoStabilization,
    PatternNotApplicable,
    NotSimple,
    ConjugateNotFinite,
    HomologyNotSimple,
    UnsupportedFormat,
    Parse,
    Io,
};

inline const char* to_string(ErrorCode c)
{
    switch (c) {
    case ErrorCode::Arity: return "arity";
    case ErrorCode::Range: return "range";
    case ErrorCode::NoTailModel: return "no tail model";
    case ErrorCode::NotTracked: return "not tracked";
    case ErrorCode::NoStabilization: return "no stabilization found";
    case ErrorCode::PatternNotApplicable: return "pattern not applicable";
    case ErrorCode::NotSimple: return "not simple";
    case ErrorCode::ConjugateNotFinite: return "conjugate not finite";
    case ErrorCode::HomologyNotSimple: return "homology not simple";
    case ErrorCode::UnsupportedFormat: return "unsupported format";
    case ErrorCode::Parse: return "parse";
    case ErrorCode::Io: return "io";
    }
    return "unknown";
}

/// Structured failure raised by every module. The code identifies the
/// category, the message carries the specifics (offending side, q, ...).
class Error : public std::runtime_error
{
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what)
        , code_(code)
    {
    }

    ErrorCode code() const noexcept { return code_; }

private:
    ErrorCode code_;
};

} // namespace legtk

#endif // LEGTK_ERROR_HPP
