#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qlc {

enum class ErrorKind {
    Domain,
    NonConvergence,
    QuadratureFailure,
    Numerical,
    NotHurwitz,
    SingularSystem,
    IllPosed,
    NonStrictlyProper,
    Diverged,
    DegenerateMetric,
    EvaluationFailed,
    AllEvaluationsFailed,
    Config,
};

constexpr std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
    case ErrorKind::Domain: return "DomainError";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::QuadratureFailure: return "QuadratureFailure";
    case ErrorKind::Numerical: return "NumericalError";
    case ErrorKind::NotHurwitz: return "NotHurwitz";
    case ErrorKind::SingularSystem: return "SingularSystem";
    case ErrorKind::IllPosed: return "IllPosed";
    case ErrorKind::NonStrictlyProper: return "NonStrictlyProper";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::DegenerateMetric: return "DegenerateMetric";
    case ErrorKind::EvaluationFailed: return "EvaluationFailed";
    case ErrorKind::AllEvaluationsFailed: return "AllEvaluationsFailed";
    case ErrorKind::Config: return "ConfigError";
    }
    return "Error";
}

/// Base class of every error raised by the library. `kind()` lets callers
/// (the CLI, the Monte Carlo driver) classify failures without RTTI games.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    [[nodiscard]] ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define QLC_DEFINE_ERROR(Name, Kind)                                    \
    class Name : public Error {                                         \
    public:                                                             \
        explicit Name(const std::string& what) : Error(Kind, what) {}   \
    };

QLC_DEFINE_ERROR(DomainError, ErrorKind::Domain)
QLC_DEFINE_ERROR(NonConvergence, ErrorKind::NonConvergence)
QLC_DEFINE_ERROR(QuadratureFailure, ErrorKind::QuadratureFailure)
QLC_DEFINE_ERROR(NumericalError, ErrorKind::Numerical)
QLC_DEFINE_ERROR(NotHurwitz, ErrorKind::NotHurwitz)
QLC_DEFINE_ERROR(SingularSystem, ErrorKind::SingularSystem)
QLC_DEFINE_ERROR(IllPosed, ErrorKind::IllPosed)
QLC_DEFINE_ERROR(NonStrictlyProper, ErrorKind::NonStrictlyProper)
QLC_DEFINE_ERROR(Diverged, ErrorKind::Diverged)
QLC_DEFINE_ERROR(DegenerateMetric, ErrorKind::DegenerateMetric)
QLC_DEFINE_ERROR(EvaluationFailed, ErrorKind::EvaluationFailed)
QLC_DEFINE_ERROR(AllEvaluationsFailed, ErrorKind::AllEvaluationsFailed)
QLC_DEFINE_ERROR(ConfigError, ErrorKind::Config)

#undef QLC_DEFINE_ERROR

} // namespace qlc
