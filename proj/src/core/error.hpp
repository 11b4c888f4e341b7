#pragma once

#include <stdexcept>
#include <string>

namespace gadan {

enum class ErrorCode {
    ok = 0,
    config,
    io,
    empty_domain,
    shape_mismatch,
    kind_mismatch,
    singular_transform,
    non_finite_loss,
    version_mismatch,
    invalid_argument,
    check_failed,
    internal,
};

class GadanError : public std::runtime_error {
public:
    GadanError(ErrorCode code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

struct SingularTransform : GadanError {
    explicit SingularTransform(const std::string& msg)
        : GadanError(ErrorCode::singular_transform, msg) {}
};
struct ShapeMismatch : GadanError {
    explicit ShapeMismatch(const std::string& msg) : GadanError(ErrorCode::shape_mismatch, msg) {}
};
struct KindMismatch : GadanError {
    explicit KindMismatch(const std::string& msg) : GadanError(ErrorCode::kind_mismatch, msg) {}
};
struct ConfigError : GadanError {
    explicit ConfigError(const std::string& msg) : GadanError(ErrorCode::config, msg) {}
};
struct IoError : GadanError {
    explicit IoError(const std::string& msg) : GadanError(ErrorCode::io, msg) {}
};
struct EmptyDomain : GadanError {
    explicit EmptyDomain(const std::string& msg) : GadanError(ErrorCode::empty_domain, msg) {}
};
struct NonFiniteLoss : GadanError {
    explicit NonFiniteLoss(const std::string& msg) : GadanError(ErrorCode::non_finite_loss, msg) {}
};
struct VersionMismatch : GadanError {
    explicit VersionMismatch(const std::string& msg)
        : GadanError(ErrorCode::version_mismatch, msg) {}
};

}  // namespace gadan
