#pragma once

#include <array>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <variant>

namespace dfu {

/// Every rejection cause in the system. Names are part of the wire format:
/// the HTTP layer emits them verbatim as `error_code`.
enum class ErrorCode {
    // exam workflow
    ExamCompleted,
    CheckedLocked,
    CountLocked,
    NegativeCount,
    NoFootDetails,
    DuplicateUpload,
    NoPhoto,
    DuplicateResult,
    NoResult,
    DuplicateConfirmation,
    NothingRecorded,
    PendingInference,
    PendingConfirmation,
    // detector
    ZeroSizeImage,
    InvalidConfig,
    // persistence
    VersionConflict,
    StorageFailure,
    NotFound,
    TooLarge,
    DuplicatePhotoId,
    // queue
    DuplicateJob,
    UnknownPhoto,
    InvalidState,
    // service
    UnknownPatient,
    MalformedVersion,
    BadImage,
    BadRequest,
    Unauthorized,
    Internal,
    // client
    ConnectionFailed,
    IncompatibleVersion,
    JobFailed,
    Timeout,
    ProtocolError,
};

namespace detail {
inline constexpr std::array<std::pair<ErrorCode, std::string_view>, 34> kErrorNames{{
    {ErrorCode::ExamCompleted, "ExamCompleted"},
    {ErrorCode::CheckedLocked, "CheckedLocked"},
    {ErrorCode::CountLocked, "CountLocked"},
    {ErrorCode::NegativeCount, "NegativeCount"},
    {ErrorCode::NoFootDetails, "NoFootDetails"},
    {ErrorCode::DuplicateUpload, "DuplicateUpload"},
    {ErrorCode::NoPhoto, "NoPhoto"},
    {ErrorCode::DuplicateResult, "DuplicateResult"},
    {ErrorCode::NoResult, "NoResult"},
    {ErrorCode::DuplicateConfirmation, "DuplicateConfirmation"},
    {ErrorCode::NothingRecorded, "NothingRecorded"},
    {ErrorCode::PendingInference, "PendingInference"},
    {ErrorCode::PendingConfirmation, "PendingConfirmation"},
    {ErrorCode::ZeroSizeImage, "ZeroSizeImage"},
    {ErrorCode::InvalidConfig, "InvalidConfig"},
    {ErrorCode::VersionConflict, "VersionConflict"},
    {ErrorCode::StorageFailure, "StorageFailure"},
    {ErrorCode::NotFound, "NotFound"},
    {ErrorCode::TooLarge, "TooLarge"},
    {ErrorCode::DuplicatePhotoId, "DuplicatePhotoId"},
    {ErrorCode::DuplicateJob, "DuplicateJob"},
    {ErrorCode::UnknownPhoto, "UnknownPhoto"},
    {ErrorCode::InvalidState, "InvalidState"},
    {ErrorCode::UnknownPatient, "UnknownPatient"},
    {ErrorCode::MalformedVersion, "MalformedVersion"},
    {ErrorCode::BadImage, "BadImage"},
    {ErrorCode::BadRequest, "BadRequest"},
    {ErrorCode::Unauthorized, "Unauthorized"},
    {ErrorCode::Internal, "Internal"},
    {ErrorCode::ConnectionFailed, "ConnectionFailed"},
    {ErrorCode::IncompatibleVersion, "IncompatibleVersion"},
    {ErrorCode::JobFailed, "JobFailed"},
    {ErrorCode::Timeout, "Timeout"},
    {ErrorCode::ProtocolError, "ProtocolError"},
}};
}  // namespace detail

[[nodiscard]] constexpr std::string_view to_string(ErrorCode code) noexcept {
    for (const auto& [c, name] : detail::kErrorNames) {
        if (c == code) return name;
    }
    return "Internal";
}

[[nodiscard]] constexpr std::optional<ErrorCode> parse_error_code(std::string_view name) noexcept {
    for (const auto& [c, n] : detail::kErrorNames) {
        if (n == name) return c;
    }
    return std::nullopt;
}

struct Error {
    ErrorCode code = ErrorCode::Internal;
    std::string message;

    [[nodiscard]] std::string to_string() const {
        std::string out{dfu::to_string(code)};
        if (!message.empty()) {
            out += ": ";
            out += message;
        }
        return out;
    }

    friend bool operator==(const Error&, const Error&) = default;
};

[[nodiscard]] inline Error make_error(ErrorCode code, std::string message = {}) {
    return Error{code, std::move(message)};
}

class BadResultAccess : public std::logic_error {
public:
    explicit BadResultAccess(const Error& e) : std::logic_error("bad result access: " + e.to_string()) {}
};

/// Value-or-typed-error. Operations that can be rejected for domain reasons
/// return this instead of throwing.
template <class T>
class [[nodiscard]] Result {
public:
    Result(T value) : storage_(std::in_place_index<0>, std::move(value)) {}
    Result(Error error) : storage_(std::in_place_index<1>, std::move(error)) {}

    [[nodiscard]] bool has_value() const noexcept { return storage_.index() == 0; }
    explicit operator bool() const noexcept { return has_value(); }

    [[nodiscard]] T& value() & {
        if (!has_value()) throw BadResultAccess(std::get<1>(storage_));
        return std::get<0>(storage_);
    }
    [[nodiscard]] const T& value() const& {
        if (!has_value()) throw BadResultAccess(std::get<1>(storage_));
        return std::get<0>(storage_);
    }
    // by value, so `for (x : f().value())` does not dangle
    [[nodiscard]] T value() && {
        if (!has_value()) throw BadResultAccess(std::get<1>(storage_));
        return std::get<0>(std::move(storage_));
    }

    [[nodiscard]] const Error& error() const& { return std::get<1>(storage_); }
    [[nodiscard]] ErrorCode code() const { return error().code; }

    T& operator*() & { return value(); }
    const T& operator*() const& { return value(); }
    T operator*() && { return std::move(*this).value(); }
    T* operator->() { return &value(); }
    const T* operator->() const { return &value(); }

private:
    std::variant<T, Error> storage_;
};

template <>
class [[nodiscard]] Result<void> {
public:
    Result() = default;
    Result(Error error) : error_(std::move(error)) {}

    [[nodiscard]] bool has_value() const noexcept { return !error_.has_value(); }
    explicit operator bool() const noexcept { return has_value(); }
    void value() const {
        if (error_) throw BadResultAccess(*error_);
    }
    [[nodiscard]] const Error& error() const& { return *error_; }
    [[nodiscard]] ErrorCode code() const { return error_->code; }

private:
    std::optional<Error> error_;
};

using Status = Result<void>;

}  // namespace dfu
