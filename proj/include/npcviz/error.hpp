#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

#include <json.hpp>

namespace npcviz {

// Error categories surfaced to API clients; every module error maps onto one.
enum class ErrorCode { bad_request, not_found, conflict, upstream_failed, busy, internal };

std::string_view to_string(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& message, nlohmann::json detail = nullptr)
        : std::runtime_error(message), code_(code), detail_(std::move(detail)) {}

    ErrorCode code() const noexcept { return code_; }
    const nlohmann::json& detail() const noexcept { return detail_; }

private:
    ErrorCode code_;
    nlohmann::json detail_;
};

class NotFoundError : public Error {
public:
    explicit NotFoundError(const std::string& message, nlohmann::json detail = nullptr)
        : Error(ErrorCode::not_found, message, std::move(detail)) {}
};

class BadRequestError : public Error {
public:
    explicit BadRequestError(const std::string& message, nlohmann::json detail = nullptr)
        : Error(ErrorCode::bad_request, message, std::move(detail)) {}
};

class BusyError : public Error {
public:
    explicit BusyError(const std::string& message, nlohmann::json detail = nullptr)
        : Error(ErrorCode::busy, message, std::move(detail)) {}
};

}  // namespace npcviz
