#pragma once

#include <stdexcept>
#include <string>

#include <json.hpp>

namespace fanout {

/// Every failure raised by the library carries a stable machine-readable code
/// (e.g. "KindMismatch", "CycleDetected") plus optional structured details.
/// The service layer serializes these verbatim as {code, message, details}.
class Error : public std::runtime_error
{
  public:
    Error(std::string code, const std::string &message, nlohmann::json details = nullptr)
        : std::runtime_error(message), code_(std::move(code)), details_(std::move(details))
    { }

    const std::string & code() const noexcept { return code_; }
    const nlohmann::json & details() const noexcept { return details_; }

    nlohmann::json to_json() const {
        return {{"code", code_}, {"message", what()}, {"details", details_}};
    }

  private:
    std::string code_;
    nlohmann::json details_;
};

namespace errc {
inline constexpr const char *KindMismatch = "KindMismatch";
inline constexpr const char *UnsupportedScale = "UnsupportedScale";
inline constexpr const char *InvalidWeight = "InvalidWeight";
inline constexpr const char *ParseError = "ParseError";
inline constexpr const char *TypeError = "TypeError";
inline constexpr const char *IoError = "IoError";
inline constexpr const char *MissingAttribute = "MissingAttribute";
inline constexpr const char *NonNumericPayload = "NonNumericPayload";
inline constexpr const char *CycleDetected = "CycleDetected";
inline constexpr const char *Disconnected = "Disconnected";
inline constexpr const char *BadJoinAttr = "BadJoinAttr";
inline constexpr const char *CardinalityMismatch = "CardinalityMismatch";
inline constexpr const char *UnknownRelation = "UnknownRelation";
inline constexpr const char *UnknownAttribute = "UnknownAttribute";
inline constexpr const char *UnknownMetric = "UnknownMetric";
inline constexpr const char *InvalidQuery = "InvalidQuery";
inline constexpr const char *MissingWeights = "MissingWeights";
inline constexpr const char *InvalidStrategy = "InvalidStrategy";
inline constexpr const char *NonPositiveProportionalValue = "NonPositiveProportionalValue";
inline constexpr const char *MissingOrderAttr = "MissingOrderAttr";
inline constexpr const char *MissingRowId = "MissingRowId";
inline constexpr const char *ValidationFailed = "ValidationFailed";
inline constexpr const char *NotAWeighingTarget = "NotAWeighingTarget";
inline constexpr const char *RangeError = "RangeError";
inline constexpr const char *NotFound = "NotFound";
inline constexpr const char *BadRequest = "BadRequest";
}

}
