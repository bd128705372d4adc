#pragma once

#include <string_view>

namespace sheq {

inline constexpr std::string_view kToolName = "sheq";
inline constexpr std::string_view kVersion = "0.1.0";

}  // namespace sheq
