#pragma once

namespace mhrs {

inline constexpr const char* kVersion = "mhrs-0.1.0";

}  // namespace mhrs
