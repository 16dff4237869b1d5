#pragma once

namespace critpt {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace critpt
