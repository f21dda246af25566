#pragma once

namespace archetype {

inline constexpr const char* kToolName = "archetype";
inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace archetype
