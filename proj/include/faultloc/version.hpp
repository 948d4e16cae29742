#pragma once

namespace faultloc {
inline constexpr const char* kVersion = "0.1.0";
}
