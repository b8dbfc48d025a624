#pragma once

namespace kgr {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace kgr
