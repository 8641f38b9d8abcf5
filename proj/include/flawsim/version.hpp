#pragma once

namespace flawsim {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace flawsim
