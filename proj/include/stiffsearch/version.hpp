#pragma once

namespace stiffsearch {
inline constexpr const char* kVersion = "0.1.0";
}
