#pragma once

namespace qpl {
inline constexpr const char* kVersion = "0.1.0";
}
