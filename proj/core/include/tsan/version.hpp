#pragma once

#include <string_view>

namespace tsan {

// git-describe style version of the build, e.g. "v0.1.0-3-gabc1234".
std::string_view version_string() noexcept;

}  // namespace tsan
