#pragma once

#include <string>

namespace optomech {

/// Shortest decimal text that parses back to exactly the same double.
/// Locale-independent, so data files are byte-identical across runs.
[[nodiscard]] std::string format_real(double v);

}  // namespace optomech
