#pragma once

#include <string>

namespace kerrbic {

/// Locale-independent "%.10g" with nan/inf/-inf spelled out, so CSV bodies are reproducible.
std::string fmt_num(double v);

/// Same with 17 significant digits (round-trips a double).
std::string fmt_exact(double v);

}  // namespace kerrbic
