#pragma once

#include <string>

namespace mcdban {

// Shortest decimal text that parses back to the same double.
std::string fmt_num(double v);
// Fixed-point text with the given digits after the point; "-0" is folded to "0".
std::string fmt_fixed(double v, int digits);

}  // namespace mcdban
