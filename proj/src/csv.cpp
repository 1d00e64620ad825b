#include "kerrbic/csv.hpp"

#include <cmath>
#include <cstdio>

namespace kerrbic {

namespace {

std::string format(double v, const char* spec) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (v == 0.0) return "0";  // also folds -0
  char buf[40];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

}  // namespace

std::string fmt_num(double v) { return format(v, "%.10g"); }
std::string fmt_exact(double v) { return format(v, "%.17g"); }

}  // namespace kerrbic
