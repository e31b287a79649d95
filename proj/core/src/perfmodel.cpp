#include "lowbit/perfmodel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "lowbit/errors.hpp"

namespace lowbit {

namespace {

void require_positive(double v, const char* what) {
  if (!(v > 0.0) || !std::isfinite(v)) throw DomainError(std::string(what) + " must be positive");
}

double transfer_factor(double bits, double m, double nu) {
  return std::max(1.0, bits * nu / (16.0 * m));
}

}  // namespace

void DeviceProfile::validate() const {
  require_positive(r_compute, "compute rate");
  require_positive(r_transfer, "transfer rate");
}

double kernel_time(double bits, double m, double h, const DeviceProfile& dev) {
  dev.validate();
  require_positive(bits, "P_w");
  require_positive(m, "m");
  require_positive(h, "h");
  return 2.0 * m * h * h / dev.r_compute * transfer_factor(bits, m, dev.nu());
}

double speedup(double bits1, double bits2, double m, const DeviceProfile& dev) {
  dev.validate();
  require_positive(bits1, "P_w1");
  require_positive(bits2, "P_w2");
  require_positive(m, "m");
  const double nu = dev.nu();
  const double t1 = transfer_factor(bits1, m, nu);
  const double t2 = transfer_factor(bits2, m, nu);
  // Both memory bound: the ratio reduces to P1 / P2.
  if (t1 > 1.0 && t2 > 1.0) return bits1 / bits2;
  return t1 / t2;
}

std::pair<double, double> regimes(double bits1, double bits2, const DeviceProfile& dev) {
  dev.validate();
  require_positive(bits1, "P_w1");
  require_positive(bits2, "P_w2");
  if (bits1 == bits2) throw DomainError("regimes: bit-widths must differ");
  const double nu = dev.nu();
  return {std::min(bits1, bits2) * nu / 16.0, std::max(bits1, bits2) * nu / 16.0};
}

std::string speedup_curve_csv(std::span<const double> ms, double bits4, double bits1,
                              const DeviceProfile& dev) {
  std::string out = "m,speedup_4bit,speedup_1bit\n";
  char buf[128];
  for (double m : ms) {
    std::snprintf(buf, sizeof buf, "%.17g,%.17g,%.17g\n", m, speedup(16.0, bits4, m, dev),
                  speedup(16.0, bits1, m, dev));
    out += buf;
  }
  return out;
}

}  // namespace lowbit
