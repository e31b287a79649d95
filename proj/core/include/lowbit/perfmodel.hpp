#pragma once

#include <span>
#include <string>
#include <utility>

namespace lowbit {

/// Throughput of a device for the roofline model. Defaults: NVIDIA L40S.
struct DeviceProfile {
  double r_compute = 362e12;   // op/s
  double r_transfer = 864e9;   // B/s

  double nu() const { return r_compute / r_transfer; }
  void validate() const;
};

/// Ideal-overlap time of an m x h by h x h matmul with P_w-bit weights.
double kernel_time(double bits, double m, double h, const DeviceProfile& dev = {});

/// Theoretical speedup of P2-bit over P1-bit weights at batch size m.
double speedup(double bits1, double bits2, double m, const DeviceProfile& dev = {});

/// (m_low, m_high): full speedup below m_low, none above m_high.
std::pair<double, double> regimes(double bits1, double bits2, const DeviceProfile& dev = {});

/// CSV `m,speedup_4bit,speedup_1bit` of 16 -> bits4 and 16 -> bits1 over
/// the integer batch sizes in ms.
std::string speedup_curve_csv(std::span<const double> ms, double bits4 = 4.25,
                              double bits1 = 1.25, const DeviceProfile& dev = {});

}  // namespace lowbit
