#pragma once

#include "fedsl/errors.hpp"

#include <cmath>
#include <cstdint>

namespace fedsl {

struct LinkParams {
  double distance_km = 0.1;
  double tx_power_dbm = 23.0;
  double bandwidth_hz = 5e6;
  double noise_dbm_per_hz = -174.0;
};

// 3GPP macro-cell form; distance in kilometers.
inline double path_loss_db(double distance_km) {
  if (!(distance_km > 0.0)) throw InputError("path_loss_db: distance must be > 0");
  return 128.1 + 37.6 * std::log10(distance_km);
}

// Shannon rate from the link budget: rx = tx - path loss,
// noise = density + 10*log10(B), rate = B * log2(1 + SNR).
inline double link_rate_bps(const LinkParams& p) {
  if (!(p.distance_km > 0.0) || !(p.bandwidth_hz > 0.0)) {
    throw InputError("link_rate_bps: distance and bandwidth must be > 0");
  }
  const double rx_dbm = p.tx_power_dbm - path_loss_db(p.distance_km);
  const double noise_dbm = p.noise_dbm_per_hz + 10.0 * std::log10(p.bandwidth_hz);
  const double snr_db = rx_dbm - noise_dbm;
  const double snr = std::pow(10.0, snr_db / 10.0);
  return p.bandwidth_hz * std::log2(1.0 + snr);
}

inline double latency_s(std::uint64_t bytes, double rate_bps) {
  if (!(rate_bps > 0.0)) throw InputError("latency_s: rate must be > 0");
  return 8.0 * static_cast<double>(bytes) / rate_bps;
}

}  // namespace fedsl
