#pragma once

#include <numbers>

// Unit conventions: all internal computation uses SI, with rates as angular
// frequencies (rad/s). Files and the CLI speak ordinary frequency in MHz
// (nu = gamma / 2pi), time in ns or ps, and lengths in nm.

namespace srsim::units {

inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

constexpr double rate_from_mhz(double mhz) { return kTwoPi * 1.0e6 * mhz; }
constexpr double mhz_from_rate(double rate) { return rate / (kTwoPi * 1.0e6); }

constexpr double seconds_from_ns(double ns) { return ns * 1.0e-9; }
constexpr double ns_from_seconds(double s) { return s * 1.0e9; }
constexpr double seconds_from_ps(double ps) { return ps * 1.0e-12; }
constexpr double ps_from_seconds(double s) { return s * 1.0e12; }

constexpr double meters_from_nm(double nm) { return nm * 1.0e-9; }
constexpr double nm_from_meters(double m) { return m * 1.0e9; }

}  // namespace srsim::units
