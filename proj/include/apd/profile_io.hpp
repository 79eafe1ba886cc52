#pragma once

// Plain-text profile registry.
//
// One block per profile, blocks separated by blank lines, one `key = value`
// per line, `#` starts a comment:
//
//   name = epitaxx-60
//   temperature_c = -60
//   efficiency = 0.1
//   dark_p10 = 2.8e-05
//   dark_slope = 30
//   gate_width_ns = 2.4
//   afterpulse = 0.0099:0.625, 0.0016:7.82     # amplitude:lifetime_us
//   afterpulse_horizon_us = 100
//   jitter = 0.05:500, 0.1:450, 0.25:300       # efficiency:fwhm_ps
//   note = free text

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "apd/detector_model.hpp"

namespace apd {

std::string format_profile(const DetectorProfile& profile);
std::string format_profiles(const std::vector<DetectorProfile>& profiles);

// Throws InvalidData with a line number on malformed input, and validates
// every parsed profile.
std::vector<DetectorProfile> parse_profiles(std::string_view text);
std::vector<DetectorProfile> load_profiles(const std::filesystem::path& path);

// Stable 64-bit FNV-1a over format_profile(), printed as 16 hex digits.
std::string profile_fingerprint(const DetectorProfile& profile);

// Later entries replace earlier ones with the same name.
std::vector<DetectorProfile> merge_registries(std::vector<DetectorProfile> base,
                                              const std::vector<DetectorProfile>& overrides);

// NotFound lists the available names.
const DetectorProfile& find_profile(const std::vector<DetectorProfile>& profiles, std::string_view name);

}  // namespace apd
