#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "solarda/kvconfig.hpp"
#include "solarda/timeseries.hpp"

namespace solarda::data {

/// Climate and plant description for one synthetic site. Weather is built
/// from a clear-sky sinusoid attenuated by a persistent cloud process; power
/// comes from a tilted-plane irradiance and cell-temperature model.
struct LocationProfile {
  std::string name = "custom";
  double capacity_kw = 100.0;
  double latitude = 35.0;  // degrees; sets day length and its seasonality
  int start_year = 2006;

  double cloud_prob = 0.2;            // fraction of time with any cloud
  double cloud_persistence = 0.985;   // lag-1 correlation of the 5-minute cloud process
  double clearness = 1.0;             // clear-sky transmittance multiplier

  double temperature_mean = 18.0;
  double temperature_season = 8.0;    // seasonal half-swing (C)
  double temperature_diurnal = 8.0;   // daily half-swing (C)
  double temperature_std = 1.5;       // slow weather noise
  double dew_point_depression = 10.0;
  double dew_point_depression_std = 3.0;
  double pressure_mean = 1013.0;
  double pressure_std = 4.0;
  double wind_speed_mean = 3.0;
  double wind_speed_std = 1.2;
  double wind_direction_mean = 270.0;
  double wind_direction_std = 40.0;
  double surface_albedo_mean = 0.2;
  double surface_albedo_std = 0.02;

  double panel_tilt = 30.0;           // degrees, equator facing
  double system_efficiency = 0.85;
  double temp_coefficient = -0.004;   // per C of cell temperature above 25 C
  double noct = 45.0;
  double wind_cooling = 0.6;          // C per m/s
  double inverter_limit = 0.9;        // AC clipping as a fraction of capacity
  double power_noise = 0.03;          // relative std of the power residual

  /// Throws DataError for invalid or fully degenerate (zero-variance) profiles.
  void validate() const;

  static LocationProfile from_keyvalues(const KeyValues& kv, LocationProfile base);
  static LocationProfile from_keyvalues(const KeyValues& kv);
  KeyValues to_keyvalues() const;
};

/// sunny-dry, humid-cloudy, humid-subtropical, humid-continental.
const std::vector<std::string>& bundled_profile_names();
/// Throws ConfigError listing the bundled names when `name` is unknown.
LocationProfile bundled_profile(const std::string& name);

struct SyntheticSite {
  TimeSeries weather;  // 30-minute rows, weather_columns()
  TimeSeries power;    // 5-minute rows, power_kw
  double capacity_kw = 0.0;
  std::string profile;
};

inline constexpr std::size_t kSamplesPerYear = 17520;

/// n thirty-minute weather rows and 6n five-minute power rows, from start_year-01-01T00:00.
SyntheticSite gen_synthetic(const LocationProfile& profile, std::size_t n, std::uint64_t seed);

/// Writes weather.csv, power.csv and site.txt into dir.
void write_site(const SyntheticSite& site, const std::filesystem::path& dir);

/// Sum over columns of the symmetrised KL divergence between per-feature
/// Gaussian fits of two weather series (night rows included).
double symmetric_gaussian_kl(const TimeSeries& a, const TimeSeries& b, const std::vector<std::string>& columns);

}  // namespace solarda::data
