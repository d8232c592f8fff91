#include "solarda/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numbers>
#include <random>
#include <utility>

#include "solarda/random.hpp"

namespace solarda::data {

namespace {

using Field = double LocationProfile::*;

const std::vector<std::pair<std::string, Field>>& numeric_fields() {
  static const std::vector<std::pair<std::string, Field>> fields = {
      {"capacity_kw", &LocationProfile::capacity_kw},
      {"latitude", &LocationProfile::latitude},
      {"cloud_prob", &LocationProfile::cloud_prob},
      {"cloud_persistence", &LocationProfile::cloud_persistence},
      {"clearness", &LocationProfile::clearness},
      {"temperature_mean", &LocationProfile::temperature_mean},
      {"temperature_season", &LocationProfile::temperature_season},
      {"temperature_diurnal", &LocationProfile::temperature_diurnal},
      {"temperature_std", &LocationProfile::temperature_std},
      {"dew_point_depression", &LocationProfile::dew_point_depression},
      {"dew_point_depression_std", &LocationProfile::dew_point_depression_std},
      {"pressure_mean", &LocationProfile::pressure_mean},
      {"pressure_std", &LocationProfile::pressure_std},
      {"wind_speed_mean", &LocationProfile::wind_speed_mean},
      {"wind_speed_std", &LocationProfile::wind_speed_std},
      {"wind_direction_mean", &LocationProfile::wind_direction_mean},
      {"wind_direction_std", &LocationProfile::wind_direction_std},
      {"surface_albedo_mean", &LocationProfile::surface_albedo_mean},
      {"surface_albedo_std", &LocationProfile::surface_albedo_std},
      {"panel_tilt", &LocationProfile::panel_tilt},
      {"system_efficiency", &LocationProfile::system_efficiency},
      {"temp_coefficient", &LocationProfile::temp_coefficient},
      {"noct", &LocationProfile::noct},
      {"wind_cooling", &LocationProfile::wind_cooling},
      {"inverter_limit", &LocationProfile::inverter_limit},
      {"power_noise", &LocationProfile::power_noise},
  };
  return fields;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

/// Unit-variance AR(1) process.
class Ar1 {
 public:
  Ar1(double rho, std::mt19937_64& rng) : rho_(rho), scale_(std::sqrt(1.0 - rho * rho)), rng_(rng) {
    value_ = normal_(rng_);
  }
  double next() {
    value_ = rho_ * value_ + scale_ * normal_(rng_);
    return value_;
  }

 private:
  double rho_;
  double scale_;
  std::mt19937_64& rng_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  double value_ = 0.0;
};

double round_to(double v, double step) { return std::round(v / step) * step; }

constexpr double kDeg = std::numbers::pi / 180.0;

}  // namespace

void LocationProfile::validate() const {
  auto fail = [&](const std::string& what) { throw DataError("profile '" + name + "': " + what); };
  if (!(capacity_kw > 0.0)) fail("capacity_kw must be positive");
  if (!(latitude > -66.0 && latitude < 66.0)) fail("latitude must lie within (-66, 66) degrees");
  if (!(cloud_prob >= 0.0 && cloud_prob <= 1.0)) fail("cloud_prob must lie in [0, 1]");
  if (!(cloud_persistence >= 0.0 && cloud_persistence < 1.0)) fail("cloud_persistence must lie in [0, 1)");
  if (!(clearness > 0.0 && clearness <= 1.2)) fail("clearness must lie in (0, 1.2]");
  if (!(system_efficiency > 0.0 && system_efficiency <= 1.0)) fail("system_efficiency must lie in (0, 1]");
  if (!(inverter_limit > 0.0)) fail("inverter_limit must be positive");
  if (!(panel_tilt >= 0.0 && panel_tilt <= 90.0)) fail("panel_tilt must lie in [0, 90]");
  for (const auto& [key, field] : numeric_fields()) {
    if (!std::isfinite(this->*field)) fail(key + " is not finite");
  }
  const bool degenerate = cloud_prob == 0.0 && temperature_std == 0.0 && temperature_season == 0.0 &&
                          temperature_diurnal == 0.0 && dew_point_depression_std == 0.0 && pressure_std == 0.0 &&
                          wind_speed_std == 0.0 && wind_direction_std == 0.0 && surface_albedo_std == 0.0 &&
                          power_noise == 0.0;
  if (degenerate) fail("degenerate profile: every stochastic component has zero variance");
}

LocationProfile LocationProfile::from_keyvalues(const KeyValues& kv, LocationProfile base) {
  for (const auto& [key, field] : numeric_fields()) base.*field = kv.get_double(key, base.*field);
  base.name = kv.get_or("name", base.name);
  base.start_year = int(kv.get_int("start_year", base.start_year));
  return base;
}

LocationProfile LocationProfile::from_keyvalues(const KeyValues& kv) { return from_keyvalues(kv, LocationProfile{}); }

KeyValues LocationProfile::to_keyvalues() const {
  KeyValues kv;
  kv.set("name", name);
  kv.set("start_year", std::to_string(start_year));
  for (const auto& [key, field] : numeric_fields()) kv.set(key, format_double(this->*field));
  return kv;
}

const std::vector<std::string>& bundled_profile_names() {
  static const std::vector<std::string> names = {"sunny-dry", "humid-cloudy", "humid-subtropical", "humid-continental"};
  return names;
}

LocationProfile bundled_profile(const std::string& name) {
  LocationProfile p;
  p.name = name;
  if (name == "sunny-dry") {
    // Defaults describe a dry, clear, strongly seasonal inland site.
    return p;
  }
  if (name == "humid-cloudy") {
    p.latitude = 41.0;
    p.cloud_prob = 0.55;
    p.clearness = 0.85;
    p.temperature_mean = 11.0;
    p.temperature_season = 12.0;
    p.temperature_diurnal = 5.0;
    p.dew_point_depression = 3.5;
    p.dew_point_depression_std = 1.5;
    p.pressure_mean = 1009.0;
    p.wind_speed_mean = 4.5;
    p.wind_direction_mean = 200.0;
    p.surface_albedo_mean = 0.25;
    p.surface_albedo_std = 0.06;
    p.panel_tilt = 0.0;
    p.system_efficiency = 0.68;
    p.temp_coefficient = -0.006;
    p.inverter_limit = 0.55;
    p.power_noise = 0.04;
    return p;
  }
  if (name == "humid-subtropical") {
    p.latitude = 27.0;
    p.cloud_prob = 0.4;
    p.clearness = 0.9;
    p.temperature_mean = 24.0;
    p.temperature_season = 5.0;
    p.temperature_diurnal = 5.0;
    p.dew_point_depression = 4.0;
    p.dew_point_depression_std = 1.5;
    p.pressure_mean = 1016.0;
    p.wind_speed_mean = 3.5;
    p.wind_direction_mean = 110.0;
    p.panel_tilt = 20.0;
    p.system_efficiency = 0.8;
    p.temp_coefficient = -0.0045;
    p.noct = 48.0;
    p.inverter_limit = 0.8;
    p.power_noise = 0.04;
    return p;
  }
  if (name == "humid-continental") {
    p.latitude = 42.5;
    p.cloud_prob = 0.45;
    p.clearness = 0.9;
    p.temperature_mean = 9.0;
    p.temperature_season = 13.0;
    p.temperature_diurnal = 6.0;
    p.dew_point_depression = 5.0;
    p.dew_point_depression_std = 2.0;
    p.pressure_mean = 1011.0;
    p.wind_speed_mean = 4.0;
    p.wind_direction_mean = 250.0;
    p.surface_albedo_mean = 0.3;
    p.surface_albedo_std = 0.1;
    p.panel_tilt = 38.0;
    p.system_efficiency = 0.82;
    p.inverter_limit = 0.85;
    p.power_noise = 0.04;
    return p;
  }
  std::string known;
  for (const auto& n : bundled_profile_names()) known += (known.empty() ? "" : ", ") + n;
  throw ConfigError("unknown profile '" + name + "'; bundled profiles: " + known);
}

SyntheticSite gen_synthetic(const LocationProfile& prof, std::size_t n, std::uint64_t seed) {
  prof.validate();
  if (n == 0) throw DataError("gen_synthetic: n must be positive");
  constexpr std::size_t kSub = 6;  // 5-minute steps per 30-minute row
  const std::size_t steps = n * kSub;
  std::mt19937_64 rng(derive_seed(seed, {fnv1a(prof.name)}));

  Ar1 cloud(prof.cloud_persistence, rng);
  Ar1 temp_noise(0.995, rng);
  Ar1 dew_noise(0.995, rng);
  Ar1 pressure_noise(0.999, rng);
  Ar1 wind_noise(0.99, rng);
  Ar1 dir_noise(0.995, rng);
  Ar1 albedo_noise(0.9999, rng);
  Ar1 power_resid(0.9, rng);

  const std::chrono::year_month_day start{std::chrono::year{prof.start_year}, std::chrono::January, std::chrono::day{1}};
  const Minutes t0 = Minutes(std::chrono::sys_days{start}.time_since_epoch().count()) * 1440;

  const double lat = prof.latitude * kDeg;
  const double tilt = prof.panel_tilt * kDeg;
  const double tilted_lat = (prof.latitude >= 0 ? prof.latitude - prof.panel_tilt : prof.latitude + prof.panel_tilt) * kDeg;

  const auto& wcols = weather_columns();
  std::vector<std::vector<double>> fine(wcols.size(), std::vector<double>(steps));
  std::vector<double> power(steps);
  std::vector<Minutes> fine_t(steps);

  for (std::size_t s = 0; s < steps; ++s) {
    const Minutes minute = Minutes(s) * 5;
    fine_t[s] = t0 + minute;
    const double doy = double(minute / 1440) + 1.0;
    const double hour = double(minute % 1440) / 60.0 + 2.5 / 60.0;
    const double decl = 23.45 * kDeg * std::sin(2.0 * std::numbers::pi * (284.0 + doy) / 365.0);
    const double hour_angle = 15.0 * kDeg * (hour - 12.0);
    const double sin_el = std::sin(lat) * std::sin(decl) + std::cos(lat) * std::cos(decl) * std::cos(hour_angle);

    // cloud cover in [0, 1]; P(cover > 0) == cloud_prob
    const double u = 0.5 * std::erfc(-cloud.next() / std::numbers::sqrt2);
    double cover = 0.0;
    if (prof.cloud_prob > 0.0) cover = std::clamp((u - (1.0 - prof.cloud_prob)) / (0.6 * prof.cloud_prob), 0.0, 1.0);

    double dni = 0.0, dhi = 0.0, ghi = 0.0, cos_inc = 0.0;
    if (sin_el > 0.0) {
      const double air_mass = std::min(1.0 / sin_el, 30.0);
      const double dni_cs = 1353.0 * prof.clearness * std::pow(0.7, std::pow(air_mass, 0.678));
      const double dhi_cs = 0.1 * dni_cs * sin_el + 40.0 * sin_el * std::max(0.0, 1.2 - prof.clearness);
      const double ghi_cs = dni_cs * sin_el + dhi_cs;
      dni = dni_cs * (1.0 - cover) * (1.0 - cover);
      dhi = dhi_cs * (1.0 - cover) + cover * ghi_cs * (0.3 + 0.5 * (1.0 - cover));
      ghi = dni * sin_el + dhi;
      cos_inc = std::max(0.0, std::sin(decl) * std::sin(tilted_lat) +
                                  std::cos(decl) * std::cos(tilted_lat) * std::cos(hour_angle));
    }

    const double season = -std::cos(2.0 * std::numbers::pi * (doy - 20.0) / 365.0);
    const double diurnal = std::cos(2.0 * std::numbers::pi * (hour - 15.0) / 24.0);
    const double temp = prof.temperature_mean + prof.temperature_season * season +
                        prof.temperature_diurnal * diurnal * (1.0 - 0.5 * cover) + prof.temperature_std * temp_noise.next();
    const double depression = std::max(0.5, prof.dew_point_depression + prof.dew_point_depression_std * dew_noise.next() +
                                                0.3 * prof.temperature_diurnal * diurnal - 2.0 * cover);
    const double dew = temp - depression;
    const double rh = 100.0 * std::exp(17.625 * dew / (243.04 + dew)) / std::exp(17.625 * temp / (243.04 + temp));
    const double pressure = prof.pressure_mean + prof.pressure_std * pressure_noise.next();
    const double wind = std::max(0.0, prof.wind_speed_mean * (1.0 + 0.3 * diurnal) + prof.wind_speed_std * wind_noise.next());
    double direction = std::fmod(prof.wind_direction_mean + prof.wind_direction_std * dir_noise.next(), 360.0);
    if (direction < 0) direction += 360.0;
    const double albedo = std::clamp(prof.surface_albedo_mean + prof.surface_albedo_std * albedo_noise.next(), 0.05, 0.95);

    double kw = 0.0;
    if (sin_el > 0.0) {
      const double poa = dni * cos_inc + dhi * (1.0 + std::cos(tilt)) / 2.0 + ghi * albedo * (1.0 - std::cos(tilt)) / 2.0;
      const double cell = temp + poa / 800.0 * (prof.noct - 20.0) - prof.wind_cooling * wind;
      kw = prof.capacity_kw * (poa / 1000.0) * prof.system_efficiency * (1.0 + prof.temp_coefficient * (cell - 25.0)) *
           (1.0 + prof.power_noise * power_resid.next());
      kw = std::clamp(kw, 0.0, prof.inverter_limit * prof.capacity_kw);
    } else {
      (void)power_resid.next();
    }
    power[s] = round_to(kw, 1e-3);

    const double values[] = {dni, dhi, ghi, dew, temp, pressure, rh, direction, wind, albedo};
    for (std::size_t c = 0; c < wcols.size(); ++c) fine[c][s] = values[c];
  }

  SyntheticSite site;
  site.capacity_kw = prof.capacity_kw;
  site.profile = prof.name;

  site.power.timestamps = fine_t;
  site.power.interval = 5;
  site.power.add_column(kPowerColumn, std::move(power));

  site.weather.interval = 30;
  site.weather.names = wcols;
  site.weather.columns.assign(wcols.size(), std::vector<double>(n));
  const std::size_t dir_col = 7;
  for (std::size_t r = 0; r < n; ++r) {
    site.weather.timestamps.push_back(fine_t[r * kSub]);
    for (std::size_t c = 0; c < wcols.size(); ++c) {
      double v;
      if (c == dir_col) {  // circular mean
        double sx = 0.0, sy = 0.0;
        for (std::size_t j = 0; j < kSub; ++j) {
          sx += std::cos(fine[c][r * kSub + j] * kDeg);
          sy += std::sin(fine[c][r * kSub + j] * kDeg);
        }
        v = std::atan2(sy, sx) / kDeg;
        if (v < 0) v += 360.0;
      } else {
        double sum = 0.0;
        for (std::size_t j = 0; j < kSub; ++j) sum += fine[c][r * kSub + j];
        v = sum / double(kSub);
      }
      site.weather.columns[c][r] = round_to(v, c == 9 ? 1e-3 : 0.1);
    }
  }
  return site;
}

void write_site(const SyntheticSite& site, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  write_csv(site.weather, dir / "weather.csv");
  write_csv(site.power, dir / "power.csv");
  KeyValues kv;
  kv.set("capacity_kw", format_double(site.capacity_kw));
  kv.set("profile", site.profile);
  kv.save(dir / "site.txt");
}

double symmetric_gaussian_kl(const TimeSeries& a, const TimeSeries& b, const std::vector<std::string>& columns) {
  auto fit = [](const std::vector<double>& v) {
    double mean = 0.0;
    std::size_t n = 0;
    for (double x : v) {
      if (std::isfinite(x)) {
        mean += x;
        ++n;
      }
    }
    if (n < 2) throw DataError("symmetric_gaussian_kl: too few finite values");
    mean /= double(n);
    double var = 0.0;
    for (double x : v) {
      if (std::isfinite(x)) var += (x - mean) * (x - mean);
    }
    return std::pair{mean, std::max(var / double(n), 1e-12)};
  };
  double total = 0.0;
  for (const auto& c : columns) {
    const auto [m1, v1] = fit(a.column(c));
    const auto [m2, v2] = fit(b.column(c));
    const double d2 = (m1 - m2) * (m1 - m2);
    total += 0.5 * (v1 / v2 + v2 / v1 - 2.0) + 0.5 * d2 * (1.0 / v1 + 1.0 / v2);
  }
  return total;
}

}  // namespace solarda::data
