#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "solarda/errors.hpp"

namespace solarda::data {

/// Weather columns accepted on ingestion, in canonical order.
const std::vector<std::string>& weather_columns();
inline const std::string kPowerColumn = "power_kw";

/// Minutes since 1970-01-01T00:00, naive local time.
using Minutes = std::int64_t;

Minutes parse_timestamp(std::string_view text);
std::string format_timestamp(Minutes t);

/// Shortest decimal text that parses back to exactly `v`.
std::string format_double(double v);
double parse_double(std::string_view text);

class CsvError : public DataError {
 public:
  enum class Kind { empty_file, missing_column, bad_timestamp, non_uniform_spacing, duplicate_timestamp, io };
  CsvError(Kind kind, const std::string& what) : DataError(what), kind_(kind) {}
  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

struct RejectedRow {
  std::size_t line = 0;  // 1-based line number in the file
  std::string reason;
};

/// Uniformly spaced series. Missing or unparseable cells are stored as NaN;
/// the row stays on the time grid and is dropped later during dataset
/// assembly.
struct TimeSeries {
  std::vector<Minutes> timestamps;
  Minutes interval = 0;
  std::vector<std::string> names;
  std::vector<std::vector<double>> columns;
  std::vector<RejectedRow> rejected;
  std::map<std::string, std::string> metadata;  // from "# key=value" lines

  std::size_t size() const noexcept { return timestamps.size(); }
  bool has_column(std::string_view name) const;
  const std::vector<double>& column(std::string_view name) const;
  std::vector<double>& column(std::string_view name);
  void add_column(std::string name, std::vector<double> values);
};

/// Reads a CSV with a `timestamp` column plus at least `required` columns
/// (extra columns are ignored). Rows are sorted by timestamp.
TimeSeries load_csv(const std::filesystem::path& path, const std::vector<std::string>& required);
TimeSeries read_csv(std::istream& in, const std::vector<std::string>& required, const std::string& source_name = "<stream>");

void write_csv(const TimeSeries& series, const std::filesystem::path& path);
void write_csv(const TimeSeries& series, std::ostream& out);

/// Means over consecutive windows of target/interval rows; a partial trailing
/// window is dropped and a window containing a missing value yields NaN.
TimeSeries resample_mean(const TimeSeries& series, Minutes target_interval);

/// Inner join on timestamps; columns of `b` follow those of `a`.
TimeSeries join(const TimeSeries& a, const TimeSeries& b);

}  // namespace solarda::data
