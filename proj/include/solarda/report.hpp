#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace solarda::report {

/// One (source, target, p, seed) adaptation cell; accuracies are fractions.
struct ResultRow {
  std::string source;
  std::string target;
  double p = 0.0;
  std::uint64_t seed = 0;
  double accuracy = 0.0;
  double acc_no_adapt = 0.0;
  double delta = 0.0;
};

inline constexpr const char* kResultsHeader = "source,target,p,seed,accuracy,acc_no_adapt,delta";

void write_results(const std::vector<ResultRow>& rows, std::ostream& out);
void write_results(const std::vector<ResultRow>& rows, const std::filesystem::path& path);
/// Rejects rows whose stored delta differs from accuracy - acc_no_adapt by more than 1e-9.
std::vector<ResultRow> read_results(std::istream& in, const std::string& name = "<stream>");
std::vector<ResultRow> read_results(const std::filesystem::path& path);

/// In-domain source test accuracy of the random forest and deep network for one seed.
struct SourceScore {
  std::string source;
  std::uint64_t seed = 0;
  double rf_accuracy = 0.0;
  double dnn_accuracy = 0.0;
};

inline constexpr const char* kSourceHeader = "source,seed,rf_accuracy,dnn_accuracy";

void write_source_scores(const std::vector<SourceScore>& rows, const std::filesystem::path& path);
void write_source_scores(const std::vector<SourceScore>& rows, std::ostream& out);
std::vector<SourceScore> read_source_scores(const std::filesystem::path& path);
std::vector<SourceScore> read_source_scores(std::istream& in, const std::string& name = "<stream>");

/// Seed aggregate of one source->target pair. Values are fractions.
struct GridRow {
  std::string source;
  std::string target;
  double no_adapt = 0.0;
  std::vector<double> ps;     // ascending
  std::vector<double> mean;   // per p
  std::vector<double> stdev;  // sample std over seeds, 0 for one seed
  std::vector<std::size_t> n_seeds;
};

/// Pairs in first-appearance order; p columns are the union over all rows.
std::vector<GridRow> aggregate(const std::vector<ResultRow>& rows);

/// Percent with two decimals, e.g. 0.6409 -> "64.09".
std::string percent(double fraction);
std::string p_label(double p);

std::string table2_csv(const std::vector<GridRow>& grid);
std::string table2_text(const std::vector<GridRow>& grid);
/// Adapted minus no-adapt mean per p column.
std::string deltas_csv(const std::vector<GridRow>& grid);
std::string deltas_text(const std::vector<GridRow>& grid);
/// source,target,p,mean,std,n_seeds (percent).
std::string curves_csv(const std::vector<GridRow>& grid);

std::string table1_csv(const std::vector<SourceScore>& rows);
std::string table1_text(const std::vector<SourceScore>& rows);

}  // namespace solarda::report
