#include "solarda/pipeline.hpp"

#include "solarda/errors.hpp"
#include "solarda/random.hpp"

namespace solarda::pipeline {

namespace {

constexpr std::uint64_t kSplitTag = 0x73706c74;
constexpr std::uint64_t kForestTag = 0x66727374;
constexpr std::uint64_t kTrainTag = 0x7472616e;
constexpr std::uint64_t kAnnotateTag = 0x616e6e6f;

void label(data::Dataset& ds, const data::BinEdges& bins) { ds.labels = bins.classify(ds.power_frac); }

std::vector<std::string> feature_names(const std::vector<std::size_t>& indices) {
  std::vector<std::string> out;
  for (auto i : indices) out.push_back(data::weather_columns().at(i));
  return out;
}

}  // namespace

std::uint64_t split_seed(std::uint64_t seed) { return derive_seed(seed, {kSplitTag}); }
std::uint64_t forest_seed(std::uint64_t seed) { return derive_seed(seed, {kForestTag}); }
std::uint64_t train_seed(std::uint64_t seed) { return derive_seed(seed, {kTrainTag}); }
std::uint64_t annotate_seed(std::uint64_t seed, std::uint64_t which) { return derive_seed(seed, {kAnnotateTag, which}); }

Site prepare_site(const data::TimeSeries& weather, const data::TimeSeries& power, double capacity_kw,
                  const std::string& name) {
  if (!(capacity_kw > 0.0)) throw DataError("site '" + name + "' needs a positive capacity_kw");
  if (weather.interval <= 0 || power.interval <= 0) throw DataError("site '" + name + "' has an empty series");
  data::TimeSeries p = power;
  if (power.interval != weather.interval) p = data::resample_mean(power, weather.interval);
  data::TimeSeries power_only;
  power_only.timestamps = p.timestamps;
  power_only.interval = p.interval;
  power_only.add_column(data::kPowerColumn, p.column(data::kPowerColumn));
  data::TimeSeries weather_only;
  weather_only.timestamps = weather.timestamps;
  weather_only.interval = weather.interval;
  for (const auto& c : data::weather_columns()) weather_only.add_column(c, weather.column(c));
  Site site{name, capacity_kw, data::join(weather_only, power_only)};
  if (site.joined.size() == 0) throw DataError("site '" + name + "': weather and power share no timestamps");
  return site;
}

Site prepare_site(const data::SyntheticSite& synthetic) {
  return prepare_site(synthetic.weather, synthetic.power, synthetic.capacity_kw, synthetic.profile);
}

Site load_site_dir(const std::filesystem::path& dir) {
  for (const char* f : {"weather.csv", "power.csv", "site.txt"}) {
    if (!std::filesystem::exists(dir / f)) {
      throw DataError("site directory " + dir.string() + " lacks " + f + " (run synth or provide it)");
    }
  }
  const auto meta = KeyValues::load(dir / "site.txt");
  const auto weather = data::load_csv(dir / "weather.csv", data::weather_columns());
  const auto power = data::load_csv(dir / "power.csv", {data::kPowerColumn});
  return prepare_site(weather, power, meta.get_double("capacity_kw", 0.0),
                      meta.get_or("profile", dir.filename().string()));
}

void write_prepared(const Site& site, const std::filesystem::path& path) {
  data::TimeSeries out = site.joined;
  out.metadata["capacity_kw"] = data::format_double(site.capacity_kw);
  out.metadata["site"] = site.name;
  data::write_csv(out, path);
}

Site load_prepared(const std::filesystem::path& path) {
  auto required = data::weather_columns();
  required.push_back(data::kPowerColumn);
  data::TimeSeries ts = data::load_csv(path, required);
  const auto cap = ts.metadata.find("capacity_kw");
  if (cap == ts.metadata.end()) throw DataError(path.string() + " lacks '# capacity_kw=' metadata (run prep)");
  const auto name = ts.metadata.count("site") ? ts.metadata.at("site") : path.stem().string();
  Site site{name, data::parse_double(cap->second), {}};
  site.joined.timestamps = ts.timestamps;
  site.joined.interval = ts.interval;
  for (const auto& c : required) site.joined.add_column(c, ts.column(c));
  site.joined.rejected = ts.rejected;
  return site;
}

data::Dataset site_dataset(const Site& site, data::Domain domain, std::size_t* dropped) {
  return data::make_dataset(site.joined, data::weather_columns(), site.capacity_kw, domain, dropped);
}

LabeledSource label_source(const Site& site, const SourceOptions& opts, std::uint64_t seed) {
  LabeledSource out;
  const auto ds = site_dataset(site, data::Domain::source, &out.dropped);
  out.splits = data::split(ds, opts.fractions, split_seed(seed), opts.chronological);
  out.bins = data::bin_labels(out.splits.train.power_frac, opts.classes, opts.scheme).edges;
  label(out.splits.train, out.bins);
  label(out.splits.val, out.bins);
  label(out.splits.test, out.bins);
  return out;
}

FeatureSelection select_source_features(const data::Dataset& train, const SourceOptions& opts, std::uint64_t seed) {
  const auto forest = forest::fit_forest(train, opts.forest, forest_seed(seed));
  FeatureSelection sel;
  sel.importances = forest::gini_importance(forest);
  sel.selected = forest::select_features(sel.importances, opts.k_features);
  sel.names = feature_names(sel.selected);
  return sel;
}

SourceRun run_source(const Site& site, const SourceOptions& opts, std::uint64_t seed, const FeatureSelection* features,
                     bool with_rf_baseline) {
  auto labeled = label_source(site, opts, seed);
  SourceRun run;
  run.dropped = labeled.dropped;
  run.features = features ? *features : select_source_features(labeled.splits.train, opts, seed);
  const auto& cols = run.features.selected;
  if (cols.empty()) throw ConfigError("no features selected");

  const auto train_raw = labeled.splits.train.select_columns(cols);
  const auto val_raw = labeled.splits.val.select_columns(cols);
  const auto test_raw = labeled.splits.test.select_columns(cols);
  if (with_rf_baseline) {
    const auto rf = forest::fit_forest(train_raw, opts.forest, derive_seed(forest_seed(seed), {1}));
    run.rf_test_accuracy = forest::accuracy(forest::predict_forest(rf, test_raw), test_raw.labels);
  }

  const auto norm = data::Normalizer::fit(train_raw);
  const auto train = norm.apply(train_raw);
  const auto val = norm.apply(val_raw);
  const auto test = norm.apply(test_raw);

  auto arch_opts = opts.arch;
  arch_opts.n_features = cols.size();
  arch_opts.n_classes = opts.classes;
  auto cfg = opts.train;
  cfg.seed = train_seed(seed);
  run.training = train::train_source(train, val, nn::default_architecture(arch_opts), cfg);
  run.test = train::evaluate(run.training.model, test);

  auto& a = run.artifact;
  a.model = run.training.model;
  a.normalizer = norm;
  a.bins = labeled.bins;
  a.feature_indices = cols;
  a.feature_names = run.features.names;
  a.provenance["kind"] = "source";
  a.provenance["seed"] = std::to_string(seed);
  a.provenance["source_site"] = site.name;
  a.provenance["best_epoch"] = std::to_string(run.training.best_epoch);
  return run;
}

data::Dataset target_dataset(const Site& site, const ModelArtifact& artifact, std::size_t* dropped) {
  auto ds = site_dataset(site, data::Domain::target, dropped);
  for (std::size_t i = 0; i < artifact.feature_indices.size(); ++i) {
    const auto idx = artifact.feature_indices[i];
    if (idx >= ds.width() || ds.feature_names[idx] != artifact.feature_names[i]) {
      throw DataError("model feature '" + artifact.feature_names[i] + "' does not match the target columns");
    }
  }
  ds = ds.select_columns(artifact.feature_indices);
  label(ds, artifact.bins);
  return artifact.normalizer.apply(ds);
}

adapt::TargetSplits prepare_target(const Site& site, const ModelArtifact& artifact, double p, std::uint64_t seed,
                                   const TargetOptions& opts, std::size_t* dropped) {
  const auto ds = target_dataset(site, artifact, dropped);
  auto s = data::split(ds, opts.fractions, split_seed(seed), opts.chronological);
  auto train = data::annotate_fraction(s.train, p, annotate_seed(seed, 0), opts.strategy);
  auto val = data::annotate_fraction(s.val, p, annotate_seed(seed, 1), opts.strategy);
  return adapt::TargetSplits(std::move(train), std::move(val), std::move(s.test));
}

}  // namespace solarda::pipeline
