#include <doctest.h>

#include <algorithm>
#include <filesystem>

#include "solarda/errors.hpp"
#include "solarda/pipeline.hpp"

using namespace solarda;
using namespace solarda::pipeline;

namespace {

const Site& small_site(const std::string& profile) {
  static std::map<std::string, Site> cache;
  auto it = cache.find(profile);
  if (it == cache.end()) {
    it = cache.emplace(profile, prepare_site(data::gen_synthetic(data::bundled_profile(profile), 2000, 7))).first;
  }
  return it->second;
}

SourceOptions fast_options() {
  SourceOptions o;
  o.forest.n_trees = 10;
  o.train.max_epochs = 2;
  o.train.batch_size = 256;
  return o;
}

}  // namespace

TEST_CASE("prepared sites join weather and averaged power") {
  const auto syn = data::gen_synthetic(data::bundled_profile("sunny-dry"), 100, 1);
  const Site s = prepare_site(syn);
  CHECK(s.joined.size() == 100);
  CHECK(s.joined.interval == 30);
  CHECK(s.capacity_kw == 100.0);
  const auto& kw = syn.power.column(data::kPowerColumn);
  double mean = 0;
  for (std::size_t i = 60; i < 66; ++i) mean += kw[i];
  CHECK(s.joined.column(data::kPowerColumn)[10] == doctest::Approx(mean / 6).epsilon(1e-12));

  const auto path = std::filesystem::temp_directory_path() / "solarda_prepared_test.csv";
  write_prepared(s, path);
  const Site back = load_prepared(path);
  CHECK(back.name == s.name);
  CHECK(back.capacity_kw == s.capacity_kw);
  CHECK(back.joined.columns == s.joined.columns);
  std::filesystem::remove(path);
}

TEST_CASE("site directories load like generated sites") {
  const auto dir = std::filesystem::temp_directory_path() / "solarda_site_dir_test";
  std::filesystem::remove_all(dir);
  const auto syn = data::gen_synthetic(data::bundled_profile("humid-cloudy"), 60, 2);
  data::write_site(syn, dir);
  const Site a = load_site_dir(dir);
  const Site b = prepare_site(syn);
  CHECK(a.joined.columns == b.joined.columns);
  std::filesystem::remove(dir / "site.txt");
  CHECK_THROWS_AS(load_site_dir(dir), DataError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("source labelling uses train-split edges and covers every row") {
  const auto labeled = label_source(small_site("sunny-dry"), SourceOptions{}, 3);
  CHECK(labeled.bins.classes() == 5);
  for (const auto* ds : {&labeled.splits.train, &labeled.splits.val, &labeled.splits.test}) {
    CHECK(ds->n_labeled() == ds->size());
    for (int l : ds->labels) {
      CHECK(l >= 0);
      CHECK(l < 5);
    }
    CHECK(ds->domain == data::Domain::source);
  }
  CHECK(labeled.splits.train.size() + labeled.splits.val.size() + labeled.splits.test.size() == 2000);
}

TEST_CASE("source run produces a consistent artifact") {
  const SourceRun run = run_source(small_site("sunny-dry"), fast_options(), 4);
  const ModelArtifact& a = run.artifact;
  CHECK(a.feature_indices.size() == 6);
  CHECK(std::is_sorted(a.feature_indices.begin(), a.feature_indices.end()));
  CHECK(a.feature_names.size() == 6);
  CHECK(a.normalizer.mean.size() == 6);
  CHECK(a.model.input_width() == 6);
  CHECK(a.provenance.at("kind") == "source");
  CHECK(run.training.history.size() == 2);
  CHECK(run.rf_test_accuracy > 0.5);
  CHECK(run.features.importances.size() == data::weather_columns().size());

  const SourceRun again = run_source(small_site("sunny-dry"), fast_options(), 4);
  CHECK(again.artifact.serialize() == a.serialize());
}

TEST_CASE("target preparation reuses the source edges, columns and normaliser") {
  const SourceRun run = run_source(small_site("sunny-dry"), fast_options(), 4, nullptr, false);
  const auto ds = target_dataset(small_site("humid-cloudy"), run.artifact);
  CHECK(ds.domain == data::Domain::target);
  CHECK(ds.feature_names == run.artifact.feature_names);
  CHECK(ds.labels == run.artifact.bins.classify(ds.power_frac));

  const auto t20 = prepare_target(small_site("humid-cloudy"), run.artifact, 20, 6);
  const auto t10 = prepare_target(small_site("humid-cloudy"), run.artifact, 10, 6);
  CHECK(t20.train().size() == 1400);
  CHECK(t20.train().n_labeled() == 280);
  CHECK(t20.val().n_labeled() == 60);
  CHECK(t20.test().n_labeled() == t20.test().size());
  // annotations are nested across p for a fixed seed
  for (std::size_t i = 0; i < t10.train().size(); ++i) {
    if (t10.train().labels[i] != nn::kUnlabeled) CHECK(t20.train().labels[i] == t10.train().labels[i]);
  }
}

TEST_CASE("target preparation rejects a feature mismatch") {
  const SourceRun run = run_source(small_site("sunny-dry"), fast_options(), 4, nullptr, false);
  ModelArtifact bad = run.artifact;
  bad.feature_names[0] = "cloud_type";
  CHECK_THROWS_AS(target_dataset(small_site("humid-cloudy"), bad), DataError);
}
