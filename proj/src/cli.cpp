#include "solarda/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <map>
#include <memory>
#include <ostream>
#include <sstream>

#include "solarda/artifact.hpp"
#include "solarda/errors.hpp"
#include "solarda/experiment.hpp"
#include "solarda/hashing.hpp"
#include "solarda/kvconfig.hpp"
#include "solarda/pipeline.hpp"
#include "solarda/report.hpp"

namespace solarda::cli {

namespace {

namespace fs = std::filesystem;

std::string dashed(std::string key) {
  std::replace(key.begin(), key.end(), '_', '-');
  return key;
}

/// Options resolved as defaults < --config file < command-line flags.
class Layered {
 public:
  explicit Layered(CLI::App* app) : app_(app) {
    app_->add_option("--config", config_path_, "key=value file; flags override it");
  }

  void opt(const std::string& key, const std::string& fallback, const std::string& help) {
    defaults_.set(key, fallback);
    auto* o = app_->add_option("--" + dashed(key), values_[key], help);
    if (!fallback.empty()) o->description(help + " [" + fallback + "]");
  }

  KeyValues resolve() const {
    KeyValues kv = defaults_;
    if (!config_path_.empty()) {
      const auto file = KeyValues::load(config_path_);
      for (const auto& [k, v] : file.items()) {
        if (!defaults_.contains(k)) throw ConfigError(config_path_ + ": unknown key '" + k + "'");
      }
      kv.merge(file);
    }
    for (const auto& [k, v] : values_) {
      if (app_->get_option("--" + dashed(k))->count() > 0) kv.set(k, v);
    }
    return kv;
  }

  const std::string& config_path() const { return config_path_; }

 private:
  CLI::App* app_;
  std::string config_path_;
  KeyValues defaults_;
  std::map<std::string, std::string> values_;
};

std::uint64_t get_u64(const KeyValues& kv, const std::string& key) {
  const auto v = kv.get_int(key, 0);
  if (v < 0) throw ConfigError(key + " must be non-negative");
  return std::uint64_t(v);
}

std::size_t get_size(const KeyValues& kv, const std::string& key) { return std::size_t(get_u64(kv, key)); }

bool get_bool(const KeyValues& kv, const std::string& key) {
  const auto v = kv.get_or(key, "0");
  if (v == "1" || v == "true" || v == "yes") return true;
  if (v == "0" || v == "false" || v == "no") return false;
  throw ConfigError(key + " expects 0/1, got '" + v + "'");
}

class Manifest {
 public:
  Manifest(std::string command, const KeyValues& config) {
    kv_.set("command", std::move(command));
    kv_.set("tool_version", kVersion);
    kv_.set("model_format_version", std::to_string(kArtifactVersion));
    for (const auto& [k, v] : config.items()) kv_.set("config." + k, v);
    kv_.set("config_sha256", sha256_hex(config.serialize()));
  }
  void input(const std::string& name, const fs::path& path) { file("input." + name, path); }
  void output(const std::string& name, const fs::path& path) { file("output." + name, path); }
  void set(const std::string& key, const std::string& value) { kv_.set(key, value); }
  void save(const fs::path& path) const { kv_.save(path); }

 private:
  void file(const std::string& prefix, const fs::path& path) {
    kv_.set(prefix + ".path", path.generic_string());
    kv_.set(prefix + ".sha256", sha256_file(path));
  }
  KeyValues kv_;
};

fs::path manifest_for(const fs::path& out) { return fs::path(out.string() + ".manifest"); }

void require_file(const fs::path& path, const std::string& what, const std::string& stage) {
  if (!fs::exists(path)) throw DataError("missing " + what + " '" + path.string() + "' (run " + stage + " first)");
}

void ensure_parent(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
}

pipeline::SourceOptions source_options(const KeyValues& kv) {
  pipeline::SourceOptions o;
  o.classes = get_size(kv, "classes");
  o.scheme = data::parse_bin_scheme(kv.get_or("bin_scheme", "zero-plus-quantile"));
  o.k_features = get_size(kv, "k");
  o.forest.n_trees = get_size(kv, "n_trees");
  o.forest.max_depth = get_size(kv, "max_depth");
  o.forest.min_leaf = get_size(kv, "min_leaf");
  o.chronological = get_bool(kv, "chronological");
  o.train.lr = kv.get_double("lr", 1e-4);
  o.train.batch_size = get_size(kv, "batch_size");
  o.train.max_epochs = get_size(kv, "max_epochs");
  o.train.patience = get_size(kv, "patience");
  if (o.classes < 2) throw ConfigError("classes must be at least 2");
  o.train.validate();
  return o;
}

void source_opts(Layered& l) {
  l.opt("seed", "1", "run seed");
  l.opt("classes", "5", "number of power bins");
  l.opt("bin_scheme", "zero-plus-quantile", "zero-plus-quantile or equal-width");
  l.opt("k", "6", "features kept by the forest ranking");
  l.opt("n_trees", "100", "forest size");
  l.opt("max_depth", "12", "forest tree depth");
  l.opt("min_leaf", "5", "forest minimum leaf size");
  l.opt("chronological", "0", "1 = chronological instead of shuffled split");
  l.opt("lr", "0.0001", "Adam learning rate");
  l.opt("batch_size", "1000", "mini-batch size");
  l.opt("max_epochs", "200", "source training epoch cap");
  l.opt("patience", "20", "early-stop patience (epochs)");
}

// The experiment grid carries p as a list and sets it per cell.
adapt::AdaptConfig adapt_config(const KeyValues& kv, bool with_p = true) {
  adapt::AdaptConfig c;
  c.alpha = kv.get_double("alpha", c.alpha);
  c.lambda = kv.get_double("lambda", c.lambda);
  if (with_p) c.p = kv.get_double("p", c.p);
  c.epochs = get_size(kv, "epochs");
  c.batch_size = get_size(kv, "adapt_batch_size");
  c.temperature = kv.get_double("temperature", c.temperature);
  c.lr = kv.get_double("adapt_lr", c.lr);
  const auto ratio = kv.get_or("labeled_fraction", "");
  if (!ratio.empty() && ratio != "natural") c.labeled_fraction_per_batch = kv.get_double("labeled_fraction", 0.0);
  c.early_stop = get_bool(kv, "early_stop");
  c.patience = get_size(kv, "adapt_patience");
  const auto bn = kv.get_or("teacher_bn", "copy");
  if (bn == "copy") {
    c.teacher_bn = optim::RunningStats::copy;
  } else if (bn == "ema") {
    c.teacher_bn = optim::RunningStats::ema;
  } else if (bn == "keep") {
    c.teacher_bn = optim::RunningStats::keep;
  } else {
    throw ConfigError("teacher_bn must be copy, ema or keep");
  }
  c.validate();
  return c;
}

void adapt_opts(Layered& l, bool with_p) {
  l.opt("alpha", "0.99", "EMA decay of the teacher");
  l.opt("lambda", "1", "weight of the labelled cross-entropy");
  if (with_p) l.opt("p", "20", "annotated percentage of target training data");
  l.opt("epochs", "50", "adaptation epochs");
  l.opt("adapt_batch_size", "1000", "adaptation mini-batch size");
  l.opt("temperature", "1", "teacher softmax temperature");
  l.opt("adapt_lr", "0.0001", "student Adam learning rate");
  l.opt("labeled_fraction", "natural", "labelled share per batch, or 'natural'");
  l.opt("early_stop", "0", "1 = early stop on labelled target val accuracy (p >= 10)");
  l.opt("adapt_patience", "10", "adaptation early-stop patience");
  l.opt("teacher_bn", "copy", "teacher BN running stats: copy, ema or keep");
}

pipeline::TargetOptions target_options(const KeyValues& kv) {
  pipeline::TargetOptions t;
  t.chronological = get_bool(kv, "chronological");
  const auto s = kv.get_or("strategy", "uniform");
  if (s == "uniform") {
    t.strategy = data::AnnotationStrategy::uniform;
  } else if (s == "stratified") {
    t.strategy = data::AnnotationStrategy::stratified;
  } else {
    throw ConfigError("strategy must be uniform or stratified");
  }
  return t;
}

std::string sanitize(std::string s) {
  for (char& c : s) {
    if (c == ' ' || c == '\t' || c == '\n' || c == '=') c = '_';
  }
  return s;
}

// --- commands --------------------------------------------------------------

struct Context {
  std::ostream& out;
  std::ostream& err;
};

void cmd_synth(const KeyValues& kv, const std::string& out_dir, const std::string& profile_file, Context& ctx) {
  auto profile = data::bundled_profile(kv.get_or("profile", "sunny-dry"));
  if (!profile_file.empty()) profile = data::LocationProfile::from_keyvalues(KeyValues::load(profile_file), profile);
  const auto site = data::gen_synthetic(profile, get_size(kv, "n"), get_u64(kv, "seed"));
  const fs::path dir(out_dir);
  data::write_site(site, dir);
  profile.to_keyvalues().save(dir / "profile.txt");
  Manifest m("synth", kv);
  if (!profile_file.empty()) m.input("profile", profile_file);
  for (const char* f : {"weather.csv", "power.csv", "site.txt", "profile.txt"}) m.output(fs::path(f).stem().string(), dir / f);
  m.save(dir / "manifest.txt");
  ctx.out << "wrote " << site.weather.size() << " weather rows and " << site.power.size() << " power rows to "
          << dir.string() << "\n";
}

void cmd_prep(const KeyValues& kv, const std::string& site_dir, const std::string& out, Context& ctx) {
  require_file(site_dir, "site directory", "synth");
  const auto site = pipeline::load_site_dir(site_dir);
  ensure_parent(out);
  pipeline::write_prepared(site, out);
  std::size_t dropped = 0;
  const auto ds = pipeline::site_dataset(site, data::Domain::source, &dropped);
  Manifest m("prep", kv);
  for (const char* f : {"weather.csv", "power.csv", "site.txt"}) m.input(fs::path(f).stem().string(), fs::path(site_dir) / f);
  m.output("data", out);
  m.set("rows", std::to_string(site.joined.size()));
  m.set("rows_complete", std::to_string(ds.size()));
  m.set("rows_dropped_missing", std::to_string(dropped));
  m.save(manifest_for(out));
  ctx.out << "prepared " << site.joined.size() << " rows (" << dropped << " with missing values) -> " << out << "\n";
}

void cmd_select(const KeyValues& kv, const std::string& data_path, const std::string& out, Context& ctx) {
  require_file(data_path, "prepared data", "prep");
  const auto site = pipeline::load_prepared(data_path);
  const auto opts = source_options(kv);
  const auto seed = get_u64(kv, "seed");
  const auto labeled = pipeline::label_source(site, opts, seed);
  const auto sel = pipeline::select_source_features(labeled.splits.train, opts, seed);
  KeyValues result;
  const auto& cols = data::weather_columns();
  for (std::size_t i = 0; i < cols.size(); ++i) result.set("importance." + cols[i], data::format_double(sel.importances[i]));
  std::string idx, names;
  for (std::size_t i = 0; i < sel.selected.size(); ++i) {
    idx += (i ? "," : "") + std::to_string(sel.selected[i]);
    names += (i ? "," : "") + sel.names[i];
  }
  result.set("selected", idx);
  result.set("selected_names", names);
  ensure_parent(out);
  result.save(out);
  Manifest m("select-features", kv);
  m.input("data", data_path);
  m.output("features", out);
  m.save(manifest_for(out));
  ctx.out << "selected features: " << names << "\n";
}

pipeline::FeatureSelection load_selection(const fs::path& path) {
  const auto kv = KeyValues::load(path);
  pipeline::FeatureSelection sel;
  const auto& cols = data::weather_columns();
  for (const auto& c : cols) sel.importances.push_back(kv.get_double("importance." + c, 0.0));
  const auto sel_text = kv.get("selected");
  if (!sel_text) throw DataError(path.string() + " lacks 'selected' (run select-features)");
  for (double v : experiment::parse_numbers(*sel_text)) {
    if (v < 0 || std::size_t(v) >= cols.size() || double(std::size_t(v)) != v) {
      throw DataError(path.string() + ": bad feature index");
    }
    sel.selected.push_back(std::size_t(v));
    sel.names.push_back(cols[std::size_t(v)]);
  }
  return sel;
}

void cmd_train(const KeyValues& kv, const std::string& data_path, const std::string& features_path,
               const std::string& out, const std::string& history, Context& ctx) {
  require_file(data_path, "prepared data", "prep");
  const auto site = pipeline::load_prepared(data_path);
  const auto opts = source_options(kv);
  std::optional<pipeline::FeatureSelection> sel;
  if (!features_path.empty()) {
    require_file(features_path, "feature selection", "select-features");
    sel = load_selection(features_path);
  }
  const bool rf = get_bool(kv, "rf_baseline");
  auto run = pipeline::run_source(site, opts, get_u64(kv, "seed"), sel ? &*sel : nullptr, rf);
  run.artifact.provenance["source_data_sha256"] = sha256_file(data_path);
  run.artifact.provenance["config_sha256"] = sha256_hex(kv.serialize());
  run.artifact.provenance["source_site"] = sanitize(site.name);
  ensure_parent(out);
  run.artifact.save(out);
  Manifest m("train-source", kv);
  m.input("data", data_path);
  if (!features_path.empty()) m.input("features", features_path);
  if (!history.empty()) {
    std::ofstream h(history, std::ios::binary);
    h << "epoch,train_loss,train_accuracy,val_loss,val_accuracy\n";
    for (const auto& e : run.training.history) {
      h << e.epoch << ',' << data::format_double(e.train_loss) << ',' << data::format_double(e.train_accuracy) << ','
        << data::format_double(e.val_loss) << ',' << data::format_double(e.val_accuracy) << "\n";
    }
    h.close();
    m.output("history", history);
  }
  m.output("model", out);
  m.set("test_accuracy", data::format_double(run.test.accuracy));
  if (rf) m.set("rf_test_accuracy", data::format_double(run.rf_test_accuracy));
  m.save(manifest_for(out));
  ctx.out << "source test accuracy " << report::percent(run.test.accuracy) << "% (best epoch " << run.training.best_epoch
          << " of " << run.training.history.size() << ")";
  if (rf) ctx.out << ", random forest " << report::percent(run.rf_test_accuracy) << "%";
  ctx.out << "\n";
}

void cmd_adapt(const KeyValues& kv, const std::string& model_path, const std::string& target_path,
               const std::string& out, const std::string& log_path, const std::vector<std::string>& source_flags,
               Context& ctx) {
  if (!source_flags.empty()) {
    throw ContractError("adapt is source-free: source data (" + source_flags.front() + ") cannot be passed");
  }
  require_file(model_path, "model artifact", "train-source");
  require_file(target_path, "target data", "prep");
  const auto artifact = ModelArtifact::load(model_path);
  const auto target_hash = sha256_file(target_path);
  const auto src_hash = artifact.provenance.find("source_data_sha256");
  if (src_hash != artifact.provenance.end() && src_hash->second == target_hash) {
    throw ContractError("adapt is source-free: " + target_path + " is the model's source training data");
  }
  const auto cfg_base = adapt_config(kv);
  const auto seed = get_u64(kv, "seed");
  const auto site = pipeline::load_prepared(target_path);
  const auto splits = pipeline::prepare_target(site, artifact, cfg_base.p, seed, target_options(kv));
  auto cfg = cfg_base;
  cfg.seed = experiment::cell_seed(seed, sanitize(site.name), cfg.p);
  const auto result = adapt::adapt_target(artifact.model, splits, cfg);
  const auto& r = result.report;

  ModelArtifact adapted = artifact;
  adapted.model = result.teacher;
  adapted.provenance["kind"] = "adapted";
  adapted.provenance["adapt_seed"] = std::to_string(seed);
  adapted.provenance["adapt_p"] = data::format_double(cfg.p);
  adapted.provenance["target_site"] = sanitize(site.name);
  adapted.provenance["target_data_sha256"] = target_hash;
  adapted.provenance["adapt_config_sha256"] = sha256_hex(kv.serialize());
  ensure_parent(out);
  adapted.save(out);

  Manifest m("adapt", kv);
  m.input("model", model_path);
  m.input("target", target_path);
  m.output("model", out);
  if (!log_path.empty()) {
    std::ofstream lg(log_path, std::ios::binary);
    lg << "step,l_cons,l_ce,l_total,n_labeled,n_total\n";
    for (std::size_t i = 0; i < r.steps.size(); ++i) {
      const auto& s = r.steps[i];
      lg << i << ',' << data::format_double(s.l_cons) << ',' << data::format_double(s.l_ce) << ','
         << data::format_double(s.l_total) << ',' << s.n_labeled << ',' << s.n_total << "\n";
    }
    lg.close();
    m.output("log", log_path);
  }
  m.set("source_inputs", "none");
  m.set("source_reads", std::to_string(r.source_samples_read));
  m.set("target_reads", std::to_string(r.target_samples_read));
  m.set("steps", std::to_string(r.steps.size()));
  m.set("accuracy", data::format_double(r.teacher.accuracy));
  m.set("acc_no_adapt", data::format_double(r.no_adapt.accuracy));
  m.set("delta", data::format_double(r.delta));
  m.save(manifest_for(out));
  ctx.out << "target test accuracy: no adapt " << report::percent(r.no_adapt.accuracy) << "%, adapted teacher "
          << report::percent(r.teacher.accuracy) << "% (delta " << report::percent(r.delta) << ")\n";
}

void cmd_eval(const KeyValues& kv, const std::string& model_path, const std::string& data_path,
              const std::string& format, Context& ctx) {
  require_file(model_path, "model artifact", "train-source");
  require_file(data_path, "prepared data", "prep");
  const auto artifact = ModelArtifact::load(model_path);
  const auto site = pipeline::load_prepared(data_path);
  const auto ds = pipeline::target_dataset(site, artifact);
  const auto which = kv.get_or("split", "test");
  data::Dataset part;
  if (which == "all") {
    part = ds;
  } else {
    const auto s = data::split(ds, {}, pipeline::split_seed(get_u64(kv, "seed")), get_bool(kv, "chronological"));
    if (which == "train") {
      part = s.train;
    } else if (which == "val") {
      part = s.val;
    } else if (which == "test") {
      part = s.test;
    } else {
      throw ConfigError("split must be train, val, test or all");
    }
  }
  const auto r = train::evaluate(artifact.model, part);
  if (format == "csv") {
    ctx.out << "split,n,accuracy\n" << which << ',' << r.n << ',' << data::format_double(r.accuracy) << "\n";
    return;
  }
  ctx.out << "split " << which << ": n=" << r.n << " accuracy " << report::percent(r.accuracy) << "%\n";
  ctx.out << "confusion (rows = truth):\n";
  for (const auto& row : r.confusion) {
    for (std::size_t c = 0; c < row.size(); ++c) ctx.out << (c ? " " : "  ") << row[c];
    ctx.out << "\n";
  }
}

void render_reports(const std::vector<report::ResultRow>& rows, const std::vector<report::SourceScore>* sources,
                    const fs::path& dir) {
  fs::create_directories(dir);
  const auto grid = report::aggregate(rows);
  auto write = [&](const char* name, const std::string& text) {
    std::ofstream f(dir / name, std::ios::binary);
    if (!f) throw DataError("cannot write " + (dir / name).string());
    f << text;
  };
  write("table2.csv", report::table2_csv(grid));
  write("table2.txt", report::table2_text(grid));
  write("deltas.csv", report::deltas_csv(grid));
  write("deltas.txt", report::deltas_text(grid));
  write("curves.csv", report::curves_csv(grid));
  if (sources) {
    write("table1.csv", report::table1_csv(*sources));
    write("table1.txt", report::table1_text(*sources));
  }
}

void cmd_experiment(const KeyValues& kv, const std::string& out, Context& ctx) {
  experiment::ExperimentConfig cfg;
  cfg.sources = experiment::parse_names(kv.get_or("sources", ""));
  cfg.targets = experiment::parse_names(kv.get_or("targets", ""));
  cfg.ps = experiment::parse_numbers(kv.get_or("p", ""));
  cfg.seeds = experiment::parse_seeds(kv.get_or("seeds", ""));
  cfg.n = get_size(kv, "n");
  cfg.data_seed = get_u64(kv, "data_seed");
  cfg.jobs = get_size(kv, "jobs");
  cfg.rf_baseline = get_bool(kv, "rf_baseline");
  cfg.source = source_options(kv);
  cfg.target = target_options(kv);
  cfg.adapt = adapt_config(kv, false);
  const auto result = experiment::run_experiment(cfg, [&](const std::string& msg) { ctx.err << msg << "\n"; });
  const fs::path dir(out);
  fs::create_directories(dir);
  report::write_results(result.cells, dir / "results.csv");
  report::write_source_scores(result.sources, dir / "source_results.csv");
  experiment::write_failed(result.failed, dir / "failed.csv");
  render_reports(result.cells, &result.sources, dir);
  Manifest m("experiment", kv);
  for (const auto& spec : cfg.sources) {
    if (fs::is_regular_file(spec)) m.input("site." + experiment::site_label(spec), spec);
  }
  for (const char* f : {"results.csv", "source_results.csv", "failed.csv", "table2.csv", "deltas.csv", "curves.csv",
                        "table1.csv"}) {
    m.output(fs::path(f).stem().string(), dir / f);
  }
  m.set("cells_ok", std::to_string(result.cells.size()));
  m.set("cells_failed", std::to_string(result.failed.size()));
  m.save(dir / "manifest.txt");
  ctx.out << report::table2_text(report::aggregate(result.cells));
  if (!result.failed.empty()) ctx.err << result.failed.size() << " cell(s) failed, see failed.csv\n";
}

void cmd_report(const KeyValues& kv, const std::string& results, const std::string& sources_path,
                const std::string& out_dir, const std::string& format, Context& ctx) {
  const auto rows = report::read_results(results);
  std::optional<std::vector<report::SourceScore>> sources;
  if (!sources_path.empty()) sources = report::read_source_scores(sources_path);
  const auto grid = report::aggregate(rows);
  if (format == "csv") {
    ctx.out << report::table2_csv(grid) << "\n" << report::deltas_csv(grid);
    if (sources) ctx.out << "\n" << report::table1_csv(*sources);
  } else {
    ctx.out << report::table2_text(grid) << "\n" << report::deltas_text(grid);
    if (sources) ctx.out << "\n" << report::table1_text(*sources);
  }
  if (!out_dir.empty()) {
    render_reports(rows, sources ? &*sources : nullptr, out_dir);
    Manifest m("report", kv);
    m.input("results", results);
    if (sources) m.input("sources", sources_path);
    m.output("table2", fs::path(out_dir) / "table2.csv");
    m.output("deltas", fs::path(out_dir) / "deltas.csv");
    m.save(fs::path(out_dir) / "manifest.txt");
  }
}

int fail(std::ostream& err, int code, const std::string& kind, const std::string& what) {
  err << "error (" << kind << "): " << what << "\n";
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Source-free teacher-student adaptation of solar power classifiers", "solarda"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);
  Context ctx{out, err};
  std::string format = "text";

  auto* synth = app.add_subcommand("synth", "generate a synthetic site (weather.csv, power.csv)");
  Layered synth_l(synth);
  synth_l.opt("profile", "sunny-dry", "bundled profile name");
  synth_l.opt("seed", "1", "generator seed");
  synth_l.opt("n", std::to_string(data::kSamplesPerYear), "30-minute weather rows");
  std::string synth_out, profile_file;
  synth->add_option("--out", synth_out, "output directory")->required();
  synth->add_option("--profile-file", profile_file, "key=value overrides of profile fields");

  auto* prep = app.add_subcommand("prep", "average power to the weather grid and join");
  Layered prep_l(prep);
  std::string prep_site, prep_out;
  prep->add_option("--site", prep_site, "site directory from synth")->required();
  prep->add_option("--out", prep_out, "prepared CSV")->required();

  auto* select = app.add_subcommand("select-features", "rank weather features with a random forest");
  Layered select_l(select);
  source_opts(select_l);
  std::string select_data, select_out;
  select->add_option("--data", select_data, "prepared source CSV")->required();
  select->add_option("--out", select_out, "feature selection file")->required();

  auto* trn = app.add_subcommand("train-source", "train the source model and write the model artifact");
  Layered train_l(trn);
  source_opts(train_l);
  train_l.opt("rf_baseline", "0", "1 = also report a random forest on the same split");
  std::string train_data, train_features, train_out, train_history;
  trn->add_option("--data", train_data, "prepared source CSV")->required();
  trn->add_option("--features", train_features, "selection from select-features (default: rank here)");
  trn->add_option("--out", train_out, "model artifact")->required();
  trn->add_option("--history", train_history, "per-epoch CSV");

  auto* adp = app.add_subcommand("adapt", "adapt a model artifact to target data (no source data)");
  Layered adapt_l(adp);
  adapt_l.opt("seed", "1", "run seed");
  adapt_l.opt("chronological", "0", "1 = chronological instead of shuffled split");
  adapt_l.opt("strategy", "uniform", "annotation sampling: uniform or stratified");
  adapt_opts(adapt_l, true);
  std::string adapt_model, adapt_target, adapt_out, adapt_log;
  adp->add_option("--model", adapt_model, "source model artifact")->required();
  adp->add_option("--target", adapt_target, "prepared target CSV")->required();
  adp->add_option("--out", adapt_out, "adapted model artifact")->required();
  adp->add_option("--log", adapt_log, "per-step loss CSV");
  std::vector<std::string> forbidden;
  for (const char* name : {"--source", "--source-data", "--source-csv", "--source-dir"}) {
    adp->add_option_function<std::string>(name, [&forbidden, name](const std::string&) { forbidden.push_back(name); })
        ->group("");
  }

  auto* ev = app.add_subcommand("eval", "evaluate a model artifact on prepared data");
  Layered eval_l(ev);
  eval_l.opt("seed", "1", "split seed");
  eval_l.opt("split", "test", "train, val, test or all");
  eval_l.opt("chronological", "0", "1 = chronological split");
  std::string eval_model, eval_data;
  ev->add_option("--model", eval_model, "model artifact")->required();
  ev->add_option("--data", eval_data, "prepared CSV")->required();
  ev->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

  auto* exp = app.add_subcommand("experiment", "run the source x target x p x seed grid");
  Layered exp_l(exp);
  exp_l.opt("sources", "sunny-dry,humid-subtropical,humid-continental", "profiles, site dirs or prepared CSVs");
  exp_l.opt("targets", "sunny-dry,humid-subtropical,humid-continental", "profiles, site dirs or prepared CSVs");
  exp_l.opt("p", "0,10,20,50,100", "annotation percentages");
  exp_l.opt("seeds", "1..5", "seed range a..b or list");
  exp_l.opt("n", std::to_string(data::kSamplesPerYear), "rows per synthetic site");
  exp_l.opt("data_seed", "2006", "seed of the synthetic sites");
  exp_l.opt("jobs", "0", "worker threads (0 = all cores)");
  exp_l.opt("rf_baseline", "1", "1 = fit the random forest baseline");
  exp_l.opt("strategy", "uniform", "annotation sampling: uniform or stratified");
  source_opts(exp_l);
  adapt_opts(exp_l, false);
  std::string exp_out;
  exp->add_option("--out", exp_out, "output directory")->required();

  auto* rep = app.add_subcommand("report", "render the method comparison, accuracy grid and gain tables from stored results");
  Layered rep_l(rep);
  std::string rep_results, rep_sources, rep_out;
  rep->add_option("--results", rep_results, "results CSV")->required();
  rep->add_option("--sources", rep_sources, "source_results.csv for the method comparison");
  rep->add_option("--out", rep_out, "directory for the rendered files");
  rep->add_option("--format", format, "text or csv")->check(CLI::IsMember({"text", "csv"}));

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  try {
    if (synth->parsed()) cmd_synth(synth_l.resolve(), synth_out, profile_file, ctx);
    if (prep->parsed()) cmd_prep(prep_l.resolve(), prep_site, prep_out, ctx);
    if (select->parsed()) cmd_select(select_l.resolve(), select_data, select_out, ctx);
    if (trn->parsed()) cmd_train(train_l.resolve(), train_data, train_features, train_out, train_history, ctx);
    if (adp->parsed()) cmd_adapt(adapt_l.resolve(), adapt_model, adapt_target, adapt_out, adapt_log, forbidden, ctx);
    if (ev->parsed()) cmd_eval(eval_l.resolve(), eval_model, eval_data, format, ctx);
    if (exp->parsed()) cmd_experiment(exp_l.resolve(), exp_out, ctx);
    if (rep->parsed()) cmd_report(rep_l.resolve(), rep_results, rep_sources, rep_out, format, ctx);
  } catch (const ContractError& e) {
    return fail(err, kContract, "contract", e.what());
  } catch (const ConfigError& e) {
    return fail(err, kUsage, "usage", e.what());
  } catch (const DataError& e) {
    return fail(err, kDataError, "data", e.what());
  } catch (const ShapeError& e) {
    return fail(err, kDataError, "data", e.what());
  } catch (const NumericError& e) {
    return fail(err, kDataError, "numeric", e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(err, kDataError, "io", e.what());
  } catch (const std::exception& e) {
    return fail(err, kFailure, "internal", e.what());
  }
  return kOk;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace solarda::cli
