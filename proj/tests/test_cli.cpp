#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "solarda/artifact.hpp"
#include "solarda/cli.hpp"
#include "solarda/hashing.hpp"
#include "solarda/kvconfig.hpp"

using namespace solarda;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string out, err;
};

Run cli_run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = cli::run(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const std::vector<std::string> kFastTrain{"--n-trees", "10", "--max-epochs", "2", "--batch-size", "256"};
const std::vector<std::string> kFastAdapt{"--epochs", "1", "--adapt-batch-size", "256"};

std::vector<std::string> cat(std::vector<std::string> a, const std::vector<std::string>& b) {
  a.insert(a.end(), b.begin(), b.end());
  return a;
}

// Small source model and target CSV shared by the tests, built once through the CLI.
struct Workspace {
  fs::path dir = fs::temp_directory_path() / "solarda_cli_test";
  fs::path src_csv = dir / "src.csv";
  fs::path tgt_csv = dir / "tgt.csv";
  fs::path model = dir / "src.model";

  Workspace() {
    fs::remove_all(dir);
    for (const auto& [name, profile] : {std::pair{"src", "sunny-dry"}, std::pair{"tgt", "humid-cloudy"}}) {
      const auto site = (dir / name).string();
      REQUIRE(cli_run({"synth", "--profile", profile, "--n", "2000", "--seed", "3", "--out", site}).code == 0);
      REQUIRE(cli_run({"prep", "--site", site, "--out", (dir / (std::string(name) + ".csv")).string()}).code == 0);
    }
    const auto r = cli_run(cat({"train-source", "--data", src_csv.string(), "--out", model.string()}, kFastTrain));
    REQUIRE_MESSAGE(r.code == 0, r.err);
  }

  Run adapt(const fs::path& out, std::vector<std::string> extra = {}) const {
    return cli_run(cat(cat({"adapt", "--model", model.string(), "--target", tgt_csv.string(), "--out", out.string()},
                           kFastAdapt),
                       extra));
  }
};

const Workspace& ws() {
  static Workspace w;
  return w;
}

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli_run({}).code == cli::kUsage);
  CHECK(cli_run({"frobnicate"}).code == cli::kUsage);
  CHECK(cli_run({"synth"}).code == cli::kUsage);
  CHECK(cli_run({"synth", "--out", "x", "--bogus", "1"}).code == cli::kUsage);
  CHECK(cli_run({"--version"}).code == cli::kOk);
  const auto help = cli_run({"adapt", "--help"});
  CHECK(help.code == cli::kOk);
  CHECK(help.out.find("--teacher-bn") != std::string::npos);
  CHECK(help.out.find("--source") == std::string::npos);
}

TEST_CASE("help lists the documented flags") {
  const auto h = cli_run({"experiment", "--help"}).out;
  for (const char* f : {"--seed", "--config", "--p", "--alpha", "--lambda", "--epochs", "--out"}) {
    CHECK_MESSAGE(h.find(f) != std::string::npos, f);
  }
  CHECK(cli_run({"synth", "--help"}).out.find("--profile") != std::string::npos);
  CHECK(cli_run({"report", "--help"}).out.find("--format") != std::string::npos);
}

TEST_CASE("unknown profile lists the bundled ones") {
  const auto r = cli_run({"synth", "--profile", "atlantis", "--out", (fs::temp_directory_path() / "x").string()});
  CHECK(r.code == cli::kUsage);
  CHECK(r.err.find("sunny-dry") != std::string::npos);
}

TEST_CASE("missing inputs exit 3 and name the stage") {
  const auto r = cli_run({"prep", "--site", "/nonexistent/site", "--out", "/tmp/solarda_never.csv"});
  CHECK(r.code == cli::kDataError);
  CHECK(r.err.find("synth") != std::string::npos);
  const auto e = cli_run({"eval", "--model", "/nonexistent.model", "--data", ws().tgt_csv.string()});
  CHECK(e.code == cli::kDataError);
  CHECK(e.err.find("train-source") != std::string::npos);
  CHECK(cli_run({"report", "--results", "/nonexistent/results.csv"}).code == cli::kDataError);
}

TEST_CASE("config layering: defaults < file < flags") {
  const auto& w = ws();
  const fs::path cfg = w.dir / "adapt.cfg";
  {
    std::ofstream f(cfg);
    f << "# adaptation overrides\nalpha = 0.5\nepochs = 1\n";
  }
  const fs::path out = w.dir / "layer.model";
  REQUIRE(w.adapt(out, {"--config", cfg.string(), "--alpha", "0.9"}).code == 0);
  const auto m = KeyValues::load(out.string() + ".manifest");
  CHECK(m.get_or("config.alpha", "") == "0.9");
  CHECK(m.get_or("config.epochs", "") == "1");
  CHECK(m.get_or("config.lambda", "") == "1");

  {
    std::ofstream f(cfg);
    f << "alpah = 0.5\n";
  }
  CHECK(w.adapt(out, {"--config", cfg.string()}).code == cli::kUsage);
  CHECK(w.adapt(out, {"--teacher-bn", "sometimes"}).code == cli::kUsage);
  CHECK(w.adapt(out, {"--alpha", "1.5"}).code == cli::kUsage);
}

TEST_CASE("adapt is source-free") {
  const auto& w = ws();
  const fs::path out = w.dir / "sf.model";
  for (const char* flag : {"--source", "--source-csv", "--source-data", "--source-dir"}) {
    const auto r = w.adapt(out, {flag, w.src_csv.string()});
    CHECK_MESSAGE(r.code == cli::kContract, flag);
    CHECK(r.err.find("source-free") != std::string::npos);
  }
  CHECK_FALSE(fs::exists(out));

  // The source training file passed as the target is caught by its hash.
  const auto r = cli_run(cat({"adapt", "--model", w.model.string(), "--target", w.src_csv.string(), "--out",
                              out.string()},
                             kFastAdapt));
  CHECK(r.code == cli::kContract);

  const auto ok = w.adapt(out);
  REQUIRE_MESSAGE(ok.code == 0, ok.err);
  const auto m = KeyValues::load(out.string() + ".manifest");
  CHECK(m.get_or("source_inputs", "") == "none");
  CHECK(m.get_or("source_reads", "") == "0");
  CHECK(m.get_int("target_reads", 0) > 0);
  CHECK(m.get_or("input.model.sha256", "").size() == 64);
  CHECK(m.get_or("input.target.sha256", "") == sha256_file(w.tgt_csv));
  CHECK(m.get_or("output.model.sha256", "") == sha256_file(out));
  for (const auto& [k, v] : m.items()) {
    CHECK_MESSAGE(v.find(w.src_csv.filename().string()) == std::string::npos, k);
  }
}

TEST_CASE("adapt log: p=0 has zero labelled loss") {
  const auto& w = ws();
  const fs::path out = w.dir / "p0.model", log = w.dir / "p0.log";
  REQUIRE(w.adapt(out, {"--p", "0", "--log", log.string()}).code == 0);
  std::ifstream in(log);
  std::string line;
  std::getline(in, line);
  CHECK(line == "step,l_cons,l_ce,l_total,n_labeled,n_total");
  std::size_t steps = 0;
  while (std::getline(in, line)) {
    std::vector<std::string> c;
    std::stringstream ss(line);
    for (std::string s; std::getline(ss, s, ',');) c.push_back(s);
    REQUIRE(c.size() == 6);
    CHECK(c[2] == "0");
    CHECK(c[1] == c[3]);
    CHECK(c[4] == "0");
    ++steps;
  }
  CHECK(steps > 0);
}

TEST_CASE("same seed gives identical files") {
  const auto& w = ws();
  const fs::path a = w.dir / "det_a.model", b = w.dir / "det_b.model";
  REQUIRE(w.adapt(a, {"--seed", "4"}).code == 0);
  REQUIRE(w.adapt(b, {"--seed", "4"}).code == 0);
  CHECK(slurp(a) == slurp(b));
  const fs::path c = w.dir / "det_c.model";
  REQUIRE(w.adapt(c, {"--seed", "5"}).code == 0);
  CHECK(slurp(a) != slurp(c));

  const fs::path m2 = w.dir / "src2.model";
  REQUIRE(cli_run(cat({"train-source", "--data", w.src_csv.string(), "--out", m2.string()}, kFastTrain)).code == 0);
  CHECK(slurp(m2) == slurp(w.model));

  const fs::path s1 = w.dir / "s1", s2 = w.dir / "s2";
  REQUIRE(cli_run({"synth", "--profile", "humid-subtropical", "--n", "500", "--out", s1.string()}).code == 0);
  REQUIRE(cli_run({"synth", "--profile", "humid-subtropical", "--n", "500", "--out", s2.string()}).code == 0);
  CHECK(slurp(s1 / "weather.csv") == slurp(s2 / "weather.csv"));
  CHECK(slurp(s1 / "power.csv") == slurp(s2 / "power.csv"));
}

TEST_CASE("eval and select-features") {
  const auto& w = ws();
  const auto r = cli_run({"eval", "--model", w.model.string(), "--data", w.src_csv.string(), "--format", "csv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.rfind("split,n,accuracy\ntest,", 0) == 0);
  const auto t = cli_run({"eval", "--model", w.model.string(), "--data", w.tgt_csv.string(), "--split", "all"});
  CHECK(t.code == 0);
  CHECK(t.out.find("confusion") != std::string::npos);
  CHECK(cli_run({"eval", "--model", w.model.string(), "--data", w.tgt_csv.string(), "--split", "dev"}).code ==
        cli::kUsage);

  const fs::path sel = w.dir / "features.txt";
  REQUIRE(cli_run({"select-features", "--data", w.src_csv.string(), "--out", sel.string(), "--n-trees", "10"}).code ==
          0);
  const auto kv = KeyValues::load(sel);
  const auto selected = kv.get_or("selected", "");
  CHECK(std::count(selected.begin(), selected.end(), ',') == 5);
  const fs::path m = w.dir / "with_sel.model";
  CHECK(cli_run(cat({"train-source", "--data", w.src_csv.string(), "--features", sel.string(), "--out", m.string()},
                    kFastTrain))
            .code == 0);
}

TEST_CASE("experiment and report") {
  const auto& w = ws();
  const std::vector<std::string> grid{"experiment", "--sources", "sunny-dry", "--targets", "humid-cloudy", "--p",
                                      "0,20", "--seeds", "1..2", "--n", "1500", "--n-trees", "5", "--max-epochs", "2",
                                      "--batch-size", "256", "--epochs", "1", "--adapt-batch-size", "256"};
  const fs::path a = w.dir / "exp_a", b = w.dir / "exp_b";
  const auto ra = cli_run(cat(grid, {"--out", a.string()}));
  REQUIRE_MESSAGE(ra.code == 0, ra.err);
  REQUIRE(cli_run(cat(grid, {"--out", b.string()})).code == 0);
  for (const char* f : {"results.csv", "source_results.csv", "table2.csv", "table2.txt", "deltas.csv", "curves.csv",
                        "table1.csv"}) {
    CHECK_MESSAGE(slurp(a / f) == slurp(b / f), f);
  }
  const std::string results = slurp(a / "results.csv");
  CHECK(results.rfind("source,target,p,seed,accuracy,acc_no_adapt,delta\n", 0) == 0);
  CHECK(std::count(results.begin(), results.end(), '\n') == 5);
  CHECK(slurp(a / "table2.csv").rfind("source,target,no_adapt,p0,p20\nsunny-dry,humid-cloudy,", 0) == 0);

  const fs::path r = w.dir / "rep";
  const auto rep = cli_run({"report", "--results", (a / "results.csv").string(), "--sources",
                            (a / "source_results.csv").string(), "--out", r.string(), "--format", "csv"});
  REQUIRE(rep.code == 0);
  CHECK(slurp(r / "table2.csv") == slurp(a / "table2.csv"));
  CHECK(slurp(r / "deltas.csv") == slurp(a / "deltas.csv"));
  CHECK(rep.out.find("random_forest") != std::string::npos);
  const auto m = KeyValues::load(r / "manifest.txt");
  CHECK(m.get_or("input.results.sha256", "") == sha256_file(a / "results.csv"));
}

TEST_CASE("report reproduces the published grid from the fixture") {
  const auto r = cli_run({"report", "--results", std::string(SOLARDA_FIXTURES) + "/published_grid.csv", "--format", "csv"});
  REQUIRE(r.code == 0);
  CHECK(r.out.find("FL,CA,64.09,68.80,74.05,75.45,77.62,82.99\n") != std::string::npos);
  CHECK(r.out.find("FL,CA,4.71,9.96,11.36,13.53,18.90\n") != std::string::npos);
}
