#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "kerr/photonstream.hpp"
#include "kerr/scenario.hpp"
#include "oracles/telegraph.hpp"

using namespace kerr;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& tag)
      : path(fs::temp_directory_path() / ("kerr_test_" + tag)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("fnv1a-64 known vectors") {
  CHECK(fnv1a64("", 0) == 0xcbf29ce484222325ULL);
  CHECK(fnv1a64("a", 1) == 0xaf63dc4c8601ec8cULL);
  CHECK(fnv1a64("foobar", 6) == 0x85944171f73967e8ULL);
}

TEST_CASE("g17 formatting round-trips doubles") {
  for (double x : {1.0 / 3.0, 0.1, 1e-300, -2.5e17, 6.62607015e-34}) {
    const std::string s = format_g17(x);
    CHECK(std::stod(s) == x);
  }
}

TEST_CASE("command names") {
  for (const char* name :
       {"spectrum", "steady", "g2", "g1", "sweep", "meanfield", "trajectory",
        "analyze", "fit"})
    CHECK(command_name(parse_command(name)) == name);
  CHECK_THROWS_AS(parse_command("frobnicate"), ConfigError);
}

TEST_CASE("scenario parsing") {
  SUBCASE("sections, comments, lists and ranges") {
    const std::string text =
        "# comment line\n"
        "[run]\n"
        "command = sweep\n"
        "out_dir = /tmp/somewhere\n"
        "threads = 3\n"
        "[grid]\n"
        "delta = 0.5:2.0:0.5\n"
        "u = 0.2\n"
        "f = 0.1, 0.2, 0.35  # trailing comment\n"
        "gamma = 2.0\n"
        "[numerics]\n"
        "cutoff = 40\n"
        "spectrum_k = 4\n";
    const Scenario s = parse_scenario_text(text, "inline");
    CHECK(s.command == Scenario::Command::Sweep);
    CHECK(s.out_dir == "/tmp/somewhere");
    CHECK(s.threads == 3);
    REQUIRE(s.deltas.size() == 4);
    CHECK(s.deltas[0] == doctest::Approx(0.5));
    CHECK(s.deltas[3] == doctest::Approx(2.0));
    REQUIRE(s.fs.size() == 3);
    CHECK(s.fs[2] == doctest::Approx(0.35));
    CHECK(s.gamma == 2.0);
    CHECK(s.cutoff == 40);
    CHECK(s.spectrum_k == 4);
  }
  SUBCASE("unknown keys carry origin and line number") {
    try {
      parse_scenario_text("command = steady\nnot_a_key = 1\n", "myfile.cfg");
      FAIL("expected ConfigError");
    } catch (const ConfigError& err) {
      const std::string what = err.what();
      CHECK(what.find("myfile.cfg:2") != std::string::npos);
      CHECK(what.find("not_a_key") != std::string::npos);
    }
  }
  SUBCASE("malformed numbers rejected") {
    CHECK_THROWS_AS(parse_scenario_text("gamma = fast\n", "x"), ConfigError);
    CHECK_THROWS_AS(parse_scenario_text("threads = 1.5\n", "x"), ConfigError);
    CHECK_THROWS_AS(parse_scenario_text("delta = 1.0:0.5:0.1\n", "x"), ConfigError);
  }
  SUBCASE("semantic validation happens at run time") {
    Scenario s;
    s.command = Scenario::Command::Fit;  // fit requires an input path
    CHECK_THROWS_AS(run_scenario(s), ConfigError);
    Scenario t;
    t.gamma = -1.0;
    CHECK_THROWS_AS(run_scenario(t), ConfigError);
  }
  SUBCASE("canonical serialization round-trips") {
    Scenario s;
    s.command = Scenario::Command::G2;
    s.out_dir = "elsewhere";
    s.threads = 2;
    s.deltas = {0.25, 1.5};
    s.us = {0.2};
    s.fs = {0.4, 0.9};
    s.gamma = 37.0;
    s.cutoff = 25;
    s.delay_points = 55;
    s.seed = 12345678901ULL;
    s.fit_model = "power_law";
    s.f_c = 0.77;
    const Scenario back = parse_scenario_text(scenario_to_config(s), "roundtrip");
    CHECK(back.command == s.command);
    CHECK(back.out_dir == s.out_dir);
    CHECK(back.threads == s.threads);
    CHECK(back.deltas == s.deltas);
    CHECK(back.us == s.us);
    CHECK(back.fs == s.fs);
    CHECK(back.gamma == s.gamma);
    CHECK(back.cutoff == s.cutoff);
    CHECK(back.delay_points == s.delay_points);
    CHECK(back.seed == s.seed);
    CHECK(back.fit_model == s.fit_model);
    CHECK(back.f_c == s.f_c);
    // identical text implies identical checksum, the reproducibility anchor
    CHECK(scenario_to_config(back) == scenario_to_config(s));
  }
}

TEST_CASE("steady scenario writes a complete, reproducible artifact set") {
  TempDir dir("steady");
  Scenario s;
  s.command = Scenario::Command::Steady;
  s.out_dir = (dir.path / "a").string();
  s.deltas = {0.5, 1.0};
  s.us = {0.2};
  s.fs = {0.3, 0.6};
  s.cutoff = 20;

  const Manifest manifest = run_scenario(s);
  SUBCASE("manifest covers every artifact with matching checksums") {
    CHECK(manifest.command == "steady");
    REQUIRE(!manifest.artifacts.empty());
    bool saw_csv = false;
    for (const ArtifactEntry& entry : manifest.artifacts) {
      const fs::path file = fs::path(s.out_dir) / entry.path;
      REQUIRE_MESSAGE(fs::exists(file), entry.path);
      CHECK(fs::file_size(file) == entry.bytes);
      CHECK(fnv1a64_file(file.string()) == entry.fnv1a64);
      if (entry.path == "steady.csv") saw_csv = true;
    }
    CHECK(saw_csv);
    // manifest.json itself exists but is not self-referential
    CHECK(fs::exists(fs::path(s.out_dir) / "manifest.json"));
    for (const ArtifactEntry& entry : manifest.artifacts)
      CHECK(entry.path != "manifest.json");
  }
  SUBCASE("rerun into a fresh directory is byte-identical") {
    Scenario t = s;
    t.out_dir = (dir.path / "b").string();
    run_scenario(t);
    CHECK(slurp(fs::path(s.out_dir) / "steady.csv") ==
          slurp(fs::path(t.out_dir) / "steady.csv"));
    CHECK(slurp(fs::path(s.out_dir) / "scenario.cfg") !=
          slurp(fs::path(t.out_dir) / "scenario.cfg"));  // out_dir differs
  }
  SUBCASE("thread count does not change the bytes") {
    Scenario t = s;
    t.out_dir = (dir.path / "c").string();
    t.threads = 3;
    run_scenario(t);
    CHECK(slurp(fs::path(s.out_dir) / "steady.csv") ==
          slurp(fs::path(t.out_dir) / "steady.csv"));
  }
}

TEST_CASE("sweep checkpoints allow resume and are cleaned up") {
  TempDir dir("sweep");
  Scenario s;
  s.command = Scenario::Command::Sweep;
  s.out_dir = (dir.path / "run").string();
  s.deltas = {0.8};
  s.us = {0.2};
  s.fs = {0.2, 0.4};
  s.cutoff = 16;
  s.spectrum_k = 3;

  const Manifest first = run_scenario(s);
  CHECK(!fs::exists(fs::path(s.out_dir) / "checkpoints"));
  const std::string csv1 = slurp(fs::path(s.out_dir) / "sweep.csv");

  // pre-seed one checkpoint with a sentinel row: a resumed run must adopt it
  // verbatim instead of recomputing the point
  const std::string config = scenario_to_config(s);
  const std::uint64_t hash = fnv1a64(config.data(), config.size());
  char hex[32];
  std::snprintf(hex, sizeof hex, "%016llx", static_cast<unsigned long long>(hash));
  const fs::path ckpt_dir = fs::path(s.out_dir) / "checkpoints" / hex;
  fs::create_directories(ckpt_dir);
  const std::string sentinel = "0.8,0.2,0.2,16,42,42,42,42,42,42";
  {
    std::ofstream out(ckpt_dir / "point_000000.txt");
    out << sentinel << "\n";
  }
  const Manifest second = run_scenario(s);
  const std::string csv2 = slurp(fs::path(s.out_dir) / "sweep.csv");
  CHECK(csv2.find(sentinel) != std::string::npos);
  CHECK(csv2 != csv1);
  CHECK(!fs::exists(fs::path(s.out_dir) / "checkpoints"));
}

TEST_CASE("analyze scenario on a synthetic telegraph stream") {
  TempDir dir("analyze");
  oracle::TelegraphSpec spec;
  spec.rate_low_hz = 2e4;
  spec.rate_high_hz = 1.6e5;
  spec.switch_low_hz = 200.0;
  spec.switch_high_hz = 200.0;
  const PhotonStream stream = oracle::telegraph_stream(spec, 10.0, 33);
  const fs::path ptag = dir.path / "input.ptag";
  write_ptag(stream, ptag.string());

  Scenario s;
  s.command = Scenario::Command::Analyze;
  s.out_dir = (dir.path / "out").string();
  s.input = ptag.string();
  s.bin_s = 2e-4;
  s.max_delay_s = 8e-3;
  s.classical_bin_s = 1e-3;
  s.downsample_factor = 4;
  s.irf_fwhm_s = 0.0;

  run_scenario(s);
  const fs::path out(s.out_dir);
  for (const char* name : {"report.json", "histogram.csv", "g2.csv",
                           "g2_downsampled.csv", "g2_classical.csv",
                           "fit_bunching.json"})
    CHECK_MESSAGE(fs::exists(out / name), name);

  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report["clicks"].get<std::int64_t>() ==
        static_cast<std::int64_t>(stream.clicks_ps.size()));
  CHECK(report["histogram"]["modality"].get<int>() == 2);
  CHECK(report.contains("dwell"));
  const double dwell_lo = report["dwell"]["mean_dwell_low_s"].get<double>();
  CHECK(std::abs(dwell_lo - 5e-3) < 2e-3);  // 1/switch_low_hz

  const auto fitjson = nlohmann::json::parse(slurp(out / "fit_bunching.json"));
  const double tau = fitjson["parameters"]["tau"].get<double>();
  CHECK(std::abs(tau - 1.0 / 400.0) < 0.3 / 400.0);  // 1/(s_lo + s_hi)
}

TEST_CASE("analyze degrades gracefully on sparse streams") {
  TempDir dir("sparse");
  PhotonStream stream;
  stream.duration_ps = 1000000;
  stream.clicks_ps = {10000, 20000, 30000};
  const fs::path ptag = dir.path / "sparse.ptag";
  write_ptag(stream, ptag.string());

  Scenario s;
  s.command = Scenario::Command::Analyze;
  s.out_dir = (dir.path / "out").string();
  s.input = ptag.string();
  s.bin_s = 1e-9;

  run_scenario(s);
  const fs::path out(s.out_dir);
  CHECK(fs::exists(out / "report.json"));
  CHECK(!fs::exists(out / "g2.csv"));  // refused below 100 clicks
  const auto report = nlohmann::json::parse(slurp(out / "report.json"));
  CHECK(report.contains("note"));
}

TEST_CASE("fit scenario reads numeric CSV with sigma column") {
  TempDir dir("fit");
  const fs::path csv = dir.path / "data.csv";
  {
    std::ofstream out(csv);
    out << "# synthetic bunching data\n";
    out << "delay_s,value,error\n";
    for (int i = 0; i < 60; ++i) {
      const double t = (i + 0.5) * 1e-9;
      out << format_g17(t) << ',' << format_g17(1.0 + 0.9 * std::exp(-t / 7e-9))
          << ",0.01\n";
    }
  }
  Scenario s;
  s.command = Scenario::Command::Fit;
  s.out_dir = (dir.path / "out").string();
  s.input = csv.string();
  s.fit_model = "bunching";
  s.irf_fwhm_s = 0.0;

  run_scenario(s);
  const auto fitjson =
      nlohmann::json::parse(slurp(fs::path(s.out_dir) / "fit.json"));
  CHECK(std::abs(fitjson["parameters"]["a"].get<double>() - 0.9) < 1e-6);
  CHECK(std::abs(fitjson["parameters"]["tau"].get<double>() - 7e-9) < 1e-14);
  CHECK(fitjson["converged"].get<bool>());
}

TEST_CASE("meanfield scenario emits roots and window tables") {
  TempDir dir("meanfield");
  Scenario s;
  s.command = Scenario::Command::Meanfield;
  s.out_dir = (dir.path / "out").string();
  s.deltas = {0.5, 1.5};
  s.us = {0.2};
  s.fs = {1.5};

  run_scenario(s);
  const std::string roots = slurp(fs::path(s.out_dir) / "meanfield.csv");
  CHECK(roots.find("delta") != std::string::npos);
  const std::string window = slurp(fs::path(s.out_dir) / "bistable_window.csv");
  // only the detuning above threshold contributes a window row
  CHECK(window.find("1.5") != std::string::npos);
  CHECK(window.find("0.5,") == std::string::npos);
}
