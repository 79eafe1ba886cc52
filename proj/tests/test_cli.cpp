#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>

#include <json.hpp>

namespace fs = std::filesystem;

namespace {

struct Run {
  int status = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

struct Sandbox {
  fs::path dir;
  Sandbox() {
    dir = fs::temp_directory_path() / ("apdtool_" + std::to_string(std::random_device{}()));
    fs::create_directories(dir);
  }
  ~Sandbox() { fs::remove_all(dir); }

  fs::path write(const std::string& name, const std::string& text) const {
    std::ofstream(dir / name) << text;
    return dir / name;
  }

  // Runs apdtool inside the sandbox; `env` is prepended to the command line.
  Run run(const std::string& args, const std::string& env = "") const {
    const auto err_path = dir / "stderr.txt";
    const std::string cmd = "cd '" + dir.string() + "' && " + env + " '" APDTOOL_PATH "' " + args + " 2>'" +
                            err_path.string() + "'";
    Run r;
    FILE* pipe = popen(cmd.c_str(), "r");
    REQUIRE(pipe != nullptr);
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof buf, pipe)) > 0) r.out.append(buf, n);
    const int raw = pclose(pipe);
    r.status = WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
    r.err = slurp(err_path);
    return r;
  }
};

bool contains(const std::string& s, const std::string& what) { return s.find(what) != std::string::npos; }

std::size_t lines(const std::string& s) { return static_cast<std::size_t>(std::count(s.begin(), s.end(), '\n')); }

}  // namespace

TEST_CASE("profiles list and show") {
  Sandbox sb;
  const auto list = sb.run("profiles list");
  CHECK(list.status == 0);
  for (const char* name : {"epitaxx-60", "epitaxx-40", "egg-nec-60", "improved-hypothetical", "passive-quench"})
    CHECK(contains(list.out, name));

  const auto show = sb.run("profiles show epitaxx-60");
  CHECK(show.status == 0);
  CHECK(contains(show.out, "dark_p10 = 2.8e-05"));
  CHECK(contains(show.out, "fingerprint = "));

  const auto bogus = sb.run("profiles show bogus");
  CHECK(bogus.status == 2);
  CHECK(contains(bogus.err, "available"));
  CHECK(contains(bogus.err, "epitaxx-40"));
}

TEST_CASE("link curve") {
  Sandbox sb;
  const auto zero = sb.run("link-curve --dmax 0");
  CHECK(zero.status == 0);
  CHECK(lines(zero.out) == 2);
  CHECK(contains(zero.out, "distance_km,"));

  const auto file = sb.run("link-curve --dmax 100 --step 1 --afterpulse --skip 2 --out curve.csv");
  CHECK(file.status == 0);
  const auto csv = slurp(sb.dir / "curve.csv");
  CHECK(csv.rfind("# manifest: curve.csv.manifest.json\n", 0) == 0);
  CHECK(lines(csv) == 103);
  CHECK(fs::exists(sb.dir / "curve.csv.manifest.json"));

  const auto bad = sb.run("link-curve --step 0");
  CHECK(bad.status == 1);
  CHECK(contains(bad.err, "step"));
}

TEST_CASE("solve prints the distance and documents the published-curve gap") {
  Sandbox sb;
  const auto r = sb.run("solve --qber 0.10");
  CHECK(r.status == 0);
  CHECK(contains(r.out, "distance_km = 50.07"));
  CHECK(contains(r.out, "54 km"));
  const auto five = sb.run("solve --qber 0.05 --sig-figs 4");
  CHECK(contains(five.out, "distance_km = 38.03"));
  CHECK(contains(five.out, "40 km"));

  const auto zero = sb.run("solve --qber 0");
  CHECK(zero.status == 1);
  CHECK(contains(zero.err, "error"));
  CHECK(sb.run("solve --qber 0.01 --afterpulse").status == 1);
}

TEST_CASE("separation") {
  Sandbox sb;
  const auto mid = sb.run("separation --sig-figs 3");
  CHECK(mid.status == 0);
  CHECK(contains(mid.out, "separation_ps = 749"));
  const auto rep = sb.run("separation --criterion reported");
  CHECK(contains(rep.out, "separation_ps = 2600"));
  CHECK(contains(rep.out, "externally_sourced = true"));
  CHECK(contains(rep.out, "open question"));
  CHECK(sb.run("separation --criterion reported --fwhm 300").status == 1);
}

TEST_CASE("sim is deterministic and replayable") {
  Sandbox sb;
  const auto a = sb.run("sim --gates 200000 --seed 5 --out sim.txt --events events.csv");
  REQUIRE(a.status == 0);
  const auto b = sb.run("sim --gates 200000 --seed 5");
  CHECK(contains(a.out, "empirical_qber = "));
  CHECK(a.out.substr(0, a.out.find("# manifest")) == b.out);
  CHECK(slurp(sb.dir / "events.csv").rfind("# manifest: sim.txt.manifest.json\n", 0) == 0);

  const auto manifest = nlohmann::json::parse(slurp(sb.dir / "sim.txt.manifest.json"));
  CHECK(manifest.at("command") == "sim");
  CHECK(manifest.at("seed") == 5);
  CHECK(manifest.at("outputs").size() == 2);
  CHECK(manifest.at("profiles").at(0).at("name") == "epitaxx-60");

  const auto replay = sb.run("replay sim.txt.manifest.json --out-dir again");
  CHECK(replay.status == 0);
  CHECK(contains(replay.out, "identical sim.txt"));
  CHECK(contains(replay.out, "identical events.csv"));
  CHECK(slurp(sb.dir / "again" / "events.csv") == slurp(sb.dir / "events.csv"));

  auto tampered = manifest;
  tampered["outputs"][1]["fnv1a64"] = "0000000000000000";
  sb.write("tampered.json", tampered.dump(2));
  const auto bad = sb.run("replay tampered.json");
  CHECK(bad.status == 3);
  CHECK(contains(bad.out, "identical sim.txt"));
  CHECK(contains(bad.out, "DIFFERENT events.csv"));

  // Replay uses the embedded profile text, not the current registry.
  sb.write("override.profile", "name = epitaxx-60\ndark_p10 = 1e-3\njitter = 0.1:450\n");
  CHECK(sb.run("replay sim.txt.manifest.json", "APD_PROFILE_DIR=.").status == 0);
}

TEST_CASE("thread count does not change simulation results") {
  Sandbox sb;
  const auto one = sb.run("--jobs 1 sim --gates 100000 --streams 4 --seed 9");
  const auto four = sb.run("--jobs 4 sim --gates 100000 --streams 4 --seed 9");
  CHECK(one.status == 0);
  CHECK(one.out == four.out);
}

TEST_CASE("characterize and calibrate pipelines") {
  Sandbox sb;
  sb.write("meas.csv",
           "shutter,counts,integration_time_s,f_rep_hz,mu_bar\n"
           "open,109400,10,1e6,0.1\nclosed,10000,10,1e6,\n");
  const auto eff = sb.run("characterize efficiency --input meas.csv --out eff.csv");
  CHECK(eff.status == 0);
  const auto report = slurp(sb.dir / "eff.csv");
  CHECK(contains(report, "quantity,dt_us,value,std_error"));
  CHECK(contains(report, "efficiency,0,0.0999"));

  const auto dark = sb.run("characterize dark --input meas.csv");
  CHECK(dark.status == 0);
  CHECK(contains(dark.out, "dark_probability,0,0.001,"));

  sb.write("dg.csv", "dt_us,n_first,n_coinc,dark_prob\n0.1,10000,150,5e-3\n1,10000,60,5e-3\n");
  const auto ap = sb.run("characterize afterpulse --input dg.csv --sig-figs 3");
  CHECK(ap.status == 0);
  CHECK(contains(ap.out, "afterpulse,0.1,0.01"));

  std::string hist = "bin_start_ps,counts\n";
  for (int i = 0; i < 500; ++i) {
    const double x = (i + 0.5) * 10.0 - 2500.0;
    hist += std::to_string(i * 10) + "," + std::to_string(5.0 + 1e4 * std::exp(-x * x / (2 * 242.0 * 242.0))) + "\n";
  }
  sb.write("hist.csv", hist);
  const auto jit = sb.run("characterize jitter --input hist.csv --sig-figs 2");
  CHECK(jit.status == 0);
  CHECK(contains(jit.out, "jitter_fwhm_s,0,4.5e-10"));

  std::string dark_pts = "efficiency,p_dc\n";
  for (double e : {0.05, 0.1, 0.15, 0.2})
    dark_pts += std::to_string(e) + "," + std::to_string(2.8e-5 * std::exp(30 * (e - 0.1))) + "\n";
  sb.write("darkfit.csv", dark_pts);
  const auto cal = sb.run("calibrate dark --input darkfit.csv --name lab --out lab.profile");
  CHECK(cal.status == 0);
  const auto profile = slurp(sb.dir / "lab.profile");
  CHECK(contains(profile, "name = lab"));
  CHECK(contains(profile, "dark_slope = 30"));
  CHECK(sb.run("--profiles-file lab.profile profiles show lab").status == 0);

  const auto cons = sb.run("calibrate constraints");
  CHECK(cons.status == 0);
  const auto shipped = sb.run("profiles show epitaxx-60");
  const auto line = [](const std::string& s) {
    const auto at = s.find("\nafterpulse = ");
    return s.substr(at, s.find('\n', at + 1) - at);
  };
  CHECK(line(cons.out) == line(shipped.out));
}

TEST_CASE("failures leave no partial output") {
  Sandbox sb;
  const auto missing = sb.run("characterize efficiency --input nope.csv --out eff.csv");
  CHECK(missing.status != 0);
  CHECK_FALSE(fs::exists(sb.dir / "eff.csv"));

  sb.write("broken.csv", "shutter,counts,integration_time_s,f_rep_hz,mu_bar\nopen,abc,1,1e6,0.1\n");
  const auto broken = sb.run("characterize efficiency --input broken.csv --out eff.csv");
  CHECK(broken.status == 1);
  CHECK_FALSE(fs::exists(sb.dir / "eff.csv"));
  CHECK_FALSE(fs::exists(sb.dir / "eff.csv.manifest.json"));
  for (const auto& e : fs::directory_iterator(sb.dir)) CHECK(e.path().extension() != ".tmp");
}

TEST_CASE("config file values yield to command-line flags") {
  Sandbox sb;
  sb.write("run.ini", "[sim]\ngates = 2000\nseed = 4\n");
  const auto from_file = sb.run("--config run.ini sim");
  CHECK(from_file.status == 0);
  CHECK(contains(from_file.out, "gates = 2000\n"));
  CHECK(contains(from_file.out, "seed = 4\n"));
  const auto overridden = sb.run("--config run.ini sim --gates 3000");
  CHECK(contains(overridden.out, "gates = 3000\n"));
  CHECK(contains(overridden.out, "seed = 4\n"));
}

TEST_CASE("profile directory from the environment") {
  Sandbox sb;
  fs::create_directories(sb.dir / "profiles");
  sb.write("profiles/lab.profile", "name = lab-z\ndark_p10 = 4e-5\njitter = 0.1:500\n");
  sb.write("profiles/ignored.txt", "not a profile\n");
  const auto show = sb.run("profiles show lab-z", "APD_PROFILE_DIR=profiles");
  CHECK(show.status == 0);
  CHECK(contains(show.out, "dark_p10 = 4e-05"));
  CHECK(sb.run("profiles show lab-z").status == 2);
  const auto solve = sb.run("solve --profile lab-z", "APD_PROFILE_DIR=profiles");
  CHECK(solve.status == 0);

  sb.write("profiles/bad.profile", "name = bad\nefficiency = 2\n");
  const auto bad = sb.run("profiles list", "APD_PROFILE_DIR=profiles");
  CHECK(bad.status == 1);
  CHECK(contains(bad.err, "bad.profile"));
}
