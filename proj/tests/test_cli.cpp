#include "fixtures.hpp"

#include "shortorbit/io.hpp"

#include <doctest.h>

#include <sys/wait.h>

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace fixtures;
namespace fs = std::filesystem;
using io::json;

namespace {

const fs::path kConfigs = SHORTORBIT_CONFIGS;

fs::path work(const std::string &name) {
  fs::path dir = fs::temp_directory_path() / "shortorbit_test_cli" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

int run(const std::string &args, const fs::path &log) {
  std::string cmd = std::string("\"") + SHORTORBIT_CLI + "\" " + args + " 2>\"" + log.string() + "\" >/dev/null";
  int status = std::system(cmd.c_str());
  REQUIRE(WIFEXITED(status));
  return WEXITSTATUS(status);
}

std::string slurp(const fs::path &file) {
  std::ifstream in(file, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string domain_arg(const std::string &file) { return "--domain \"" + (kConfigs / file).string() + "\""; }

} // namespace

TEST_CASE("inradius") {
  fs::path out = work("inradius");
  CHECK(run("inradius " + domain_arg("ellipse.json") + " --out \"" + out.string() + "\"", out / "log") == 0);
  json j = io::read_json(out / "inradius.json");
  CHECK(j["radius"].get<double>() == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(j["shape"] == "ellipsoid");

  // Two small balls far apart: no point of a unit grid lands inside.
  io::write_json(out / "sparse.json", json::parse(R"({"dim": 2, "shape": "metaball_union", "params": {"balls": [
      {"center": [-10.5, 0], "radius": 0.01, "blend": 0}, {"center": [10.5, 0], "radius": 0.01, "blend": 0}]}})"));
  CHECK(run("inradius --domain \"" + (out / "sparse.json").string() + "\" --grid-density 1 --out \"" + out.string() +
                "\"",
            out / "log") == 2);
  CHECK(slurp(out / "log").find("EmptyInterior") != std::string::npos);
}

TEST_CASE("schema errors exit with 5") {
  fs::path out = work("schema");
  io::write_text(out / "bad.json", R"({"dim": 2, "shape": "ball", "params": {"center": [0, 0], "radius": 1, "x": 1}})");
  CHECK(run("inradius --domain \"" + (out / "bad.json").string() + "\" --out \"" + out.string() + "\"", out / "log") ==
        5);
  io::write_text(out / "run.json", R"({"domain": "bad.json", "seeds": "four"})");
  CHECK(run("find --config \"" + (out / "run.json").string() + "\"", out / "log") == 5);
  io::write_text(out / "traj.json", R"({"bounce_points": 3})");
  CHECK(run("verify " + domain_arg("disk.json") + " --trajectory \"" + (out / "traj.json").string() + "\" --out \"" +
                out.string() + "\"",
            out / "log") == 5);
}

TEST_CASE("shoot") {
  fs::path out = work("shoot");
  SUBCASE("disk diameter") {
    CHECK(run("shoot " + domain_arg("disk.json") + " --start 0 0 --dir 1 0 --max-bounces 3 --out \"" + out.string() +
                  "\"",
              out / "log") == 0);
    json j = io::read_json(out / "shot.json");
    REQUIRE(j["bounces"].size() == 3);
    Vec a = io::vec_from_json(j["bounces"][0]["point"], 2, "a");
    Vec b = io::vec_from_json(j["bounces"][1]["point"], 2, "b");
    CHECK((a - v2(1, 0)).norm() < 1e-9);
    CHECK((b - v2(-1, 0)).norm() < 1e-9);
    CHECK(2.0 * (a - b).norm() == doctest::Approx(4.0).epsilon(1e-9));
    CHECK(fs::exists(out / "shot.svg"));
  }
  SUBCASE("ellipse minor axis") {
    CHECK(run("shoot " + domain_arg("ellipse.json") + " --start 0 0 --dir 0 1 --max-bounces 2 --out \"" +
                  out.string() + "\"",
              out / "log") == 0);
    json j = io::read_json(out / "shot.json");
    Vec a = io::vec_from_json(j["bounces"][0]["point"], 2, "a");
    Vec b = io::vec_from_json(j["bounces"][1]["point"], 2, "b");
    CHECK(2.0 * (a - b).norm() == doctest::Approx(4.0).epsilon(1e-8));
  }
  SUBCASE("grazing the dumbbell neck exits with 4") {
    CHECK(run("shoot " + domain_arg("dumbbell.json") + " --start -2.5 0.2 --dir 1 0 --max-bounces 2 --out \"" +
                  out.string() + "\"",
              out / "log") == 4);
    CHECK(slurp(out / "log").find("TangentialIncidence") != std::string::npos);
  }
}

TEST_CASE("verify stored trajectories") {
  fs::path out = work("verify");
  Domain d = Domain::build(disk());
  auto verdict = [&](const std::string &name, const std::vector<Vec> &pts) {
    io::write_json(out / (name + ".json"), io::to_json(make_trajectory(d, pts)));
    fs::path dir = out / name;
    int code = run("verify " + domain_arg("disk.json") + " --trajectory \"" + (out / (name + ".json")).string() +
                       "\" --out \"" + dir.string() + "\"",
                   out / "log");
    json v = io::read_json(dir / "verdict.json");
    CHECK(v["pass"].get<bool>() == (code == 0));
    return v;
  };
  json diam = verdict("diameter", {v2(1, 0), v2(-1, 0)});
  CHECK(diam["pass"].get<bool>());
  CHECK(diam["max_tangential_err"].get<double>() <= 1e-12);

  // Moving one bounce 0.05 along the circle tilts the chord 0.025 away from both normals;
  // the chord reverses at each end, so the tangential parts differ by 2 sin(0.025).
  json moved = verdict("moved", {v2(std::cos(0.05), std::sin(0.05)), v2(-1, 0)});
  CHECK_FALSE(moved["pass"].get<bool>());
  CHECK(moved["max_tangential_err"].get<double>() > 1e-3);
  CHECK(moved["max_tangential_err"].get<double>() == doctest::Approx(2 * std::sin(0.025)).epsilon(1e-6));

  const double h = std::sqrt(0.75);
  json tri = verdict("triangle", {v2(1, 0), v2(-0.5, h), v2(-0.5, -h)});
  CHECK(tri["pass"].get<bool>());
  CHECK(tri["trajectory"]["total_length"].get<double>() == doctest::Approx(3 * std::sqrt(3.0)).epsilon(1e-12));
}

TEST_CASE("find on the disk: diameter, and byte-identical reports across runs") {
  fs::path a = work("find_a"), b = work("find_b");
  const std::string common = "find " + domain_arg("disk.json") + " --seeds 2 --rng-seed 3 --eps-end 1e-6";
  CHECK(run(common + " --out \"" + a.string() + "\"", a / "log") == 0);
  CHECK(run(common + " --jobs 1 --out \"" + b.string() + "\"", b / "log") == 0);
  json r = io::read_json(a / "report.json");
  CHECK(r["pass"].get<bool>());
  CHECK(r["status"] == "ok");
  CHECK(r["best"]["bounce_count"] == 2);
  CHECK(r["best"]["length"].get<double>() == doctest::Approx(4.0).epsilon(1e-3 / 4.0));
  CHECK(r["best"]["ratio"].get<double>() == doctest::Approx(4.0).epsilon(1e-3));
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  CHECK(slurp(a / "trace.csv") == slurp(b / "trace.csv"));
  CHECK(fs::exists(a / "trajectory.svg"));
  CHECK(fs::exists(a / "trajectory.json"));
}
