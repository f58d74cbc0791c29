#include "doctest.h"

#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>

#include "aslmrf/io.hpp"
#include "cli.hpp"

namespace fs = std::filesystem;
using aslmrf::cli::run;

namespace {

const char *kSmallConfig = R"({
  "seed": 3,
  "workers": 1,
  "schedule": {"nframes": 60, "total_s": 50},
  "design": {"grid_s": [0.5], "n_theta_search": 4, "n_theta_order": 4, "n_theta_eval": 6, "n_orders": 3},
  "train": {"n_samples": 1500, "epochs": 2, "batch_size": 64},
  "phantom": {"rows": 24, "cols": 24, "lesions": [{"row": 11.5, "col": 11.5, "radius": 2, "multiplier": 2}]},
  "multipld": {"n_plds": 4, "total_s": 40.9, "starts": 2, "max_iterations": 30}
})";

struct Workspace {
    fs::path root;
    Workspace() {
        root = fs::temp_directory_path() / ("aslmrf_cli_" + std::to_string(std::random_device{}()));
        fs::create_directories(root);
        std::ofstream(root / "config.json") << kSmallConfig;
    }
    ~Workspace() { fs::remove_all(root); }
    std::string path(const std::string &name) const { return (root / name).string(); }
};

std::string slurp(const fs::path &p) {
    std::ifstream is(p, std::ios::binary);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

std::size_t count_lines(const fs::path &p) {
    std::ifstream is(p);
    std::size_t n = 0;
    std::string line;
    while (std::getline(is, line)) {
        ++n;
    }
    return n;
}

} // namespace

TEST_CASE("usage errors exit with code 2") {
    Workspace ws;
    CHECK(run(std::vector<std::string>{}) == 2);
    CHECK(run({"frobnicate"}) == 2);
    CHECK(run({"train", "--out", ws.path("t")}) == 2);
    CHECK(run({"train", "--schedule", ws.path("missing.csv"), "--out", ws.path("t")}) == 2);

    std::ofstream(ws.root / "bad.json") << "{\"seed\": 1,,}";
    CHECK(run({"design", "--config", ws.path("bad.json"), "--out", ws.path("d")}) == 2);
    std::ofstream(ws.root / "unknown.json") << "{\"sede\": 1}";
    CHECK(run({"design", "--config", ws.path("unknown.json"), "--out", ws.path("d")}) == 2);
    CHECK(run({"simulate", "--schedule", ws.path("missing.csv"), "--out", ws.path("s")}) == 2);
    CHECK(run({"report", "--runs", ws.path("nowhere"), "--out", ws.path("r")}) == 2);
    CHECK(run({"design", "--help"}) == 0);
}

TEST_CASE("end-to-end workflow on a small configuration") {
    Workspace ws;
    const auto cfg = ws.path("config.json");

    REQUIRE(run({"design", "--config", cfg, "--out", ws.path("design")}) == 0);
    const fs::path design = ws.root / "design";
    for (const char *f : {"config.json", "candidates.csv", "order_candidates.csv", "comparison.csv",
                          "schedule_optimized.csv", "schedule_suboptimal1.csv", "schedule_suboptimal2.csv"}) {
        CHECK(fs::is_regular_file(design / f));
    }
    CHECK(count_lines(design / "candidates.csv") == 2);
    CHECK(count_lines(design / "comparison.csv") == 4);
    CHECK(count_lines(design / "order_candidates.csv") == 4);
    const auto sched = aslmrf::io::read_schedule(design / "schedule_optimized.csv");
    CHECK(sched.size() == 60);
    CHECK(sched.total_duration() == doctest::Approx(50.0).epsilon(1e-9));

    const auto sched_path = (design / "schedule_optimized.csv").string();
    REQUIRE(run({"simulate", "--config", cfg, "--schedule", sched_path, "--params",
                 "perfusion=60,cbva=0.01,bat=1,mtr=0.015,t1=1.4,flip=70", "--out", ws.path("sim1")}) == 0);
    CHECK(count_lines(ws.root / "sim1" / "fingerprint.csv") == 61);
    CHECK(run({"simulate", "--config", cfg, "--schedule", sched_path, "--params", "perfusion=abc", "--out",
               ws.path("sim_bad")}) == 2);

    REQUIRE(run({"simulate", "--config", cfg, "--schedule", sched_path, "--out", ws.path("simv")}) == 0);
    const auto vol = aslmrf::io::read_volume(ws.root / "simv" / "volume.aslv");
    CHECK(vol.rows == 24);
    CHECK(vol.voxels.size() == 576);
    CHECK(vol.voxels[300].size() == 60);

    REQUIRE(run({"train", "--config", cfg, "--schedule", sched_path, "--out", ws.path("train")}) == 0);
    for (const char *p : {"perfusion", "cbva", "bat", "mtr", "t1", "flip"}) {
        CHECK(fs::is_regular_file(ws.root / "train" / ("weights_" + std::string(p) + ".json")));
        CHECK(count_lines(ws.root / "train" / ("loss_" + std::string(p) + ".csv")) == 3);
    }
    CHECK(fs::is_regular_file(ws.root / "train" / "filter.csv"));

    REQUIRE(run({"estimate", "--config", cfg, "--weights", ws.path("train"), "--volume", ws.path("simv/volume.aslv"),
                 "--out", ws.path("est")}) == 0);
    const auto perf = aslmrf::io::read_raster(ws.root / "est" / "est_perfusion.aslm");
    CHECK(perf.rows == 24);
    CHECK(std::isnan(perf.values[0]));
    CHECK(std::isfinite(perf.values[11 * 24 + 11]));
    CHECK(run({"estimate", "--config", cfg, "--weights", ws.path("design"), "--volume", ws.path("simv/volume.aslv"),
               "--out", ws.path("est_bad")}) == 2);

    REQUIRE(run({"phantom", "--config", cfg, "--weights", ws.path("train"), "--schedule", sched_path, "--out",
                 ws.path("phantom")}) == 0);
    CHECK(count_lines(ws.root / "phantom" / "evaluation.csv") == 7);
    CHECK(count_lines(ws.root / "phantom" / "lesions.csv") == 2);
    CHECK(fs::is_regular_file(ws.root / "phantom" / "scatter_perfusion.csv"));

    REQUIRE(run({"multipld", "--config", cfg, "--mrf", ws.path("phantom"), "--out", ws.path("mpld")}) == 0);
    CHECK(fs::is_regular_file(ws.root / "mpld" / "mpld_perfusion.aslm"));
    CHECK(count_lines(ws.root / "mpld" / "protocol.csv") == 5);
    CHECK(count_lines(ws.root / "mpld" / "tissue_means.csv") == 9);
    CHECK(fs::is_regular_file(ws.root / "mpld" / "scatter_mrf_vs_multipld_perfusion.csv"));

    REQUIRE(run({"report", "--runs", ws.path("design"), ws.path("phantom"), ws.path("mpld"), "--out",
                 ws.path("report")}) == 0);
    const auto md = slurp(ws.root / "report" / "report.md");
    CHECK(md.find("comparison.csv") != std::string::npos);
    CHECK(md.find("evaluation.csv") != std::string::npos);
    CHECK(fs::is_regular_file(ws.root / "report" / "phantom_scatter_perfusion.svg"));
}

TEST_CASE("reruns with the same seed are byte-identical") {
    Workspace ws;
    const auto cfg = ws.path("config.json");
    REQUIRE(run({"design", "--config", cfg, "--out", ws.path("a")}) == 0);
    REQUIRE(run({"design", "--config", cfg, "--out", ws.path("b"), "--workers", "1"}) == 0);
    for (const auto &e : fs::directory_iterator(ws.root / "a")) {
        CHECK(slurp(e.path()) == slurp(ws.root / "b" / e.path().filename()));
    }
    REQUIRE(run({"design", "--config", cfg, "--out", ws.path("c"), "--seed", "4"}) == 0);
    CHECK(slurp(ws.root / "a" / "schedule_suboptimal1.csv") != slurp(ws.root / "c" / "schedule_suboptimal1.csv"));
}
