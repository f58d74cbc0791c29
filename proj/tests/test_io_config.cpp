#include "doctest.h"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "aslmrf/config.hpp"
#include "aslmrf/io.hpp"
#include "aslmrf/random.hpp"
#include "aslmrf/schedules.hpp"

using namespace aslmrf;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("aslmrf_io_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    fs::path operator/(const std::string &name) const { return path / name; }
};

std::string error_of(const std::function<void()> &fn) {
    try {
        fn();
    } catch (const std::exception &e) {
        return e.what();
    }
    return {};
}

bool same(double a, double b) { return a == b || (std::isnan(a) && std::isnan(b)); }

} // namespace

TEST_CASE("format_ms round trips") {
    CHECK(io::format_ms(0.055) == "55.000");
    CHECK(io::format_ms(1.0) == "1000.000");
    CHECK(io::format_ms(0.0) == "0.000");
    Rng rng(4);
    for (int k = 0; k < 2000; ++k) {
        const double s = rng.uniform(0.0, 4.0);
        double back = -1.0;
        REQUIRE(io::parse_ms(io::format_ms(s), back));
        CHECK(back == s);
    }
    CHECK_THROWS_AS(io::format_ms(std::nan("")), InputError);
    double v = 0.0;
    CHECK(io::parse_ms("55", v));
    CHECK(v == 0.055);
    CHECK(io::parse_ms("1e3", v));
    CHECK(v == 1.0);
    CHECK(io::parse_ms("0.5", v));
    CHECK(v == 0.0005);
    CHECK_FALSE(io::parse_ms("abc", v));
    CHECK_FALSE(io::parse_ms("", v));
}

TEST_CASE("format_double round trips") {
    Rng rng(5);
    for (int k = 0; k < 2000; ++k) {
        const double v = rng.normal() * std::pow(10.0, rng.uniform(-8.0, 8.0));
        CHECK(std::stod(io::format_double(v)) == v);
    }
}

TEST_CASE("schedule CSV") {
    const auto order = random_label_order(700, 3);
    const auto sched = schedule_from_control_points({{0.31, 1.47, 0.6, 2.2, 0.1}}, order, 600.0);

    SUBCASE("exact round trip") {
        std::stringstream ss;
        io::write_schedule(ss, sched, {"optimized", 12});
        io::ScheduleMeta meta;
        const auto back = io::read_schedule(ss, &meta);
        CHECK(back.frames == sched.frames);
        CHECK(meta.generator == "optimized");
        CHECK(meta.seed == 12);
        CHECK(back.id == "optimized");
    }
    SUBCASE("format") {
        std::stringstream ss;
        io::write_schedule(ss, sched, {"x", 1});
        std::string line;
        std::getline(ss, line);
        CHECK(line == "# nframes=700");
        std::getline(ss, line);
        CHECK(line.rfind("# total_s=", 0) == 0);
        std::getline(ss, line);
        std::getline(ss, line);
        std::getline(ss, line);
        CHECK(line == "frame,pulse,t_tag_ms,t_delay_ms,t_aq_ms,t_adjust_ms");
        std::getline(ss, line);
        CHECK(line.rfind("0,", 0) == 0);
    }
    SUBCASE("errors carry line numbers") {
        const std::string head = "# nframes=2\nframe,pulse,t_tag_ms,t_delay_ms,t_aq_ms,t_adjust_ms\n";
        auto parse = [](const std::string &text) {
            std::istringstream is(text);
            return io::read_schedule(is);
        };
        CHECK(error_of([&] { parse(head + "0,L,100.000,55.000,32.400,50.000\n1,X,100.000,55.000,32.400,50.000\n"); })
                  .find("line 4") != std::string::npos);
        CHECK(error_of([&] { parse(head + "0,L,-1.000,55.000,32.400,50.000\n"); }).find("line 3") !=
              std::string::npos);
        CHECK(error_of([&] { parse(head + "0,L,100.000,55.000\n"); }).find("line 3") != std::string::npos);
        CHECK(error_of([&] { parse(head + "0,L,100.000,55.000,32.400,50.000\n"); }).find("declares 2") !=
              std::string::npos);
        CHECK_THROWS_AS(parse("0,L,1,1,1,1\n"), InputError);
        CHECK_THROWS_AS(parse(""), InputError);
    }
    SUBCASE("file round trip") {
        TempDir dir;
        io::write_schedule(dir / "s.csv", sched, {"y", 2});
        CHECK(io::read_schedule(dir / "s.csv").frames == sched.frames);
        CHECK_THROWS_AS(io::read_schedule(dir / "missing.csv"), InputError);
    }
}

TEST_CASE("raster") {
    TempDir dir;
    Map2D m(5, 7);
    for (std::size_t i = 0; i < m.size(); ++i) {
        m.values[i] = 0.37 * static_cast<double>(i) - 3.0;
    }
    m.values[4] = kNoData;
    io::write_raster(dir / "m.aslm", m);
    CHECK(fs::file_size(dir / "m.aslm") == 16 + 4 * 35);
    const auto back = io::read_raster(dir / "m.aslm");
    CHECK(back.rows == 5);
    CHECK(back.cols == 7);
    for (std::size_t i = 0; i < m.size(); ++i) {
        CHECK(same(back.values[i], static_cast<double>(static_cast<float>(m.values[i]))));
    }

    std::ofstream(dir / "bad.aslm", std::ios::binary) << "XXXX0000000000000000";
    CHECK_THROWS_AS(io::read_raster(dir / "bad.aslm"), InputError);
    fs::resize_file(dir / "m.aslm", 16 + 4 * 34);
    CHECK_THROWS_AS(io::read_raster(dir / "m.aslm"), InputError);
}

TEST_CASE("fingerprint volume") {
    TempDir dir;
    io::Volume v;
    v.rows = 2;
    v.cols = 3;
    Rng rng(8);
    for (int i = 0; i < 6; ++i) {
        Fingerprint fp;
        for (int k = 0; k < 11; ++k) {
            fp.samples.push_back(rng.normal());
        }
        v.voxels.push_back(fp);
    }
    io::write_volume(dir / "v.aslv", v);
    CHECK(fs::file_size(dir / "v.aslv") == 16 + 8 * 66);
    const auto back = io::read_volume(dir / "v.aslv");
    CHECK(back.rows == 2);
    CHECK(back.cols == 3);
    REQUIRE(back.voxels.size() == 6);
    for (std::size_t i = 0; i < 6; ++i) {
        CHECK(back.voxels[i].samples == v.voxels[i].samples);
    }
    v.voxels[2].samples.pop_back();
    CHECK_THROWS_AS(io::write_volume(dir / "w.aslv", v), InputError);
}

TEST_CASE("weights JSON") {
    auto spec = NetworkSpec::default_for(Param::Bat, 12);
    TrainedNetwork net;
    net.spec = spec;
    Rng rng(9);
    std::size_t in = 12;
    for (std::size_t w : std::vector<std::size_t>{10, 5, 1}) {
        DenseLayer l;
        l.weight.resize(static_cast<Eigen::Index>(w), static_cast<Eigen::Index>(in));
        l.bias.resize(static_cast<Eigen::Index>(w));
        for (Eigen::Index i = 0; i < l.weight.size(); ++i) {
            l.weight.data()[i] = static_cast<float>(rng.normal());
        }
        for (Eigen::Index i = 0; i < l.bias.size(); ++i) {
            l.bias[i] = static_cast<float>(rng.normal());
        }
        net.layers.push_back(l);
        in = w;
    }
    net.input_mean = Eigen::VectorXf::Constant(12, 0.25f);
    net.input_scale = Eigen::VectorXf::Constant(12, 3.0f);
    net.history.seed = 77;
    net.history.train_loss = {0.5, 0.25};
    net.history.val_loss = {0.6, 0.3};
    REQUIRE_NOTHROW(net.validate());

    const auto back = io::weights_from_json(io::weights_to_json(net));
    CHECK(back.spec.target == Param::Bat);
    CHECK(back.spec.hidden == spec.hidden);
    CHECK(back.spec.preconditioned == spec.preconditioned);
    CHECK(back.spec.target_range == spec.target_range);
    REQUIRE(back.layers.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(back.layers[i].weight == net.layers[i].weight);
        CHECK(back.layers[i].bias == net.layers[i].bias);
    }
    CHECK(back.input_mean == net.input_mean);
    CHECK(back.input_scale == net.input_scale);
    CHECK(back.history.seed == 77);
    CHECK(back.history.val_loss == net.history.val_loss);

    CHECK_THROWS_AS(io::weights_from_json("{"), InputError);
    CHECK_THROWS_AS(io::weights_from_json(R"({"schema_version": 99})"), InputError);
}

TEST_CASE("filter CSV") {
    TempDir dir;
    const auto f = design_butterworth_highpass();
    io::write_filter_csv(dir / "f.csv", f);
    const auto back = io::read_filter_csv(dir / "f.csv");
    CHECK(back.b == f.b);
    CHECK(back.a == f.a);
    io::write_text(dir / "g.csv", "1,2\n3,4\n");
    CHECK_THROWS_AS(io::read_filter_csv(dir / "g.csv"), InputError);
}

TEST_CASE("config") {
    SUBCASE("empty object gives defaults") {
        const auto cfg = parse_config("{}");
        CHECK(cfg.seed == 1);
        CHECK(cfg.design.grid.values.size() == 6);
        CHECK(cfg.train.train.n_samples == 500000);
        CHECK(cfg.multipld.n_plds == 40);
    }
    SUBCASE("dump then parse is a fixed point") {
        auto cfg = parse_config(R"({"seed": 9, "design": {"grid_s": [0.1, 0.5]}, "multipld": {"plds_s": [0.3, 1.0]}})");
        CHECK(cfg.seed == 9);
        CHECK(cfg.design.grid.values == std::vector<double>{0.1, 0.5});
        const auto text = dump_config(cfg);
        CHECK(dump_config(parse_config(text)) == text);
        CHECK(dump_config(parse_config(dump_config(RunConfig{}))) == dump_config(RunConfig{}));
    }
    SUBCASE("unknown keys are rejected with their path") {
        CHECK(error_of([] { parse_config(R"({"design": {"gird_s": [1]}})"); }).find("design.gird_s") !=
              std::string::npos);
        CHECK_THROWS_AS(parse_config(R"({"sed": 1})"), ConfigError);
    }
    SUBCASE("bad values") {
        CHECK_THROWS_AS(parse_config(R"({"seed": "one"})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"workers": -1})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"design": {"theta_sampling": "sobol"}})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"train": {"learning_rate": -1}})"), ConfigError);
        CHECK_THROWS_AS(parse_config(R"({"phantom": {"lesions": 3}})"), ConfigError);
    }
    SUBCASE("syntax errors report a line") {
        const auto msg = error_of([] { parse_config("{\n  \"seed\": 1,\n  \"workers\" 2\n}"); });
        CHECK(msg.find("line 3") != std::string::npos);
    }
    SUBCASE("multi-PLD protocol from config") {
        auto cfg = parse_config(R"({"multipld": {"n_plds": 4}})");
        CHECK(cfg.multipld.protocol().plds.size() == 4);
        cfg = parse_config(R"({"multipld": {"plds_s": [0.5, 1.5, 2.5]}})");
        CHECK(cfg.multipld.protocol().plds == std::vector<double>{0.5, 1.5, 2.5});
    }
}
