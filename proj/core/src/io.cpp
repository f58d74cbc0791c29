#include "aslmrf/io.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"

#include "aslmrf/error.hpp"

namespace aslmrf::io {

namespace {

using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

std::string trim(std::string_view s) {
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string_view::npos) {
        return {};
    }
    const auto e = s.find_last_not_of(" \t\r\n");
    return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split(const std::string &line, char sep) {
    std::vector<std::string> out;
    std::string cell;
    std::istringstream ss(line);
    while (std::getline(ss, cell, sep)) {
        out.push_back(trim(cell));
    }
    if (!line.empty() && line.back() == sep) {
        out.emplace_back();
    }
    return out;
}

bool parse_double(const std::string &s, double &out) {
    const char *first = s.data();
    const char *last = s.data() + s.size();
    if (first != last && *first == '+') {
        ++first;
    }
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc() && ptr == last && first != last;
}

template <typename U>
bool parse_unsigned(const std::string &s, U &out) {
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc() && ptr == s.data() + s.size() && !s.empty();
}

std::ofstream open_out(const fs::path &path, bool binary = false) {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream os(path, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
    if (!os) {
        throw InputError("cannot open " + path.string() + " for writing");
    }
    return os;
}

std::ifstream open_in(const fs::path &path, bool binary = false) {
    std::ifstream is(path, binary ? std::ios::binary : std::ios::in);
    if (!is) {
        throw InputError("cannot open " + path.string());
    }
    return is;
}

void finish(std::ofstream &os, const fs::path &path) {
    os.flush();
    if (!os) {
        throw InputError("failed writing " + path.string());
    }
}

template <typename T>
void put(std::ostream &os, T v) {
    std::array<char, sizeof(T)> buf;
    std::memcpy(buf.data(), &v, sizeof(T));
    os.write(buf.data(), sizeof(T));
}

template <typename T>
T get(std::istream &is, const fs::path &path) {
    std::array<char, sizeof(T)> buf;
    if (!is.read(buf.data(), sizeof(T))) {
        throw InputError(path.string() + ": truncated file");
    }
    T v;
    std::memcpy(&v, buf.data(), sizeof(T));
    return v;
}

std::uint16_t checked_u16(std::size_t v, const char *what) {
    if (v > 0xFFFF) {
        throw InputError(std::string(what) + " exceeds 65535");
    }
    return static_cast<std::uint16_t>(v);
}

json float_array(const float *data, std::size_t n) {
    json arr = json::array();
    for (std::size_t i = 0; i < n; ++i) {
        arr.push_back(static_cast<double>(data[i]));
    }
    return arr;
}

std::vector<float> read_floats(const json &arr, std::size_t expected, const std::string &what) {
    if (!arr.is_array() || arr.size() != expected) {
        throw InputError("weights: " + what + " must be an array of " + std::to_string(expected) + " numbers");
    }
    std::vector<float> out;
    out.reserve(expected);
    for (const auto &v : arr) {
        if (!v.is_number()) {
            throw InputError("weights: " + what + " holds a non-numeric entry");
        }
        out.push_back(static_cast<float>(v.get<double>()));
    }
    return out;
}

} // namespace

std::string format_double(double v) {
    if (!std::isfinite(v)) {
        return std::isnan(v) ? "nan" : (v > 0 ? "inf" : "-inf");
    }
    std::array<char, 64> buf;
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
    return std::string(buf.data(), ptr);
}

std::string format_ms(double seconds) {
    if (!std::isfinite(seconds)) {
        throw InputError("cannot format a non-finite duration");
    }
    // Shift the decimal point of the shortest seconds text instead of
    // multiplying, so the reader can shift it back without rounding.
    std::array<char, 400> buf;
    auto [ptr, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), seconds, std::chars_format::fixed);
    std::string text(buf.data(), ptr);
    std::string sign;
    if (!text.empty() && text[0] == '-') {
        sign = "-";
        text.erase(0, 1);
    }
    const auto dot = text.find('.');
    std::string whole = dot == std::string::npos ? text : text.substr(0, dot);
    std::string frac = dot == std::string::npos ? std::string() : text.substr(dot + 1);
    frac.resize(std::max<std::size_t>(frac.size(), 3), '0');
    whole += frac.substr(0, 3);
    frac.erase(0, 3);
    const auto nz = whole.find_first_not_of('0');
    whole = nz == std::string::npos ? "0" : whole.substr(nz);
    frac.resize(std::max<std::size_t>(frac.size(), 3), '0');
    if (whole == "0" && frac.find_first_not_of('0') == std::string::npos) {
        sign.clear();
    }
    return sign + whole + "." + frac;
}

bool parse_ms(const std::string &text, double &seconds) {
    double ms = 0.0;
    if (!parse_double(text, ms)) {
        return false;
    }
    if (text.find_first_of("eEnNiI") != std::string::npos) {
        seconds = ms / 1000.0;
        return true;
    }
    std::string body = text;
    std::string sign;
    if (!body.empty() && (body[0] == '-' || body[0] == '+')) {
        if (body[0] == '-') {
            sign = "-";
        }
        body.erase(0, 1);
    }
    const auto dot = body.find('.');
    std::string whole = dot == std::string::npos ? body : body.substr(0, dot);
    const std::string frac = dot == std::string::npos ? std::string() : body.substr(dot + 1);
    if (whole.size() < 3) {
        whole.insert(0, 3 - whole.size(), '0');
    }
    const std::string head = whole.size() > 3 ? whole.substr(0, whole.size() - 3) : "0";
    const std::string shifted = sign + head + "." + whole.substr(whole.size() - 3) + frac;
    return parse_double(shifted, seconds);
}

void write_schedule(std::ostream &os, const ScanSchedule &sched, const ScheduleMeta &meta) {
    os << "# nframes=" << sched.size() << '\n';
    os << "# total_s=" << format_double(sched.total_duration()) << '\n';
    os << "# generator=" << meta.generator << '\n';
    os << "# seed=" << meta.seed << '\n';
    os << "frame,pulse,t_tag_ms,t_delay_ms,t_aq_ms,t_adjust_ms\n";
    for (std::size_t i = 0; i < sched.size(); ++i) {
        const auto &f = sched.frames[i];
        os << i << ',' << pulse_code(f.pulse) << ',' << format_ms(f.t_tag) << ',' << format_ms(f.t_delay) << ','
           << format_ms(f.t_aq) << ',' << format_ms(f.t_adjust) << '\n';
    }
}

void write_schedule(const fs::path &path, const ScanSchedule &sched, const ScheduleMeta &meta) {
    auto os = open_out(path);
    write_schedule(os, sched, meta);
    finish(os, path);
}

ScanSchedule read_schedule(std::istream &is, ScheduleMeta *meta) {
    ScanSchedule s;
    ScheduleMeta m;
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    std::size_t declared = 0;
    bool has_declared = false;
    auto fail = [&](const std::string &msg) {
        throw InputError("schedule line " + std::to_string(lineno) + ": " + msg);
    };
    while (std::getline(is, line)) {
        ++lineno;
        const auto t = trim(line);
        if (t.empty()) {
            continue;
        }
        if (t[0] == '#') {
            const auto kv = trim(std::string_view(t).substr(1));
            const auto eq = kv.find('=');
            if (eq == std::string::npos) {
                continue;
            }
            const auto key = trim(std::string_view(kv).substr(0, eq));
            const auto val = trim(std::string_view(kv).substr(eq + 1));
            if (key == "nframes") {
                if (!parse_unsigned(val, declared)) fail("bad nframes '" + val + "'");
                has_declared = true;
            } else if (key == "generator") {
                m.generator = val;
            } else if (key == "seed") {
                if (!parse_unsigned(val, m.seed)) fail("bad seed '" + val + "'");
            }
            continue;
        }
        if (!header) {
            if (t != "frame,pulse,t_tag_ms,t_delay_ms,t_aq_ms,t_adjust_ms") {
                fail("expected header 'frame,pulse,t_tag_ms,t_delay_ms,t_aq_ms,t_adjust_ms'");
            }
            header = true;
            continue;
        }
        const auto cells = split(t, ',');
        if (cells.size() != 6) {
            fail("expected 6 fields, got " + std::to_string(cells.size()));
        }
        std::size_t idx = 0;
        if (!parse_unsigned(cells[0], idx) || idx != s.size()) {
            fail("frame index must be " + std::to_string(s.size()));
        }
        if (cells[1].size() != 1) {
            fail("pulse must be one of L, C, S");
        }
        ScanFrame f;
        try {
            f.pulse = pulse_from_code(cells[1][0]);
        } catch (const InputError &) {
            fail("pulse must be one of L, C, S");
        }
        std::array<double, 4> v{};
        for (std::size_t k = 0; k < 4; ++k) {
            if (!parse_ms(cells[2 + k], v[k]) || !std::isfinite(v[k]) || v[k] < 0.0) {
                fail("bad duration '" + cells[2 + k] + "'");
            }
        }
        f.t_tag = v[0];
        f.t_delay = v[1];
        f.t_aq = v[2];
        f.t_adjust = v[3];
        s.frames.push_back(f);
    }
    if (!header) {
        throw InputError("schedule has no header row");
    }
    if (has_declared && declared != s.size()) {
        throw InputError("schedule declares " + std::to_string(declared) + " frames but lists " +
                         std::to_string(s.size()));
    }
    s.id = m.generator;
    s.validate();
    if (meta) {
        *meta = m;
    }
    return s;
}

ScanSchedule read_schedule(const fs::path &path, ScheduleMeta *meta) {
    auto is = open_in(path);
    try {
        return read_schedule(is, meta);
    } catch (const InputError &e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_raster(const fs::path &path, const Map2D &map) {
    if (map.values.size() != map.rows * map.cols) {
        throw InputError("raster shape does not match its data");
    }
    auto os = open_out(path, true);
    os.write("ASLM", 4);
    put<std::uint16_t>(os, kRasterVersion);
    put<std::uint16_t>(os, checked_u16(map.rows, "raster rows"));
    put<std::uint16_t>(os, checked_u16(map.cols, "raster cols"));
    const std::array<char, 6> reserved{};
    os.write(reserved.data(), reserved.size());
    for (double v : map.values) {
        put<float>(os, std::isnan(v) ? std::numeric_limits<float>::quiet_NaN() : static_cast<float>(v));
    }
    finish(os, path);
}

Map2D read_raster(const fs::path &path) {
    auto is = open_in(path, true);
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || std::memcmp(magic.data(), "ASLM", 4) != 0) {
        throw InputError(path.string() + ": not a raster map (bad magic)");
    }
    const auto version = get<std::uint16_t>(is, path);
    if (version != kRasterVersion) {
        throw InputError(path.string() + ": unsupported raster version " + std::to_string(version));
    }
    const auto rows = get<std::uint16_t>(is, path);
    const auto cols = get<std::uint16_t>(is, path);
    std::array<char, 6> reserved{};
    if (!is.read(reserved.data(), 6)) {
        throw InputError(path.string() + ": truncated header");
    }
    Map2D m(rows, cols);
    for (auto &v : m.values) {
        v = static_cast<double>(get<float>(is, path));
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw InputError(path.string() + ": trailing bytes after raster data");
    }
    return m;
}

void write_volume(const fs::path &path, const Volume &vol) {
    if (vol.voxels.size() != vol.rows * vol.cols) {
        throw InputError("volume shape does not match its voxel count");
    }
    const std::size_t frames = vol.voxels.empty() ? 0 : vol.voxels.front().size();
    for (const auto &v : vol.voxels) {
        if (v.size() != frames) {
            throw InputError("volume voxels have differing frame counts");
        }
    }
    auto os = open_out(path, true);
    os.write("ASLV", 4);
    put<std::uint16_t>(os, kRasterVersion);
    put<std::uint16_t>(os, checked_u16(vol.rows, "volume rows"));
    put<std::uint16_t>(os, checked_u16(vol.cols, "volume cols"));
    if (frames > 0xFFFFFFFFu) {
        throw InputError("volume frame count too large");
    }
    put<std::uint32_t>(os, static_cast<std::uint32_t>(frames));
    const std::array<char, 2> reserved{};
    os.write(reserved.data(), reserved.size());
    for (const auto &v : vol.voxels) {
        for (double x : v.samples) {
            put<double>(os, x);
        }
    }
    finish(os, path);
}

Volume read_volume(const fs::path &path) {
    auto is = open_in(path, true);
    std::array<char, 4> magic{};
    if (!is.read(magic.data(), 4) || std::memcmp(magic.data(), "ASLV", 4) != 0) {
        throw InputError(path.string() + ": not a fingerprint volume (bad magic)");
    }
    const auto version = get<std::uint16_t>(is, path);
    if (version != kRasterVersion) {
        throw InputError(path.string() + ": unsupported volume version " + std::to_string(version));
    }
    Volume vol;
    vol.rows = get<std::uint16_t>(is, path);
    vol.cols = get<std::uint16_t>(is, path);
    const auto frames = get<std::uint32_t>(is, path);
    std::array<char, 2> reserved{};
    if (!is.read(reserved.data(), 2)) {
        throw InputError(path.string() + ": truncated header");
    }
    vol.voxels.resize(vol.rows * vol.cols);
    for (auto &v : vol.voxels) {
        v.samples.resize(frames);
        for (auto &x : v.samples) {
            x = get<double>(is, path);
        }
    }
    if (is.peek() != std::char_traits<char>::eof()) {
        throw InputError(path.string() + ": trailing bytes after volume data");
    }
    return vol;
}

std::string weights_to_json(const TrainedNetwork &net) {
    net.validate();
    json j;
    j["schema_version"] = kWeightsSchemaVersion;
    const auto &s = net.spec;
    j["spec"] = {{"target", std::string(param_name(s.target))},
                 {"input_dim", s.input_dim},
                 {"hidden", s.hidden},
                 {"target_range", {{"min", s.target_range.min}, {"max", s.target_range.max}}},
                 {"preconditioned", s.preconditioned}};
    json layers = json::array();
    for (const auto &l : net.layers) {
        // Row-major: row r holds the weights feeding output unit r.
        const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w = l.weight;
        layers.push_back({{"in", l.weight.cols()},
                          {"out", l.weight.rows()},
                          {"weight", float_array(w.data(), static_cast<std::size_t>(w.size()))},
                          {"bias", float_array(l.bias.data(), static_cast<std::size_t>(l.bias.size()))}});
    }
    j["layers"] = std::move(layers);
    j["input_mean"] = float_array(net.input_mean.data(), static_cast<std::size_t>(net.input_mean.size()));
    j["input_scale"] = float_array(net.input_scale.data(), static_cast<std::size_t>(net.input_scale.size()));
    const auto &h = net.history;
    j["history"] = {{"seed", h.seed},         {"epochs", h.epochs},         {"n_train", h.n_train},
                    {"n_val", h.n_val},       {"train_loss", h.train_loss}, {"val_loss", h.val_loss}};
    return j.dump() + "\n";
}

TrainedNetwork weights_from_json(const std::string &text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error &e) {
        throw InputError(std::string("weights: ") + e.what());
    }
    try {
        if (j.at("schema_version").get<int>() != kWeightsSchemaVersion) {
            throw InputError("weights: unsupported schema_version " + j.at("schema_version").dump());
        }
        TrainedNetwork net;
        const auto &s = j.at("spec");
        net.spec.target = param_from_name(s.at("target").get<std::string>());
        net.spec.input_dim = s.at("input_dim").get<std::size_t>();
        net.spec.hidden = s.at("hidden").get<std::vector<std::size_t>>();
        net.spec.target_range = {s.at("target_range").at("min").get<double>(),
                                 s.at("target_range").at("max").get<double>()};
        net.spec.preconditioned = s.at("preconditioned").get<bool>();
        net.spec.validate();
        for (const auto &l : j.at("layers")) {
            const auto in = l.at("in").get<std::size_t>(), out = l.at("out").get<std::size_t>();
            const auto w = read_floats(l.at("weight"), in * out, "layer weight");
            const auto b = read_floats(l.at("bias"), out, "layer bias");
            DenseLayer layer;
            layer.weight = Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
                w.data(), static_cast<Eigen::Index>(out), static_cast<Eigen::Index>(in));
            layer.bias = Eigen::Map<const Eigen::VectorXf>(b.data(), static_cast<Eigen::Index>(out));
            net.layers.push_back(std::move(layer));
        }
        const auto mean = read_floats(j.at("input_mean"), net.spec.input_dim, "input_mean");
        const auto scale = read_floats(j.at("input_scale"), net.spec.input_dim, "input_scale");
        net.input_mean = Eigen::Map<const Eigen::VectorXf>(mean.data(), static_cast<Eigen::Index>(mean.size()));
        net.input_scale = Eigen::Map<const Eigen::VectorXf>(scale.data(), static_cast<Eigen::Index>(scale.size()));
        const auto &h = j.at("history");
        net.history.seed = h.at("seed").get<std::uint64_t>();
        net.history.epochs = h.at("epochs").get<std::size_t>();
        net.history.n_train = h.at("n_train").get<std::size_t>();
        net.history.n_val = h.at("n_val").get<std::size_t>();
        net.history.train_loss = h.at("train_loss").get<std::vector<double>>();
        net.history.val_loss = h.at("val_loss").get<std::vector<double>>();
        net.validate();
        return net;
    } catch (const json::exception &e) {
        throw InputError(std::string("weights: ") + e.what());
    }
}

void write_weights(const fs::path &path, const TrainedNetwork &net) { write_text(path, weights_to_json(net)); }

TrainedNetwork read_weights(const fs::path &path) {
    try {
        return weights_from_json(read_text(path));
    } catch (const InputError &e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_loss_csv(const fs::path &path, const TrainingHistory &h) {
    auto os = open_out(path);
    os << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < h.train_loss.size(); ++e) {
        os << e << ',' << format_double(h.train_loss[e]) << ','
           << format_double(e < h.val_loss.size() ? h.val_loss[e] : std::nan("")) << '\n';
    }
    finish(os, path);
}

void write_filter_csv(const fs::path &path, const IIRFilter &f) {
    auto os = open_out(path);
    os << "# order=" << f.order << '\n';
    os << "# cutoff_hz=" << format_double(f.cutoff_hz) << '\n';
    os << "# fs_hz=" << format_double(f.fs_hz) << '\n';
    for (const auto *row : {&f.b, &f.a}) {
        for (std::size_t i = 0; i < row->size(); ++i) {
            os << (i ? "," : "") << format_double((*row)[i]);
        }
        os << '\n';
    }
    finish(os, path);
}

IIRFilter read_filter_csv(const fs::path &path) {
    auto is = open_in(path);
    IIRFilter f;
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        const auto t = trim(line);
        if (t.empty()) {
            continue;
        }
        if (t[0] == '#') {
            const auto eq = t.find('=');
            if (eq == std::string::npos) continue;
            const auto key = trim(std::string_view(t).substr(1, eq - 1));
            const auto val = trim(std::string_view(t).substr(eq + 1));
            double v = 0.0;
            if (!parse_double(val, v)) throw InputError(path.string() + ": bad value for " + key);
            if (key == "order") f.order = static_cast<int>(v);
            if (key == "cutoff_hz") f.cutoff_hz = v;
            if (key == "fs_hz") f.fs_hz = v;
            continue;
        }
        std::vector<double> row;
        for (const auto &cell : split(t, ',')) {
            double v = 0.0;
            if (!parse_double(cell, v)) throw InputError(path.string() + ": bad coefficient '" + cell + "'");
            row.push_back(v);
        }
        rows.push_back(std::move(row));
    }
    if (rows.size() != 2 || rows[1].empty() || rows[1][0] != 1.0) {
        throw InputError(path.string() + ": expected a b row and an a row with a[0] = 1");
    }
    f.b = rows[0];
    f.a = rows[1];
    return f;
}

void write_candidates_csv(const fs::path &path, std::span<const CandidateRecord> candidates) {
    auto os = open_out(path);
    os << "d0_s,d1_s,d2_s,d3_s,d4_s,cost";
    for (auto p : kAllParams) {
        os << ",std_" << param_name(p) << "_pct";
    }
    os << '\n';
    for (const auto &c : candidates) {
        for (double d : c.control.durations) {
            os << format_double(d) << ',';
        }
        os << format_double(c.cost);
        for (double v : c.normalized_std) {
            os << ',' << format_double(v);
        }
        os << '\n';
    }
    finish(os, path);
}

void write_comparison_csv(const fs::path &path, std::span<const ComparisonRow> rows) {
    auto os = open_out(path);
    os << "schedule,cost";
    for (auto p : kAllParams) {
        os << ",std_" << param_name(p) << "_pct";
    }
    os << '\n';
    for (const auto &r : rows) {
        os << r.schedule << ',' << format_double(r.cost);
        for (double v : r.normalized_std) {
            os << ',' << format_double(v);
        }
        os << '\n';
    }
    finish(os, path);
}

void write_evaluation_csv(const fs::path &path, const EvaluationReport &rep) {
    auto os = open_out(path);
    os << "parameter,correlation,bias,nrmse,n\n";
    for (const auto &s : rep.scores) {
        os << param_name(s.param) << ',' << format_double(s.correlation) << ',' << format_double(s.bias) << ','
           << format_double(s.nrmse) << ',' << s.n << '\n';
    }
    finish(os, path);
}

void write_scatter_csv(const fs::path &path, std::span<const std::pair<double, double>> points) {
    auto os = open_out(path);
    os << "truth,estimate\n";
    for (const auto &[t, e] : points) {
        os << format_double(t) << ',' << format_double(e) << '\n';
    }
    finish(os, path);
}

void write_text(const fs::path &path, const std::string &text) {
    auto os = open_out(path, true);
    os << text;
    finish(os, path);
}

std::string read_text(const fs::path &path) {
    auto is = open_in(path, true);
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

} // namespace aslmrf::io
