#include "aslmrf/config.hpp"

#include <cmath>
#include <set>

#include "json.hpp"

#include "aslmrf/io.hpp"

namespace aslmrf {

namespace {

using nlohmann::json;

/// Strict view of one JSON object: every key must be consumed.
class Section {
  public:
    Section(const json &j, std::string where) : j_(j), where_(std::move(where)) {
        if (!j_.is_object()) {
            throw ConfigError(where_ + ": expected an object");
        }
    }

    bool has(const std::string &key) const { return j_.contains(key); }

    std::string path(const std::string &key) const { return where_.empty() ? key : where_ + "." + key; }

    const json *take(const std::string &key) {
        if (!j_.contains(key)) {
            return nullptr;
        }
        used_.insert(key);
        return &j_.at(key);
    }

    void number(const std::string &key, double &out) {
        if (const auto *v = take(key)) {
            if (!v->is_number()) {
                throw ConfigError(path(key) + ": expected a number");
            }
            out = v->get<double>();
            if (!std::isfinite(out)) {
                throw ConfigError(path(key) + ": must be finite");
            }
        }
    }

    template <typename U>
    void count(const std::string &key, U &out) {
        if (const auto *v = take(key)) {
            if (!v->is_number_unsigned()) {
                throw ConfigError(path(key) + ": expected a non-negative integer");
            }
            const auto raw = v->get<std::uint64_t>();
            if (raw > static_cast<std::uint64_t>(std::numeric_limits<U>::max())) {
                throw ConfigError(path(key) + ": value too large");
            }
            out = static_cast<U>(raw);
        }
    }

    void flag(const std::string &key, bool &out) {
        if (const auto *v = take(key)) {
            if (!v->is_boolean()) {
                throw ConfigError(path(key) + ": expected true or false");
            }
            out = v->get<bool>();
        }
    }

    void numbers(const std::string &key, std::vector<double> &out) {
        if (const auto *v = take(key)) {
            if (!v->is_array()) {
                throw ConfigError(path(key) + ": expected an array of numbers");
            }
            out.clear();
            for (const auto &e : *v) {
                if (!e.is_number()) {
                    throw ConfigError(path(key) + ": expected an array of numbers");
                }
                out.push_back(e.get<double>());
            }
        }
    }

    std::string text(const std::string &key, const std::string &fallback) {
        if (const auto *v = take(key)) {
            if (!v->is_string()) {
                throw ConfigError(path(key) + ": expected a string");
            }
            return v->get<std::string>();
        }
        return fallback;
    }

    void done() const {
        for (const auto &[k, v] : j_.items()) {
            if (!used_.contains(k)) {
                throw ConfigError("unknown configuration key '" + path(k) + "'");
            }
        }
    }

  private:
    const json &j_;
    std::string where_;
    std::set<std::string> used_;
};

template <typename Fn>
void with_section(Section &parent, const std::string &key, Fn &&fn) {
    if (const auto *v = parent.take(key)) {
        Section s(*v, parent.path(key));
        fn(s);
        s.done();
    }
}

void read_space(Section &parent, const std::string &key, ParameterSpace &space) {
    with_section(parent, key, [&](Section &s) {
        for (auto p : kAllParams) {
            std::vector<double> r{space[p].min, space[p].max};
            s.numbers(std::string(param_name(p)), r);
            if (r.size() != 2) {
                throw ConfigError(s.path(std::string(param_name(p))) + ": expected [min, max]");
            }
            space[p] = {r[0], r[1]};
        }
    });
}

void read_params(Section &parent, const std::string &key, HemodynamicParams &hp) {
    with_section(parent, key, [&](Section &s) {
        for (auto p : kAllParams) {
            double v = hp.get(p);
            s.number(std::string(param_name(p)), v);
            hp.set(p, v);
        }
    });
}

json space_json(const ParameterSpace &space) {
    json j = json::object();
    for (auto p : kAllParams) {
        j[std::string(param_name(p))] = {space[p].min, space[p].max};
    }
    return j;
}

json params_json(const HemodynamicParams &hp) {
    json j = json::object();
    for (auto p : kAllParams) {
        j[std::string(param_name(p))] = hp.get(p);
    }
    return j;
}

void apply_json(const json &root, RunConfig &cfg) {
    Section top(root, "");
    top.count("seed", cfg.seed);
    top.count("workers", cfg.workers);

    with_section(top, "model", [&](Section &s) {
        s.number("lambda", cfg.model.lambda);
        s.number("alpha", cfg.model.alpha);
        s.number("t1_art_s", cfg.model.t1_art);
        s.number("m0", cfg.model.m0_tis);
        s.number("noise_sigma", cfg.model.noise_sigma);
    });

    with_section(top, "schedule", [&](Section &s) {
        auto &d = cfg.schedule;
        s.count("nframes", d.nframes);
        s.number("total_s", d.total_s);
        s.number("t_delay_s", d.timing.t_delay);
        s.number("t_aq_s", d.timing.t_aq);
        s.number("t_adjust_s", d.timing.t_adjust);
        s.number("sub1_min_s", d.sub1_min_s);
        s.number("sub1_max_s", d.sub1_max_s);
        s.number("sub2_min_s", d.sub2_min_s);
    });

    with_section(top, "design", [&](Section &s) {
        auto &d = cfg.design;
        s.numbers("grid_s", d.grid.values);
        s.count("n_theta_search", d.n_theta_search);
        s.count("n_theta_order", d.n_theta_order);
        s.count("n_theta_eval", d.n_theta_eval);
        s.count("n_orders", d.n_orders);
        const auto mode = s.text("theta_sampling", d.sampling == ThetaSampling::Uniform ? "uniform" : "low_discrepancy");
        if (mode == "uniform") {
            d.sampling = ThetaSampling::Uniform;
        } else if (mode == "low_discrepancy") {
            d.sampling = ThetaSampling::LowDiscrepancy;
        } else {
            throw ConfigError(s.path("theta_sampling") + ": expected \"uniform\" or \"low_discrepancy\"");
        }
        with_section(s, "weights", [&](Section &w) {
            for (auto p : kAllParams) {
                w.number(std::string(param_name(p)), d.weights.w[index(p)]);
            }
        });
        s.number("rel_step", d.crlb.rel_step);
        with_section(s, "min_step", [&](Section &m) {
            for (auto p : kAllParams) {
                m.number(std::string(param_name(p)), d.crlb.min_step[index(p)]);
            }
        });
        s.number("condition_cap", d.crlb.condition_cap);
        read_space(s, "ranges", d.space);
    });

    with_section(top, "train", [&](Section &s) {
        auto &t = cfg.train.train;
        s.count("n_samples", t.n_samples);
        s.number("noise_sigma", t.noise_sigma);
        s.count("batch_size", t.batch_size);
        s.count("epochs", t.epochs);
        s.number("learning_rate", t.learning_rate);
        s.number("lr_decay", t.lr_decay);
        s.number("beta1", t.beta1);
        s.number("beta2", t.beta2);
        s.number("epsilon", t.epsilon);
        s.number("validation_fraction", t.validation_fraction);
        read_space(s, "ranges", cfg.train.space);
        with_section(s, "filter", [&](Section &f) {
            f.count("order", cfg.train.filter.order);
            f.number("cutoff_hz", cfg.train.filter.cutoff_hz);
            f.number("fs_hz", cfg.train.filter.fs_hz);
        });
    });

    with_section(top, "estimate", [&](Section &s) { s.number("background_floor", cfg.estimate.background_floor); });

    with_section(top, "phantom", [&](Section &s) {
        auto &p = cfg.phantom;
        s.count("rows", p.rows);
        s.count("cols", p.cols);
        read_params(s, "gray", p.gray);
        read_params(s, "white", p.white);
        s.number("variation", p.variation);
        s.number("noise_sigma", p.noise_sigma);
        if (const auto *v = s.take("lesions")) {
            if (!v->is_array()) {
                throw ConfigError(s.path("lesions") + ": expected an array");
            }
            p.lesions.clear();
            for (std::size_t i = 0; i < v->size(); ++i) {
                Section l((*v)[i], s.path("lesions") + "[" + std::to_string(i) + "]");
                Lesion les;
                l.number("row", les.row);
                l.number("col", les.col);
                l.number("radius", les.radius);
                l.number("multiplier", les.multiplier);
                l.done();
                p.lesions.push_back(les);
            }
        }
    });

    with_section(top, "multipld", [&](Section &s) {
        auto &m = cfg.multipld;
        s.count("n_plds", m.n_plds);
        s.number("total_s", m.total_s);
        s.number("pld_min_s", m.pld_min_s);
        s.number("pld_max_s", m.pld_max_s);
        s.numbers("plds_s", m.plds_s);
        s.number("flip_deg", m.flip_deg);
        s.number("noise_sigma", m.noise_sigma);
        with_section(s, "nominal", [&](Section &n) {
            n.number("perfusion", m.nominal.f);
            n.number("cbva", m.nominal.cbva);
            n.number("bat", m.nominal.bat);
            n.number("mtr", m.nominal.mtr);
        });
        s.count("starts", m.fit.starts);
        s.count("max_iterations", m.fit.max_iterations);
        std::vector<double> t1{m.fit.t1_bounds.min, m.fit.t1_bounds.max};
        s.numbers("t1_bounds_s", t1);
        if (t1.size() != 2) {
            throw ConfigError(s.path("t1_bounds_s") + ": expected [min, max]");
        }
        m.fit.t1_bounds = {t1[0], t1[1]};
    });
    top.done();
}

void require(bool ok, const std::string &msg) {
    if (!ok) {
        throw ConfigError(msg);
    }
}

} // namespace

MultiPLDProtocol MultiPLDConfig::protocol() const {
    const FrameTiming timing{};
    if (!plds_s.empty()) {
        return protocol_from_plds(plds_s, total_s, timing, flip_deg);
    }
    return build_protocol(n_plds, total_s, pld_min_s, pld_max_s, timing, flip_deg);
}

void RunConfig::validate() const {
    try {
        model.validate();
        require(schedule.nframes >= 5, "schedule.nframes must be >= 5");
        require(schedule.total_s > 0.0, "schedule.total_s must be > 0");
        require(schedule.timing.t_delay >= 0.0 && schedule.timing.t_aq >= 0.0 && schedule.timing.t_adjust >= 0.0,
                "schedule timings must be >= 0");
        require(schedule.total_s > static_cast<double>(schedule.nframes) * schedule.timing.overhead(),
                "schedule.total_s leaves no time for labeling");
        require(schedule.sub1_min_s > 0.0 && schedule.sub1_min_s < schedule.sub1_max_s,
                "schedule.sub1_min_s must lie in (0, sub1_max_s)");
        require(schedule.sub2_min_s > 0.0, "schedule.sub2_min_s must be > 0");

        design.grid.validate();
        require(design.n_theta_search >= 1 && design.n_theta_order >= 1 && design.n_theta_eval >= 1,
                "design theta set sizes must be >= 1");
        require(design.n_orders >= 1, "design.n_orders must be >= 1");
        for (double w : design.weights.w) {
            require(std::isfinite(w) && w >= 0.0, "design.weights must be finite and >= 0");
        }
        require(design.crlb.rel_step > 0.0, "design.rel_step must be > 0");
        for (double h : design.crlb.min_step) {
            require(h > 0.0, "design.min_step entries must be > 0");
        }
        require(design.crlb.condition_cap > 1.0, "design.condition_cap must be > 1");
        design.space.validate();

        const auto &t = train.train;
        require(t.n_samples >= 2, "train.n_samples must be >= 2");
        require(t.noise_sigma >= 0.0, "train.noise_sigma must be >= 0");
        require(t.batch_size >= 1, "train.batch_size must be >= 1");
        require(t.epochs >= 1, "train.epochs must be >= 1");
        require(t.learning_rate > 0.0, "train.learning_rate must be > 0");
        require(t.lr_decay > 0.0 && t.lr_decay <= 1.0, "train.lr_decay must lie in (0, 1]");
        require(t.beta1 >= 0.0 && t.beta1 < 1.0 && t.beta2 >= 0.0 && t.beta2 < 1.0, "train.beta1/beta2 must lie in [0, 1)");
        require(t.epsilon > 0.0, "train.epsilon must be > 0");
        require(t.validation_fraction > 0.0 && t.validation_fraction < 1.0,
                "train.validation_fraction must lie in (0, 1)");
        train.space.validate();
        require(train.filter.order >= 1, "train.filter.order must be >= 1");
        require(train.filter.fs_hz > 0.0 && train.filter.cutoff_hz > 0.0 &&
                    train.filter.cutoff_hz < train.filter.fs_hz / 2.0,
                "train.filter.cutoff_hz must lie strictly between 0 and fs_hz / 2");

        require(estimate.background_floor >= 0.0, "estimate.background_floor must be >= 0");
        phantom.validate();

        (void)multipld.protocol();
        require(multipld.noise_sigma >= 0.0, "multipld.noise_sigma must be >= 0");
        require(multipld.fit.starts >= 1, "multipld.starts must be >= 1");
        require(multipld.fit.max_iterations >= 1, "multipld.max_iterations must be >= 1");
        require(multipld.fit.t1_bounds.min > 0.0 && multipld.fit.t1_bounds.min < multipld.fit.t1_bounds.max,
                "multipld.t1_bounds_s must satisfy 0 < min < max");
    } catch (const ConfigError &) {
        throw;
    } catch (const InputError &e) {
        throw ConfigError(e.what());
    }
}

RunConfig parse_config(const std::string &text) {
    json root;
    try {
        root = json::parse(text, nullptr, true, true);
    } catch (const json::parse_error &e) {
        throw ConfigError(std::string("config syntax error: ") + e.what());
    }
    RunConfig cfg;
    apply_json(root, cfg);
    cfg.validate();
    return cfg;
}

RunConfig load_config(const std::filesystem::path &path) {
    std::string text;
    try {
        text = io::read_text(path);
    } catch (const InputError &e) {
        throw ConfigError(e.what());
    }
    try {
        return parse_config(text);
    } catch (const ConfigError &e) {
        throw ConfigError(path.string() + ": " + e.what());
    }
}

std::string dump_config(const RunConfig &cfg) {
    json j;
    j["seed"] = cfg.seed;
    j["workers"] = cfg.workers;
    j["model"] = {{"lambda", cfg.model.lambda},
                  {"alpha", cfg.model.alpha},
                  {"t1_art_s", cfg.model.t1_art},
                  {"m0", cfg.model.m0_tis},
                  {"noise_sigma", cfg.model.noise_sigma}};
    const auto &s = cfg.schedule;
    j["schedule"] = {{"nframes", s.nframes},           {"total_s", s.total_s},       {"t_delay_s", s.timing.t_delay},
                     {"t_aq_s", s.timing.t_aq},         {"t_adjust_s", s.timing.t_adjust},
                     {"sub1_min_s", s.sub1_min_s},      {"sub1_max_s", s.sub1_max_s}, {"sub2_min_s", s.sub2_min_s}};
    const auto &d = cfg.design;
    json weights = json::object(), min_step = json::object();
    for (auto p : kAllParams) {
        weights[std::string(param_name(p))] = d.weights.w[index(p)];
        min_step[std::string(param_name(p))] = d.crlb.min_step[index(p)];
    }
    j["design"] = {{"grid_s", d.grid.values},
                   {"n_theta_search", d.n_theta_search},
                   {"n_theta_order", d.n_theta_order},
                   {"n_theta_eval", d.n_theta_eval},
                   {"n_orders", d.n_orders},
                   {"theta_sampling", d.sampling == ThetaSampling::Uniform ? "uniform" : "low_discrepancy"},
                   {"weights", weights},
                   {"rel_step", d.crlb.rel_step},
                   {"min_step", min_step},
                   {"condition_cap", d.crlb.condition_cap},
                   {"ranges", space_json(d.space)}};
    const auto &t = cfg.train.train;
    j["train"] = {{"n_samples", t.n_samples},
                  {"noise_sigma", t.noise_sigma},
                  {"batch_size", t.batch_size},
                  {"epochs", t.epochs},
                  {"learning_rate", t.learning_rate},
                  {"lr_decay", t.lr_decay},
                  {"beta1", t.beta1},
                  {"beta2", t.beta2},
                  {"epsilon", t.epsilon},
                  {"validation_fraction", t.validation_fraction},
                  {"ranges", space_json(cfg.train.space)},
                  {"filter",
                   {{"order", cfg.train.filter.order},
                    {"cutoff_hz", cfg.train.filter.cutoff_hz},
                    {"fs_hz", cfg.train.filter.fs_hz}}}};
    j["estimate"] = {{"background_floor", cfg.estimate.background_floor}};
    const auto &p = cfg.phantom;
    json lesions = json::array();
    for (const auto &l : p.lesions) {
        lesions.push_back({{"row", l.row}, {"col", l.col}, {"radius", l.radius}, {"multiplier", l.multiplier}});
    }
    j["phantom"] = {{"rows", p.rows},
                    {"cols", p.cols},
                    {"gray", params_json(p.gray)},
                    {"white", params_json(p.white)},
                    {"variation", p.variation},
                    {"noise_sigma", p.noise_sigma},
                    {"lesions", lesions}};
    const auto &m = cfg.multipld;
    j["multipld"] = {{"n_plds", m.n_plds},
                     {"total_s", m.total_s},
                     {"pld_min_s", m.pld_min_s},
                     {"pld_max_s", m.pld_max_s},
                     {"plds_s", m.plds_s},
                     {"flip_deg", m.flip_deg},
                     {"noise_sigma", m.noise_sigma},
                     {"nominal", {{"perfusion", m.nominal.f}, {"cbva", m.nominal.cbva}, {"bat", m.nominal.bat},
                                  {"mtr", m.nominal.mtr}}},
                     {"starts", m.fit.starts},
                     {"max_iterations", m.fit.max_iterations},
                     {"t1_bounds_s", {m.fit.t1_bounds.min, m.fit.t1_bounds.max}}};
    return j.dump(2) + "\n";
}

} // namespace aslmrf
