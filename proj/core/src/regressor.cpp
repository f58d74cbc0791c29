#include "aslmrf/regressor.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "aslmrf/error.hpp"
#include "aslmrf/maps.hpp"
#include "aslmrf/parallel.hpp"
#include "aslmrf/random.hpp"

namespace aslmrf {

namespace {

constexpr std::uint64_t kDatasetStream = 0xD47A;
constexpr std::uint64_t kInitStream = 0x1417;
constexpr std::uint64_t kShuffleStream = 0x5A0F;

constexpr double kOutputMargin = 0.1; // fraction of the range allowed beyond each end

struct AdamState {
    Eigen::MatrixXf m_w, v_w;
    Eigen::VectorXf m_b, v_b;
};

void standardize_into(const TrainedNetwork &net, const Eigen::MatrixXf &src, std::span<const std::size_t> cols,
                      Eigen::MatrixXf &dst) {
    dst.resize(src.rows(), static_cast<Eigen::Index>(cols.size()));
    for (std::size_t j = 0; j < cols.size(); ++j) {
        dst.col(static_cast<Eigen::Index>(j)) =
            (src.col(static_cast<Eigen::Index>(cols[j])) - net.input_mean).cwiseProduct(net.input_scale);
    }
}

double clip_output(const NetworkSpec &spec, double normalized) {
    const auto &r = spec.target_range;
    const double lo = r.min - kOutputMargin * r.width();
    const double hi = r.max + kOutputMargin * r.width();
    return std::clamp(r.min + normalized * r.width(), lo, hi);
}

} // namespace

NetworkSpec NetworkSpec::default_for(Param target, std::size_t input_dim) {
    NetworkSpec s;
    s.target = target;
    s.input_dim = input_dim;
    s.target_range = ParameterSpace::training_default()[target];
    switch (target) {
    case Param::Perfusion: s.hidden = {10, 10, 10}; s.preconditioned = true; break;
    case Param::Cbva: s.hidden = {10, 10, 10}; s.preconditioned = true; break;
    case Param::Bat: s.hidden = {10, 5}; s.preconditioned = true; break;
    case Param::Mtr: s.hidden = {10, 10, 5, 5}; s.preconditioned = true; break;
    case Param::T1: s.hidden = {20}; s.preconditioned = false; break;
    case Param::Flip: s.hidden = {20}; s.preconditioned = false; break;
    }
    return s;
}

void NetworkSpec::validate() const {
    if (input_dim == 0) {
        throw InputError("network input dimension must be > 0");
    }
    for (auto w : hidden) {
        if (w == 0) {
            throw InputError("hidden layer widths must be > 0");
        }
    }
    if (!(target_range.min < target_range.max)) {
        throw InputError("network target range must satisfy min < max");
    }
}

void TrainedNetwork::validate() const {
    spec.validate();
    if (layers.size() != spec.hidden.size() + 1) {
        throw InputError("network has " + std::to_string(layers.size()) + " layers, expected " +
                         std::to_string(spec.hidden.size() + 1));
    }
    auto in = static_cast<Eigen::Index>(spec.input_dim);
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto out = static_cast<Eigen::Index>(l < spec.hidden.size() ? spec.hidden[l] : 1);
        if (layers[l].weight.rows() != out || layers[l].weight.cols() != in || layers[l].bias.size() != out) {
            throw InputError("layer " + std::to_string(l) + " has inconsistent shape");
        }
        in = out;
    }
    if (input_mean.size() != static_cast<Eigen::Index>(spec.input_dim) ||
        input_scale.size() != static_cast<Eigen::Index>(spec.input_dim)) {
        throw InputError("input normalization vectors do not match the input dimension");
    }
}

std::vector<double> Dataset::target_values(Param p) const {
    std::vector<double> out;
    out.reserve(targets.size());
    for (const auto &t : targets) {
        out.push_back(t.get(p));
    }
    return out;
}

Dataset synthesize_dataset(const TrainConfig &cfg, const ScanSchedule &sched, const ParameterSpace &space,
                           const IIRFilter *filt, const ModelConstants &c) {
    if (cfg.n_samples < 1) {
        throw InputError("dataset needs at least one sample");
    }
    if (!(cfg.noise_sigma >= 0.0)) {
        throw InputError("noise sigma must be >= 0");
    }
    sched.validate();
    space.validate();
    c.validate();
    const std::size_t n = cfg.n_samples;
    const std::size_t frames = sched.size();
    Dataset data;
    data.inputs.resize(static_cast<Eigen::Index>(frames), static_cast<Eigen::Index>(n));
    data.targets.resize(n);
    data.filtered = filt != nullptr;
    const std::uint64_t base = derive_seed(cfg.seed, kDatasetStream);

    parallel_for(n, cfg.workers, [&](std::size_t i) {
        Rng rng(derive_seed(base, i));
        ParamVector v{};
        for (std::size_t k = 0; k < kNumParams; ++k) {
            v[k] = rng.uniform(space.ranges[k].min, space.ranges[k].max);
        }
        const auto theta = HemodynamicParams::from_array(v);
        theta.validate();
        Fingerprint fp;
        fp.samples.resize(frames);
        simulate_into(theta, c, sched, fp.samples);
        if (cfg.noise_sigma > 0.0) {
            for (auto &s : fp.samples) {
                s += cfg.noise_sigma * rng.normal();
            }
        }
        fp = normalize_first_frame(std::move(fp));
        if (filt != nullptr) {
            fp.samples = filtfilt(*filt, fp.samples);
        }
        auto col = data.inputs.col(static_cast<Eigen::Index>(i));
        for (std::size_t r = 0; r < frames; ++r) {
            col(static_cast<Eigen::Index>(r)) = static_cast<float>(fp.samples[r]);
        }
        data.targets[i] = theta;
    });
    return data;
}

Eigen::RowVectorXf forward(const TrainedNetwork &net, const Eigen::MatrixXf &standardized) {
    Eigen::MatrixXf act = standardized;
    for (std::size_t l = 0; l < net.layers.size(); ++l) {
        Eigen::MatrixXf z = net.layers[l].weight * act;
        z.colwise() += net.layers[l].bias;
        if (l + 1 < net.layers.size()) {
            z = z.cwiseMax(0.0f);
        }
        act = std::move(z);
    }
    return act.row(0);
}

TrainedNetwork train(const NetworkSpec &spec, const Dataset &data, const TrainConfig &cfg) {
    spec.validate();
    if (data.input_dim() != spec.input_dim) {
        throw InputError("dataset has " + std::to_string(data.input_dim()) + " frames but the network expects " +
                         std::to_string(spec.input_dim));
    }
    if (data.size() < 1) {
        throw InputError("cannot train on an empty dataset");
    }
    if (data.filtered != spec.preconditioned) {
        throw InputError(std::string("network for ") + std::string(param_name(spec.target)) +
                         (spec.preconditioned ? " expects high-passed inputs" : " expects unfiltered inputs"));
    }
    if (cfg.batch_size < 1 || cfg.epochs < 1) {
        throw InputError("batch size and epoch count must be >= 1");
    }

    const std::size_t n = data.size();
    std::size_t n_val = static_cast<std::size_t>(std::floor(cfg.validation_fraction * static_cast<double>(n)));
    if (n_val >= n) {
        n_val = n - 1;
    }
    const std::size_t n_train = n - n_val;
    const auto in_dim = static_cast<Eigen::Index>(spec.input_dim);

    TrainedNetwork net;
    net.spec = spec;
    net.history.seed = cfg.seed;
    net.history.n_train = n_train;
    net.history.n_val = n_val;

    // Input standardization from the training split.
    {
        Eigen::VectorXd sum = Eigen::VectorXd::Zero(in_dim);
        Eigen::VectorXd sq = Eigen::VectorXd::Zero(in_dim);
        for (std::size_t j = 0; j < n_train; ++j) {
            const Eigen::VectorXd x = data.inputs.col(static_cast<Eigen::Index>(j)).cast<double>();
            sum += x;
            sq += x.cwiseProduct(x);
        }
        const Eigen::VectorXd mean = sum / static_cast<double>(n_train);
        Eigen::VectorXd var = sq / static_cast<double>(n_train) - mean.cwiseProduct(mean);
        net.input_mean = mean.cast<float>();
        net.input_scale.resize(in_dim);
        for (Eigen::Index r = 0; r < in_dim; ++r) {
            const double sd = std::sqrt(std::max(var(r), 0.0));
            net.input_scale(r) = sd > 1e-12 ? static_cast<float>(1.0 / sd) : 0.0f;
        }
    }

    std::vector<float> y(n);
    {
        const auto &r = spec.target_range;
        for (std::size_t i = 0; i < n; ++i) {
            y[i] = static_cast<float>((data.targets[i].get(spec.target) - r.min) / r.width());
        }
    }

    // Seeded uniform fan-in initialization.
    {
        Rng rng(derive_seed(cfg.seed, kInitStream));
        Eigen::Index fan_in = in_dim;
        for (std::size_t l = 0; l <= spec.hidden.size(); ++l) {
            const bool head = l == spec.hidden.size();
            const auto out = static_cast<Eigen::Index>(head ? 1 : spec.hidden[l]);
            const double limit = std::sqrt((head ? 3.0 : 6.0) / static_cast<double>(fan_in));
            DenseLayer layer;
            layer.weight.resize(out, fan_in);
            for (Eigen::Index c = 0; c < fan_in; ++c) {
                for (Eigen::Index r = 0; r < out; ++r) {
                    layer.weight(r, c) = static_cast<float>(rng.uniform(-limit, limit));
                }
            }
            layer.bias = Eigen::VectorXf::Zero(out);
            net.layers.push_back(std::move(layer));
            fan_in = out;
        }
    }

    const std::size_t n_layers = net.layers.size();
    std::vector<AdamState> adam(n_layers);
    for (std::size_t l = 0; l < n_layers; ++l) {
        const auto &L = net.layers[l];
        adam[l].m_w = Eigen::MatrixXf::Zero(L.weight.rows(), L.weight.cols());
        adam[l].v_w = adam[l].m_w;
        adam[l].m_b = Eigen::VectorXf::Zero(L.bias.size());
        adam[l].v_b = adam[l].m_b;
    }

    auto validation_loss = [&](const TrainedNetwork &model) {
        if (n_val == 0) {
            return std::numeric_limits<double>::quiet_NaN();
        }
        double total = 0.0;
        constexpr std::size_t chunk = 4096;
        std::vector<std::size_t> cols;
        Eigen::MatrixXf xs;
        for (std::size_t s = n_train; s < n; s += chunk) {
            const std::size_t e = std::min(n, s + chunk);
            cols.resize(e - s);
            std::iota(cols.begin(), cols.end(), s);
            standardize_into(model, data.inputs, cols, xs);
            const Eigen::RowVectorXf out = forward(model, xs);
            for (std::size_t j = 0; j < cols.size(); ++j) {
                const double d = out(static_cast<Eigen::Index>(j)) - y[cols[j]];
                total += d * d;
            }
        }
        return total / static_cast<double>(n_val);
    };

    std::vector<std::size_t> perm(n_train);
    std::iota(perm.begin(), perm.end(), 0);
    std::vector<Eigen::MatrixXf> acts(n_layers + 1);
    std::vector<Eigen::MatrixXf> pre(n_layers);
    Eigen::MatrixXf grad;
    std::size_t step = 0;
    TrainedNetwork best;
    double best_val = std::numeric_limits<double>::infinity();

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(derive_seed(cfg.seed, kShuffleStream), epoch));
        for (std::size_t i = n_train - 1; i > 0; --i) {
            std::swap(perm[i], perm[rng.below(i + 1)]);
        }
        const double lr = cfg.learning_rate * std::pow(cfg.lr_decay, static_cast<double>(epoch));
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < n_train; start += cfg.batch_size) {
            const std::size_t stop = std::min(n_train, start + cfg.batch_size);
            const std::span<const std::size_t> cols(perm.data() + start, stop - start);
            const auto B = static_cast<Eigen::Index>(cols.size());
            standardize_into(net, data.inputs, cols, acts[0]);
            for (std::size_t l = 0; l < n_layers; ++l) {
                pre[l].noalias() = net.layers[l].weight * acts[l];
                pre[l].colwise() += net.layers[l].bias;
                acts[l + 1] = (l + 1 < n_layers) ? Eigen::MatrixXf(pre[l].cwiseMax(0.0f)) : pre[l];
            }
            grad.resize(1, B);
            double batch_loss = 0.0;
            for (Eigen::Index j = 0; j < B; ++j) {
                const float d = acts[n_layers](0, j) - y[cols[static_cast<std::size_t>(j)]];
                batch_loss += static_cast<double>(d) * d;
                grad(0, j) = 2.0f * d / static_cast<float>(B);
            }
            batch_loss /= static_cast<double>(B);
            if (!std::isfinite(batch_loss)) {
                throw NumericalError("training of the " + std::string(param_name(spec.target)) +
                                     " network diverged (non-finite loss) in epoch " + std::to_string(epoch));
            }
            epoch_loss += batch_loss * static_cast<double>(B);

            ++step;
            const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step));
            const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step));
            const auto step_size = static_cast<float>(lr * std::sqrt(bc2) / bc1);
            const auto b1 = static_cast<float>(cfg.beta1);
            const auto b2 = static_cast<float>(cfg.beta2);
            const auto eps = static_cast<float>(cfg.epsilon * std::sqrt(bc2));
            for (std::size_t l = n_layers; l-- > 0;) {
                const Eigen::MatrixXf gw = grad * acts[l].transpose();
                const Eigen::VectorXf gb = grad.rowwise().sum();
                if (l > 0) {
                    Eigen::MatrixXf back = net.layers[l].weight.transpose() * grad;
                    grad = back.cwiseProduct((pre[l - 1].array() > 0.0f).cast<float>().matrix());
                }
                auto &st = adam[l];
                auto &L = net.layers[l];
                st.m_w = b1 * st.m_w + (1.0f - b1) * gw;
                st.v_w = b2 * st.v_w + (1.0f - b2) * gw.cwiseProduct(gw);
                st.m_b = b1 * st.m_b + (1.0f - b1) * gb;
                st.v_b = b2 * st.v_b + (1.0f - b2) * gb.cwiseProduct(gb);
                L.weight.array() -= step_size * st.m_w.array() / (st.v_w.array().sqrt() + eps);
                L.bias.array() -= step_size * st.m_b.array() / (st.v_b.array().sqrt() + eps);
            }
        }
        const double train_loss = epoch_loss / static_cast<double>(n_train);
        const double val_loss = validation_loss(net);
        net.history.train_loss.push_back(train_loss);
        net.history.val_loss.push_back(val_loss);
        net.history.epochs = epoch + 1;
        if (cfg.on_epoch) {
            cfg.on_epoch(epoch, train_loss, val_loss);
        }
        const double score = n_val > 0 ? val_loss : train_loss;
        if (score < best_val) {
            best_val = score;
            best.layers = net.layers;
        }
    }
    // Keep the weights from the epoch with the lowest validation loss.
    if (!best.layers.empty()) {
        net.layers = std::move(best.layers);
    }
    return net;
}

std::vector<double> predict_batch(const TrainedNetwork &net, const Eigen::MatrixXf &inputs) {
    if (inputs.rows() != static_cast<Eigen::Index>(net.spec.input_dim)) {
        throw InputError("input has " + std::to_string(inputs.rows()) + " frames but the network expects " +
                         std::to_string(net.spec.input_dim));
    }
    if (!inputs.allFinite()) {
        throw InputError("network input contains non-finite samples");
    }
    Eigen::MatrixXf xs = (inputs.colwise() - net.input_mean).array().colwise() * net.input_scale.array();
    const Eigen::RowVectorXf out = forward(net, xs);
    std::vector<double> result(static_cast<std::size_t>(out.size()));
    for (Eigen::Index j = 0; j < out.size(); ++j) {
        const double v = out(j);
        if (!std::isfinite(v)) {
            throw NumericalError("network for " + std::string(param_name(net.spec.target)) +
                                 " produced a non-finite output");
        }
        result[static_cast<std::size_t>(j)] = clip_output(net.spec, v);
    }
    return result;
}

double predict(const TrainedNetwork &net, const Fingerprint &fp) {
    if (fp.size() != net.spec.input_dim) {
        throw InputError("fingerprint has " + std::to_string(fp.size()) + " frames but the network expects " +
                         std::to_string(net.spec.input_dim));
    }
    if (!fp.normalized) {
        throw InputError("fingerprint must be normalized by its first frame before prediction");
    }
    if (fp.filtered != net.spec.preconditioned) {
        throw InputError(std::string("network for ") + std::string(param_name(net.spec.target)) +
                         (net.spec.preconditioned ? " expects a high-passed fingerprint" : " expects an unfiltered fingerprint"));
    }
    Eigen::MatrixXf x(static_cast<Eigen::Index>(fp.size()), 1);
    for (std::size_t r = 0; r < fp.size(); ++r) {
        x(static_cast<Eigen::Index>(r), 0) = static_cast<float>(fp.samples[r]);
    }
    return predict_batch(net, x).front();
}

std::array<std::vector<double>, kNumParams> estimate_maps(const std::array<TrainedNetwork, kNumParams> &nets,
                                                          std::span<const Fingerprint> volume, const IIRFilter &filt,
                                                          const EstimateSettings &settings) {
    std::array<std::vector<double>, kNumParams> maps;
    for (auto &m : maps) {
        m.assign(volume.size(), kNoData);
    }
    if (volume.empty()) {
        return maps;
    }
    const std::size_t frames = volume.front().size();
    for (const auto &fp : volume) {
        if (fp.size() != frames) {
            throw InputError("all fingerprints in a volume must have the same length");
        }
    }
    for (auto p : kAllParams) {
        if (nets[index(p)].spec.target != p) {
            throw InputError("network slot " + std::string(param_name(p)) + " holds a network for " +
                             std::string(param_name(nets[index(p)].spec.target)));
        }
    }

    std::vector<std::size_t> foreground;
    for (std::size_t v = 0; v < volume.size(); ++v) {
        const double first = volume[v].samples.front();
        if (std::isfinite(first) && std::abs(first) >= settings.background_floor) {
            foreground.push_back(v);
        }
    }
    if (foreground.empty()) {
        return maps;
    }
    const auto rows = static_cast<Eigen::Index>(frames);
    const auto cols = static_cast<Eigen::Index>(foreground.size());
    Eigen::MatrixXf raw(rows, cols), filtered(rows, cols);
    parallel_for(foreground.size(), settings.workers, [&](std::size_t j) {
        auto fp = normalize_first_frame(volume[foreground[j]]);
        const auto hp = filtfilt(filt, fp.samples);
        for (std::size_t r = 0; r < frames; ++r) {
            raw(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = static_cast<float>(fp.samples[r]);
            filtered(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(j)) = static_cast<float>(hp[r]);
        }
    });
    for (auto p : kAllParams) {
        const auto &net = nets[index(p)];
        const auto pred = predict_batch(net, net.spec.preconditioned ? filtered : raw);
        for (std::size_t j = 0; j < foreground.size(); ++j) {
            maps[index(p)][foreground[j]] = pred[j];
        }
    }
    return maps;
}

} // namespace aslmrf
