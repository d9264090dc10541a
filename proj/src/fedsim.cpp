#include "cafe/fedsim.hpp"

#include "cafe/io_util.hpp"
#include "cafe/rng.hpp"

#include <algorithm>
#include <cmath>
#include <fmt/format.h>
#include <istream>
#include <limits>
#include <numeric>
#include <ostream>
#include <sstream>
#include <stdexcept>

namespace cafe {

void SyntheticTask::validate() const {
    if (n_centers < 1) throw std::invalid_argument("task needs at least one center");
    if (n_classes < 2) throw std::invalid_argument("task needs at least two classes");
    if (dim < 1) throw std::invalid_argument("feature dimension must be positive");
    if (samples_per_center < 1) throw std::invalid_argument("every center needs at least one sample");
    if (test_samples < 1) throw std::invalid_argument("test set needs at least one sample");
    if (!(dirichlet_alpha > 0.0) || !std::isfinite(dirichlet_alpha)) {
        throw std::invalid_argument("Dirichlet alpha must be positive and finite");
    }
    if (!(class_sep > 0.0) || !(noise_scale > 0.0)) {
        throw std::invalid_argument("class separation and noise scale must be positive");
    }
}

void Dataset::push(std::span<const double> x, int label) {
    if (dim == 0) {
        dim = x.size();
    }
    if (x.size() != dim) {
        throw std::invalid_argument("feature row has the wrong dimension");
    }
    features.insert(features.end(), x.begin(), x.end());
    labels.push_back(label);
}

namespace {

Vector dirichlet(Rng& rng, std::size_t k, double alpha) {
    std::gamma_distribution<double> gamma(alpha, 1.0);
    Vector p(k);
    double sum = 0.0;
    for (auto& x : p) {
        x = gamma(rng);
        sum += x;
    }
    if (!(sum > 0.0)) {
        // Every draw underflowed (tiny alpha): the limit is a point mass.
        std::uniform_int_distribution<std::size_t> pick(0, k - 1);
        std::fill(p.begin(), p.end(), 0.0);
        p[pick(rng)] = 1.0;
        return p;
    }
    for (auto& x : p) {
        x /= sum;
    }
    return p;
}

void sample_points(Rng& rng, const std::vector<Vector>& means, const Vector& proportions, double noise,
                   std::size_t count, Dataset& out) {
    std::discrete_distribution<int> label_dist(proportions.begin(), proportions.end());
    std::normal_distribution<double> gauss(0.0, noise);
    const std::size_t d = means.front().size();
    out.dim = d;
    Vector x(d);
    for (std::size_t s = 0; s < count; ++s) {
        const int y = label_dist(rng);
        for (std::size_t k = 0; k < d; ++k) {
            x[k] = means[static_cast<std::size_t>(y)][k] + gauss(rng);
        }
        out.push(x, y);
    }
}

/// Class logits for one sample, turned into probabilities in place.
void predict(const ModelState& m, std::span<const double> x, Vector& probs) {
    const std::size_t stride = m.dim + 1;
    probs.resize(m.n_classes);
    double top = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < m.n_classes; ++c) {
        const double* w = m.weights.data() + c * stride;
        double z = w[m.dim];
        for (std::size_t k = 0; k < m.dim; ++k) {
            z += w[k] * x[k];
        }
        probs[c] = z;
        top = std::max(top, z);
    }
    double sum = 0.0;
    for (auto& p : probs) {
        p = std::exp(p - top);
        sum += p;
    }
    for (auto& p : probs) {
        p /= sum;
    }
}

/// Adds the cross-entropy gradient of one sample to @p grad.
void add_sample_gradient(const ModelState& m, std::span<const double> x, int y, Vector& probs, Vector& grad) {
    predict(m, x, probs);
    const std::size_t stride = m.dim + 1;
    for (std::size_t c = 0; c < m.n_classes; ++c) {
        const double r = probs[c] - (static_cast<int>(c) == y ? 1.0 : 0.0);
        double* g = grad.data() + c * stride;
        for (std::size_t k = 0; k < m.dim; ++k) {
            g[k] += r * x[k];
        }
        g[m.dim] += r;
    }
}

Vector mean_gradient(const ModelState& model, const Dataset& data, std::span<const std::size_t> rows) {
    Vector grad(model.parameter_count(), 0.0);
    Vector probs;
    for (auto k : rows) {
        add_sample_gradient(model, data.row(k), data.labels[k], probs, grad);
    }
    const double inv = 1.0 / static_cast<double>(rows.size());
    for (auto& g : grad) {
        g *= inv;
    }
    return grad;
}

std::vector<std::size_t> all_rows(std::size_t n) {
    std::vector<std::size_t> rows(n);
    std::iota(rows.begin(), rows.end(), std::size_t{0});
    return rows;
}

void check_compatible(const ModelState& model, const Dataset& data) {
    if (data.size() == 0) {
        throw std::invalid_argument("dataset is empty");
    }
    if (data.dim != model.dim) {
        throw std::invalid_argument(fmt::format("dataset dim {} does not match model dim {}", data.dim, model.dim));
    }
}

/// One epoch of mini-batch SGD on a single center.
void local_epoch(ModelState& model, const Dataset& data, const TrainConfig& cfg, Rng& rng) {
    auto order = all_rows(data.size());
    // A full batch needs no shuffle; skipping it keeps the summation order fixed.
    if (cfg.batch_size < data.size()) {
        std::shuffle(order.begin(), order.end(), rng);
    }
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
        const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
        const auto grad = mean_gradient(model, data, std::span<const std::size_t>(order).subspan(start, stop - start));
        for (std::size_t k = 0; k < grad.size(); ++k) {
            model.weights[k] -= cfg.learning_rate * grad[k];
        }
        ++model.step_count;
    }
}

} // namespace

TaskData generate_task(const SyntheticTask& cfg) {
    cfg.validate();
    auto rng = make_rng(cfg.seed, Stream::task);
    TaskData task;
    task.n_classes = cfg.n_classes;
    std::normal_distribution<double> mean_dist(0.0, cfg.class_sep);
    task.class_means.assign(cfg.n_classes, Vector(cfg.dim));
    for (auto& m : task.class_means) {
        for (auto& x : m) {
            x = mean_dist(rng);
        }
    }
    task.centers.resize(cfg.n_centers);
    for (std::size_t i = 0; i < cfg.n_centers; ++i) {
        auto p = dirichlet(rng, cfg.n_classes, cfg.dirichlet_alpha);
        sample_points(rng, task.class_means, p, cfg.noise_scale, cfg.samples_per_center, task.centers[i]);
        task.label_proportions.push_back(std::move(p));
    }
    const Vector uniform(cfg.n_classes, 1.0 / static_cast<double>(cfg.n_classes));
    sample_points(rng, task.class_means, uniform, cfg.noise_scale, cfg.test_samples, task.test);
    return task;
}

double gradient_norm_ceiling(const TaskData& task) {
    double widest = 0.0;
    for (const auto& data : task.centers) {
        for (std::size_t k = 0; k < data.size(); ++k) {
            double sq = 1.0;
            for (double x : data.row(k)) {
                sq += x * x;
            }
            widest = std::max(widest, sq);
        }
    }
    return std::sqrt(2.0 * widest);
}

ModelState ModelState::zeros(std::size_t n_classes, std::size_t dim) {
    ModelState m;
    m.n_classes = n_classes;
    m.dim = dim;
    m.weights.assign(n_classes * (dim + 1), 0.0);
    return m;
}

void TrainConfig::validate(std::size_t samples_per_center) const {
    if (local_epochs < 1) throw std::invalid_argument("local_epochs must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("learning rate must be positive and finite");
    }
    if (batch_size < 1) throw std::invalid_argument("batch size must be >= 1");
    if (!(probe_fraction > 0.0) || probe_fraction > 1.0) {
        throw std::invalid_argument("probe fraction must lie in (0, 1]");
    }
    if (samples_per_center > 0 && probe_size(probe_fraction, samples_per_center) < 1) {
        throw std::invalid_argument("probe fraction selects no samples");
    }
}

double loss(const ModelState& model, const Dataset& data) {
    check_compatible(model, data);
    Vector probs;
    double total = 0.0;
    for (std::size_t k = 0; k < data.size(); ++k) {
        predict(model, data.row(k), probs);
        total -= std::log(std::max(probs[static_cast<std::size_t>(data.labels[k])], 1e-300));
    }
    return total / static_cast<double>(data.size());
}

double global_loss(const ModelState& model, std::span<const Dataset> centers) {
    double total = 0.0;
    for (const auto& d : centers) {
        total += loss(model, d);
    }
    return total / static_cast<double>(centers.size());
}

double accuracy(const ModelState& model, const Dataset& data) {
    check_compatible(model, data);
    Vector probs;
    std::size_t hits = 0;
    for (std::size_t k = 0; k < data.size(); ++k) {
        predict(model, data.row(k), probs);
        const auto best = static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
        hits += best == data.labels[k] ? 1 : 0;
    }
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

Vector exact_gradient(const ModelState& model, const Dataset& data) {
    check_compatible(model, data);
    const auto rows = all_rows(data.size());
    return mean_gradient(model, data, rows);
}

std::size_t probe_size(double epsilon, std::size_t n) {
    // The small slack absorbs representation error, e.g. 0.07 * 100.
    const double raw = std::ceil(epsilon * static_cast<double>(n) - 1e-9);
    return std::clamp<std::size_t>(static_cast<std::size_t>(std::max(raw, 1.0)), 1, n);
}

Vector probe_gradient(const ModelState& model, const Dataset& data, double epsilon, std::uint64_t seed) {
    check_compatible(model, data);
    const std::size_t k = probe_size(epsilon, data.size());
    if (k == data.size()) {
        return exact_gradient(model, data);
    }
    Rng rng(seed);
    auto rows = all_rows(data.size());
    for (std::size_t s = 0; s < k; ++s) {
        std::uniform_int_distribution<std::size_t> pick(s, rows.size() - 1);
        std::swap(rows[s], rows[pick(rng)]);
    }
    rows.resize(k);
    return mean_gradient(model, data, rows);
}

GradientSnapshot probe_all(const ModelState& model, std::span<const Dataset> centers, double epsilon,
                           std::uint64_t seed, std::size_t slot) {
    std::vector<Vector> grads;
    grads.reserve(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        grads.push_back(probe_gradient(model, centers[i], epsilon, derive_seed(seed, Stream::probe, {slot, i})));
    }
    return GradientSnapshot(std::move(grads), fmt::format("slot{}-step{}", slot, model.step_count));
}

ModelState run_local_round(const ModelState& model, const SelectionVector& selected,
                           std::span<const Dataset> centers, const TrainConfig& cfg, std::uint64_t seed,
                           std::size_t slot) {
    if (selected.size() != centers.size()) {
        throw std::invalid_argument("selection size does not match the number of centers");
    }
    const auto chosen = selected.selected();
    if (chosen.empty()) {
        return model;
    }
    double weight_total = 0.0;
    std::vector<double> weights;
    for (auto i : chosen) {
        const double w = cfg.aggregation == Aggregation::uniform ? 1.0 : static_cast<double>(centers[i].size());
        weights.push_back(w);
        weight_total += w;
    }

    ModelState global = model;
    for (std::size_t epoch = 0; epoch < cfg.local_epochs; ++epoch) {
        Vector aggregate(global.parameter_count(), 0.0);
        std::uint64_t steps = 0;
        for (std::size_t k = 0; k < chosen.size(); ++k) {
            const auto i = chosen[k];
            ModelState local = global;
            auto rng = make_rng(seed, Stream::train, {slot, i, epoch});
            local_epoch(local, centers[i], cfg, rng);
            steps = std::max(steps, local.step_count - global.step_count);
            const double share = weights[k] / weight_total;
            for (std::size_t p = 0; p < aggregate.size(); ++p) {
                aggregate[p] += share * local.weights[p];
            }
        }
        global.weights = std::move(aggregate);
        global.step_count += steps;
    }
    return global;
}

std::vector<ModelState> full_participation_trajectory(const TaskData& task, const TrainConfig& cfg,
                                                      const ModelState& init, std::size_t horizon,
                                                      std::uint64_t seed) {
    std::vector<ModelState> out;
    out.reserve(horizon);
    const auto everyone = SelectionVector::all(task.centers.size());
    ModelState current = init;
    for (std::size_t t = 0; t < horizon; ++t) {
        current = run_local_round(current, everyone, task.centers, cfg, seed, t);
        out.push_back(current);
    }
    return out;
}

void write_task_csv(std::ostream& out, const TaskData& task) {
    const std::size_t d = task.test.dim;
    out << "center,label";
    for (std::size_t k = 0; k < d; ++k) {
        out << ",x" << k;
    }
    out << '\n';
    auto dump = [&](long center, const Dataset& data) {
        for (std::size_t s = 0; s < data.size(); ++s) {
            out << center << ',' << data.labels[s];
            for (double x : data.row(s)) {
                out << ',' << format_real(x);
            }
            out << '\n';
        }
    };
    for (std::size_t i = 0; i < task.centers.size(); ++i) {
        dump(static_cast<long>(i), task.centers[i]);
    }
    dump(-1, task.test);
}

TaskData read_task_csv(std::istream& in) {
    std::string line;
    if (!std::getline(in, line) || line.rfind("center,label", 0) != 0) {
        throw std::invalid_argument("task CSV must start with a 'center,label,...' header");
    }
    TaskData task;
    std::size_t line_no = 1;
    int max_label = -1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string field;
        std::vector<double> values;
        long center = 0;
        int label = 0;
        std::size_t col = 0;
        try {
            while (std::getline(ss, field, ',')) {
                if (col == 0) center = std::stol(field);
                else if (col == 1) label = std::stoi(field);
                else values.push_back(std::stod(field));
                ++col;
            }
        } catch (const std::exception&) {
            throw std::invalid_argument(fmt::format("task CSV line {}: malformed row", line_no));
        }
        if (col < 3 || label < 0 || center < -1) {
            throw std::invalid_argument(fmt::format("task CSV line {}: malformed row", line_no));
        }
        max_label = std::max(max_label, label);
        if (center == -1) {
            task.test.push(values, label);
        } else {
            const auto idx = static_cast<std::size_t>(center);
            if (task.centers.size() <= idx) task.centers.resize(idx + 1);
            task.centers[idx].push(values, label);
        }
    }
    task.n_classes = static_cast<std::size_t>(max_label + 1);
    return task;
}

} // namespace cafe
