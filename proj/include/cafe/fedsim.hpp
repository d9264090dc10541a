#pragma once

/// @file fedsim.hpp
/// @brief Exactly computable federated learning task: Gaussian-mixture data
/// split across centers with Dirichlet label skew, a multinomial
/// logistic-regression learner, probing, and per-epoch aggregated local rounds.

#include "cafe/fleet.hpp"
#include "cafe/utility.hpp"

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

namespace cafe {

struct SyntheticTask {
    std::size_t n_centers = 10;
    std::size_t n_classes = 10;
    std::size_t dim = 10;
    double class_sep = 1.0;   ///< std-dev of the class-mean coordinates
    double noise_scale = 1.0; ///< std-dev of features around their class mean
    std::size_t samples_per_center = 200;
    std::size_t test_samples = 2000;
    double dirichlet_alpha = 0.8;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Row-major feature matrix with integer labels.
struct Dataset {
    std::size_t dim = 0;
    std::vector<double> features;
    std::vector<int> labels;

    [[nodiscard]] std::size_t size() const { return labels.size(); }
    [[nodiscard]] std::span<const double> row(std::size_t k) const { return {features.data() + k * dim, dim}; }
    void push(std::span<const double> x, int label);

    friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct TaskData {
    std::vector<Dataset> centers;
    Dataset test;
    std::vector<Vector> class_means;
    /// The Dirichlet draw each center's labels were sampled from.
    std::vector<Vector> label_proportions;
    std::size_t n_classes = 0;

    friend bool operator==(const TaskData&, const TaskData&) = default;
};

TaskData generate_task(const SyntheticTask& cfg);

/// sqrt(2) * max_k ||(x_k, 1)|| over all training points: no cross-entropy
/// gradient of this model class on these data can be longer, for any weights.
double gradient_norm_ceiling(const TaskData& task);

/// Multinomial logistic regression: one row of (dim + 1) weights per class,
/// the last entry of each row being the bias.
struct ModelState {
    std::size_t n_classes = 0;
    std::size_t dim = 0;
    Vector weights;
    std::uint64_t step_count = 0;

    static ModelState zeros(std::size_t n_classes, std::size_t dim);
    [[nodiscard]] std::size_t parameter_count() const { return weights.size(); }

    friend bool operator==(const ModelState&, const ModelState&) = default;
};

enum class Aggregation { uniform, size_weighted };

struct TrainConfig {
    std::size_t local_epochs = 2;
    double learning_rate = 0.1;
    std::size_t batch_size = 20;
    double probe_fraction = 0.05;
    Aggregation aggregation = Aggregation::uniform;

    void validate(std::size_t samples_per_center) const;
};

/// Average cross-entropy over the dataset.
double loss(const ModelState& model, const Dataset& data);
/// Mean loss over centers, (1/N) sum_i f_i(w).
double global_loss(const ModelState& model, std::span<const Dataset> centers);
double accuracy(const ModelState& model, const Dataset& data);

/// Average cross-entropy gradient over the whole dataset.
Vector exact_gradient(const ModelState& model, const Dataset& data);

/// Number of samples a probe draws: ceil(epsilon * |data|), at least 1.
std::size_t probe_size(double epsilon, std::size_t n);

/// Average gradient over a uniform subsample without replacement of
/// probe_size(epsilon, |data|) points. Equals exact_gradient when that is all points.
Vector probe_gradient(const ModelState& model, const Dataset& data, double epsilon, std::uint64_t seed);

/// Probes every center; stream for center i is derived from (seed, slot, i).
GradientSnapshot probe_all(const ModelState& model, std::span<const Dataset> centers, double epsilon,
                           std::uint64_t seed, std::size_t slot);

/// One slot of training: M epochs, each a local mini-batch SGD pass on every
/// selected center followed by server averaging. Empty selection leaves the
/// model unchanged.
ModelState run_local_round(const ModelState& model, const SelectionVector& selected,
                           std::span<const Dataset> centers, const TrainConfig& cfg, std::uint64_t seed,
                           std::size_t slot);

/// Models after each of @p horizon all-select rounds, starting from @p init.
std::vector<ModelState> full_participation_trajectory(const TaskData& task, const TrainConfig& cfg,
                                                      const ModelState& init, std::size_t horizon,
                                                      std::uint64_t seed);

/// Text dump: header `center,label,x0,...`; center -1 marks the test set.
void write_task_csv(std::ostream& out, const TaskData& task);
TaskData read_task_csv(std::istream& in);

} // namespace cafe
