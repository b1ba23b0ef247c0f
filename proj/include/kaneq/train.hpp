#ifndef KANEQ_TRAIN_HPP
#define KANEQ_TRAIN_HPP

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "kaneq/nn.hpp"

namespace kaneq::train {

struct SchedulerConfig {
    int patience = 10;     // consecutive non-improving epochs before a cut
    double factor = 0.1;   // lr multiplier on a cut (0.1 = "reduced by 90%")
    double min_lr = 1e-6;
};

struct TrainConfig {
    int epochs = 200;
    int batch_size = 192;
    double initial_lr = 0.01;
    SchedulerConfig scheduler;
    std::uint64_t seed = 0;
    bool shuffle = true;
};

struct EpochRecord {
    int epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
    double lr = 0.0;
    double seconds = 0.0;
};

struct TrainReport {
    std::vector<EpochRecord> epochs;
    double best_val_loss = 0.0;
    int best_epoch = 0; // 0 when epochs == 0 (checkpoint is the init)
    double total_seconds = 0.0;
};

// mean over all batch x q entries of the squared difference
ad::Tensor mse_loss(ad::Graph& g, const ad::Tensor& pred, const ad::Tensor& target);
double mse_value(const std::vector<double>& pred, const std::vector<double>& target);

// Standard Adam with bias correction.
class Adam {
public:
    explicit Adam(const std::vector<ad::Tensor>& params, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);

    // Applies one update from the accumulated grads. Any non-finite grad
    // aborts the step before any parameter is touched.
    void step(std::vector<ad::Tensor>& params, double lr);

    long t() const { return t_; }

private:
    double beta1_, beta2_, eps_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// Reduce-on-plateau: lr <- lr * factor after `patience` consecutive epochs
// without a strict improvement of the validation loss; the counter resets
// on improvement and on every reduction; lr never drops below min_lr.
class PlateauScheduler {
public:
    PlateauScheduler(double initial_lr, SchedulerConfig cfg);
    double step(double val_loss);
    double lr() const { return lr_; }

private:
    SchedulerConfig cfg_;
    double lr_;
    double best_;
    int stale_ = 0;
};

struct TrainData {
    Matrix train_x, train_y;
    Matrix val_x, val_y;
};

struct TrainResult {
    TrainReport report;
    nn::Network best; // deep snapshot at the best validation epoch
};

// Sequential minibatch training, deterministic given the seed. When
// run_dir is set, an epoch-wise CSV (epoch, train_loss, val_loss, lr,
// seconds) is streamed there as epochs.csv.
TrainResult train(nn::Network& net, const TrainData& data, const TrainConfig& cfg,
                  const std::optional<std::string>& run_dir = std::nullopt);

struct SearchSpace {
    int min_layers = 1, max_layers = 4;
    int min_neurons = 1, max_neurons = 24;
    int min_degree = 1, max_degree = 8; // KAN only
    int min_grid = 2, max_grid = 15;    // KAN only
    int min_batch = 192, max_batch = 192;
};

// Hard caps for any search space (superset of the per-case maxima used in
// the experiments: 4 layers/24 neurons/degree 8/15 grid points for the
// smallest case, 10 layers/64 neurons for the MLP comparison).
void validate_search_space(const SearchSpace& space, bool kan);

struct Trial {
    int index = 0;
    nn::KanConfig kan;
    nn::MlpConfig mlp;
    bool is_kan = true;
    int batch_size = 0;
    double val_loss = 0.0;
    long params = 0;
};

// Uniform sampling over the space; every trial trains with a reduced epoch
// budget and trials are ranked by validation loss (ties keep trial order).
std::vector<Trial> random_search(const SearchSpace& space, int budget, bool kan, int input_dim,
                                 int output_dim, const TrainData& data, std::uint64_t seed,
                                 int trial_epochs = 25);

} // namespace kaneq::train

#endif
