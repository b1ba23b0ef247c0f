#include "kaneq/train.hpp"

#include "kaneq/csv.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace kaneq::train {

ad::Tensor mse_loss(ad::Graph& g, const ad::Tensor& pred, const ad::Tensor& target) {
    if (pred.shape() != target.shape())
        throw dimension_error("mse_loss: shape mismatch " + shape_to_string(pred.shape()) + " vs " +
                              shape_to_string(target.shape()));
    ad::Tensor diff = g.sub(pred, target);
    return g.mean(g.mul(diff, diff));
}

double mse_value(const std::vector<double>& pred, const std::vector<double>& target) {
    if (pred.size() != target.size() || pred.empty())
        throw dimension_error("mse_value: size mismatch or empty");
    double acc = 0.0;
    for (std::size_t i = 0; i < pred.size(); ++i) {
        const double d = pred[i] - target[i];
        acc += d * d;
    }
    return acc / static_cast<double>(pred.size());
}

Adam::Adam(const std::vector<ad::Tensor>& params, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (const auto& p : params) {
        m_.emplace_back(p.numel(), 0.0);
        v_.emplace_back(p.numel(), 0.0);
    }
}

void Adam::step(std::vector<ad::Tensor>& params, double lr) {
    if (params.size() != m_.size()) throw contract_error("adam: parameter list changed size");
    for (std::size_t k = 0; k < params.size(); ++k) {
        if (params[k].grad().size() != params[k].numel())
            throw contract_error("adam: missing grad buffer on parameter " + std::to_string(k));
        if (!all_finite(params[k].grad()))
            throw numeric_error("adam: non-finite gradient on parameter " + std::to_string(k) +
                                ", step aborted");
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
        auto& val = params[k].values();
        const auto& g = params[k].grad();
        auto& m = m_[k];
        auto& v = v_[k];
        for (std::size_t i = 0; i < val.size(); ++i) {
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g[i];
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            val[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
        }
    }
}

PlateauScheduler::PlateauScheduler(double initial_lr, SchedulerConfig cfg)
    : cfg_(cfg), lr_(initial_lr), best_(std::numeric_limits<double>::infinity()) {
    if (!(cfg_.factor > 0.0 && cfg_.factor < 1.0))
        throw contract_error("scheduler factor must be in (0,1)");
    if (cfg_.patience < 1) throw contract_error("scheduler patience must be >= 1");
}

double PlateauScheduler::step(double val_loss) {
    if (!std::isfinite(val_loss)) throw numeric_error("scheduler: non-finite validation loss");
    if (val_loss < best_) {
        best_ = val_loss;
        stale_ = 0;
    } else if (++stale_ >= cfg_.patience) {
        lr_ = std::max(lr_ * cfg_.factor, cfg_.min_lr);
        stale_ = 0;
    }
    return lr_;
}

namespace {

ad::Tensor rows_tensor(const Matrix& m, const std::vector<int>& idx, int begin, int end) {
    const int n = end - begin;
    ad::Tensor t = ad::Tensor::zeros({n, m.cols});
    for (int r = 0; r < n; ++r) {
        const double* src = m.row(idx[static_cast<std::size_t>(begin + r)]);
        std::copy(src, src + m.cols, t.values().begin() + static_cast<std::size_t>(r) * m.cols);
    }
    return t;
}

} // namespace

TrainResult train(nn::Network& net, const TrainData& data, const TrainConfig& cfg,
                  const std::optional<std::string>& run_dir) {
    if (cfg.batch_size < 1) throw contract_error("batch_size must be >= 1");
    if (cfg.epochs < 0) throw contract_error("epochs must be >= 0");
    if (data.train_x.rows != data.train_y.rows || data.val_x.rows != data.val_y.rows)
        throw dimension_error("train: input/output row counts differ");

    TrainResult result;
    result.best = net.clone();
    if (cfg.epochs == 0) return result;

    auto params = net.params();
    Adam opt(params);
    PlateauScheduler sched(cfg.initial_lr, cfg.scheduler);
    std::mt19937_64 rng(cfg.seed);

    std::vector<int> order(static_cast<std::size_t>(data.train_x.rows));
    std::iota(order.begin(), order.end(), 0);

    std::ofstream epoch_csv;
    if (run_dir) {
        epoch_csv.open(*run_dir + "/epochs.csv", std::ios::binary);
        if (!epoch_csv) throw io_error("cannot write " + *run_dir + "/epochs.csv");
        epoch_csv << "epoch,train_loss,val_loss,lr,seconds\n";
    }

    double best_val = std::numeric_limits<double>::infinity();
    double lr = cfg.initial_lr;
    const auto t0 = std::chrono::steady_clock::now();

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto e0 = std::chrono::steady_clock::now();
        if (cfg.shuffle) std::shuffle(order.begin(), order.end(), rng);

        double loss_sum = 0.0;
        long loss_count = 0;
        ad::Graph graph;
        int batch_index = 0;
        for (int begin = 0; begin < data.train_x.rows; begin += cfg.batch_size, ++batch_index) {
            const int end = std::min(begin + cfg.batch_size, data.train_x.rows);
            ad::Tensor x = rows_tensor(data.train_x, order, begin, end);
            ad::Tensor y = rows_tensor(data.train_y, order, begin, end);

            graph.clear();
            ad::Tensor pred = net.forward(graph, x);
            ad::Tensor loss = mse_loss(graph, pred, y);
            const double lv = loss.item();
            if (!std::isfinite(lv))
                throw numeric_error("train: NaN/Inf loss at epoch " + std::to_string(epoch) +
                                    ", batch " + std::to_string(batch_index));
            ad::zero_grad(params);
            graph.backward(loss);
            opt.step(params, lr);
            loss_sum += lv * (end - begin);
            loss_count += end - begin;
        }

        // Full validation split once per epoch, tape-free.
        std::vector<double> vp = net.infer(data.val_x.v, data.val_x.rows);
        const double val_loss = mse_value(vp, data.val_y.v);
        lr = sched.step(val_loss);

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(loss_count);
        rec.val_loss = val_loss;
        rec.lr = lr;
        rec.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - e0).count();
        result.report.epochs.push_back(rec);

        if (epoch_csv.is_open())
            epoch_csv << epoch << ',' << csv::format_double(rec.train_loss) << ','
                      << csv::format_double(rec.val_loss) << ',' << csv::format_double(rec.lr) << ','
                      << csv::format_double(rec.seconds) << '\n'
                      << std::flush;

        if (val_loss < best_val) {
            best_val = val_loss;
            result.best = net.clone();
            result.report.best_epoch = epoch;
        }
    }
    result.report.best_val_loss = best_val;
    result.report.total_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

void validate_search_space(const SearchSpace& s, bool kan) {
    auto bad = [](const std::string& msg) { throw contract_error("search space: " + msg); };
    if (s.min_layers < 1 || s.max_layers < s.min_layers) bad("invalid layer bounds");
    if (s.min_neurons < 1 || s.max_neurons < s.min_neurons) bad("invalid neuron bounds");
    if (s.min_batch < 1 || s.max_batch < s.min_batch) bad("invalid batch bounds");
    if (s.max_layers > 10) bad("max layers exceeds supported maximum 10");
    if (s.max_neurons > 64) bad("max neurons exceeds supported maximum 64");
    if (kan) {
        if (s.min_degree < 1 || s.max_degree < s.min_degree) bad("invalid degree bounds");
        if (s.min_grid < 2 || s.max_grid < s.min_grid) bad("invalid grid bounds");
        if (s.max_degree > 10) bad("max degree exceeds supported maximum 10");
        if (s.max_grid > 20) bad("max grid exceeds supported maximum 20");
    }
}

std::vector<Trial> random_search(const SearchSpace& space, int budget, bool kan, int input_dim,
                                 int output_dim, const TrainData& data, std::uint64_t seed,
                                 int trial_epochs) {
    if (budget < 1) throw contract_error("search budget must be >= 1");
    validate_search_space(space, kan);
    std::mt19937_64 rng(seed);
    auto uniform_int = [&](int lo, int hi) {
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    };

    std::vector<Trial> trials;
    for (int i = 0; i < budget; ++i) {
        Trial t;
        t.index = i;
        t.is_kan = kan;
        const int layers = uniform_int(space.min_layers, space.max_layers);
        const int neurons = uniform_int(space.min_neurons, space.max_neurons);
        t.batch_size = uniform_int(space.min_batch, space.max_batch);
        nn::Network net;
        if (kan) {
            t.kan.input_dim = input_dim;
            t.kan.output_dim = output_dim;
            t.kan.hidden.assign(static_cast<std::size_t>(layers), neurons);
            t.kan.degree = uniform_int(space.min_degree, space.max_degree);
            t.kan.grid_size = uniform_int(space.min_grid, space.max_grid);
            t.params = nn::param_count(t.kan);
            net = nn::Network::make_kan(t.kan, seed + static_cast<std::uint64_t>(i));
        } else {
            t.mlp.input_dim = input_dim;
            t.mlp.output_dim = output_dim;
            t.mlp.hidden.assign(static_cast<std::size_t>(layers), neurons);
            t.params = nn::param_count(t.mlp);
            net = nn::Network::make_mlp(t.mlp, seed + static_cast<std::uint64_t>(i));
        }

        TrainConfig cfg;
        cfg.epochs = trial_epochs;
        cfg.batch_size = t.batch_size;
        cfg.seed = seed + static_cast<std::uint64_t>(i);
        TrainResult r = train(net, data, cfg);
        t.val_loss = r.report.best_val_loss;
        trials.push_back(std::move(t));
    }
    std::stable_sort(trials.begin(), trials.end(),
                     [](const Trial& a, const Trial& b) { return a.val_loss < b.val_loss; });
    return trials;
}

} // namespace kaneq::train
