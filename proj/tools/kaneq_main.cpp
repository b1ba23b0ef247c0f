// kaneq: train and evaluate KAN/MLP surrogates for chemical-equilibrium
// prediction, generate datasets with the internal Gibbs-minimization
// oracle, and benchmark surrogate inference against it.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "kaneq/csv.hpp"
#include "kaneq/dataset.hpp"
#include "kaneq/metrics.hpp"
#include "kaneq/nn.hpp"
#include "kaneq/sobol.hpp"
#include "kaneq/thermo.hpp"
#include "kaneq/train.hpp"

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

using json = nlohmann::json;
namespace fs = std::filesystem;
using namespace kaneq;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitUsage = 2;

thermo::ThermoData load_thermo_data(const std::string& flag_path) {
    std::string path = flag_path;
    if (path.empty()) {
        if (const char* env = std::getenv("KANEQ_THERMO_DATA")) path = env;
    }
    return path.empty() ? thermo::ThermoData::builtin_defaults() : thermo::ThermoData::load_csv(path);
}

// flags > config file > defaults
void merge_config_file(CLI::App* cmd, const std::string& config_path, json& out) {
    if (config_path.empty()) return;
    std::ifstream in(config_path);
    if (!in) throw contract_error("cannot open config file: " + config_path);
    json cfg;
    try {
        in >> cfg;
    } catch (const json::parse_error& e) {
        throw contract_error("config parse error in " + config_path + ": " + e.what());
    }
    for (auto& [key, value] : cfg.items()) {
        const std::string flag = "--" + key;
        const CLI::Option* opt = cmd->get_option_no_throw(flag);
        if (opt == nullptr) throw contract_error("unknown config key: " + key);
        if (opt->count() == 0) out[key] = value;
    }
}

struct TrainCli {
    std::string arch = "kan";
    std::string dataset;
    std::string case_id;
    std::string config_path;
    std::string out_dir;
    std::string column_map_path;
    std::vector<int> hidden;
    int degree = 7;
    int grid = 10;
    int epochs = 200;
    int batch = 192;
    double lr = 0.01;
    double factor = 0.1;
    int patience = 10;
    double min_lr = 1e-6;
    std::uint64_t seed = 0;
    double threshold = 0.10;
};

data::Dataset load_any_dataset(const std::string& path, const std::string& case_id,
                               const std::string& column_map_path) {
    const data::CaseStudy cs = data::case_from_name(case_id);
    if (cs == data::CaseStudy::Cement) {
        std::map<std::string, std::string> cmap;
        if (!column_map_path.empty()) {
            std::ifstream in(column_map_path);
            if (!in) throw contract_error("cannot open column map: " + column_map_path);
            json j;
            in >> j;
            for (auto& [k, v] : j.items()) cmap[k] = v.get<std::string>();
        }
        return data::ingest_cement_csv(path, cmap);
    }
    return data::load_dataset_csv(path, cs);
}

data::SplitPlan plan_for(const data::Dataset& ds, std::uint64_t seed) {
    if (ds.spec.case_study == data::CaseStudy::Cement) return data::SplitPlan::cement(seed);
    return data::SplitPlan::radium(ds.inputs.rows, seed);
}

train::TrainData preprocessed_train_data(const data::Split& sp, const data::Preprocess& pp) {
    train::TrainData td;
    td.train_x = sp.train.inputs;
    td.train_y = sp.train.outputs;
    td.val_x = sp.val.inputs;
    td.val_y = sp.val.outputs;
    pp.apply_inputs(td.train_x.v);
    pp.apply_outputs(td.train_y.v);
    pp.apply_inputs(td.val_x.v);
    pp.apply_outputs(td.val_y.v);
    return td;
}

metrics::ErrorReport evaluate_on_physical(const nn::Network& net, const data::Preprocess& pp,
                                          const Matrix& inputs, const Matrix& outputs,
                                          double threshold) {
    std::vector<double> x = inputs.v;
    pp.apply(pp.input_cols, x);
    std::vector<double> pred = net.infer(x, inputs.rows);
    pp.invert(pp.output_cols, pred);
    Matrix yhat(inputs.rows, outputs.cols);
    yhat.v = std::move(pred);
    return metrics::evaluate(outputs, yhat, pp.output_names, threshold);
}

int cmd_generate(const std::string& case_id, int m, std::uint64_t seed,
                 const std::string& thermo_path, const std::string& out_dir, int jobs) {
    const data::CaseStudy cs = data::case_from_name(case_id);
    if (cs == data::CaseStudy::Cement)
        throw contract_error("cement data is published, not generated; use --case "
                             "mech_mix|binary_ss|ternary_ss");
    fs::create_directories(out_dir);
    const thermo::ThermoData td = load_thermo_data(thermo_path);
    data::GenerationManifest man;
    const data::Dataset ds = data::generate_dataset(cs, m, seed, td, out_dir, jobs, &man);
    std::cout << "wrote " << out_dir << "/dataset.csv: " << ds.inputs.rows << " rows ("
              << man.excluded_rows << " excluded), " << ds.inputs.cols << " inputs, "
              << ds.outputs.cols << " outputs\n";
    return kExitOk;
}

int cmd_train(const TrainCli& a) {
    if (a.arch != "kan" && a.arch != "mlp")
        throw contract_error("unknown --arch '" + a.arch + "' (want kan or mlp)");
    fs::create_directories(a.out_dir);
    const data::Dataset ds = load_any_dataset(a.dataset, a.case_id, a.column_map_path);
    const data::SplitPlan plan = plan_for(ds, a.seed);
    const data::Split sp = data::split(ds, plan);
    const data::Preprocess pp = data::fit_preprocessor(sp.train);
    const train::TrainData td = preprocessed_train_data(sp, pp);

    const int in_dim = ds.inputs.cols;
    const int out_dim = ds.outputs.cols;
    nn::Network net;
    json arch_json;
    if (a.arch == "kan") {
        nn::KanConfig cfg;
        cfg.input_dim = in_dim;
        cfg.output_dim = out_dim;
        cfg.hidden = a.hidden.empty() ? std::vector<int>{24, 24, 24} : a.hidden;
        cfg.degree = a.degree;
        cfg.grid_size = a.grid;
        net = nn::Network::make_kan(cfg, a.seed);
        arch_json = {{"kind", "kan"}, {"hidden", cfg.hidden}, {"degree", cfg.degree},
                     {"grid", cfg.grid_size}};
    } else if (a.arch == "mlp") {
        nn::MlpConfig cfg;
        cfg.input_dim = in_dim;
        cfg.output_dim = out_dim;
        cfg.hidden = a.hidden.empty() ? std::vector<int>{192, 192, 192, 192, 192} : a.hidden;
        cfg.activation = nn::Activation::Mish;
        net = nn::Network::make_mlp(cfg, a.seed);
        arch_json = {{"kind", "mlp"}, {"hidden", cfg.hidden}, {"activation", "mish"}};
    } else {
        throw contract_error("unknown --arch '" + a.arch + "' (want kan or mlp)");
    }
    std::cout << "training " << a.arch << " with " << net.param_count()
              << " trainable parameters on " << sp.train.inputs.rows << " rows\n";

    train::TrainConfig tc;
    tc.epochs = a.epochs;
    tc.batch_size = a.batch;
    tc.initial_lr = a.lr;
    tc.scheduler.factor = a.factor;
    tc.scheduler.patience = a.patience;
    tc.scheduler.min_lr = a.min_lr;
    tc.seed = a.seed;

    // resolved config snapshot before execution
    json snapshot{{"subcommand", "train"},
                  {"arch", arch_json},
                  {"dataset", a.dataset},
                  {"dataset_hash", file_fnv1a_hex(a.dataset)},
                  {"case", a.case_id},
                  {"epochs", tc.epochs},
                  {"batch_size", tc.batch_size},
                  {"initial_lr", tc.initial_lr},
                  {"scheduler", {{"patience", tc.scheduler.patience},
                                 {"factor", tc.scheduler.factor},
                                 {"min_lr", tc.scheduler.min_lr}}},
                  {"seed", a.seed},
                  {"threshold", a.threshold},
                  {"split", {{"train", plan.train}, {"val", plan.val}, {"test", plan.test}}}};
    {
        std::ofstream f(a.out_dir + "/config.json");
        f << snapshot.dump(1, '\t') << "\n";
    }

    const train::TrainResult result = train::train(net, td, tc, a.out_dir);

    nn::Checkpoint ckpt;
    ckpt.net = result.best;
    ckpt.preprocess = pp;
    ckpt.meta.seed = a.seed;
    ckpt.meta.epochs = tc.epochs;
    ckpt.meta.dataset_hash = file_fnv1a_hex(a.dataset);
    nn::save_checkpoint(ckpt, a.out_dir + "/checkpoint.json");

    const metrics::ErrorReport rep =
        evaluate_on_physical(result.best, pp, sp.test.inputs, sp.test.outputs, a.threshold);
    metrics::write_report_csv(rep, a.out_dir + "/report_test.csv");
    metrics::write_report_json(rep, a.out_dir + "/report_test.json");

    std::cout << "best val loss " << result.report.best_val_loss << " at epoch "
              << result.report.best_epoch << ", " << result.report.total_seconds << " s\n";
    std::cout << "test: " << rep.total_exceed << "/" << rep.total_elements
              << " predictions above " << a.threshold * 100 << "% relative error\n";
    return kExitOk;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset, const std::string& case_id,
             const std::string& split_name, double threshold, const std::string& out_dir,
             const std::string& column_map_path) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(ckpt_path);
    const data::Dataset ds = load_any_dataset(dataset, case_id, column_map_path);

    Matrix in = ds.inputs, out = ds.outputs;
    if (split_name != "all") {
        const data::Split sp = data::split(ds, plan_for(ds, ckpt.meta.seed));
        const data::Dataset* part = &sp.test;
        if (split_name == "train") part = &sp.train;
        else if (split_name == "val") part = &sp.val;
        else if (split_name != "test")
            throw contract_error("unknown --split '" + split_name + "'");
        in = part->inputs;
        out = part->outputs;
    }

    const metrics::ErrorReport rep =
        evaluate_on_physical(ckpt.net, ckpt.preprocess, in, out, threshold);
    if (!out_dir.empty()) {
        fs::create_directories(out_dir);
        metrics::write_report_csv(rep, out_dir + "/report_" + split_name + ".csv");
        metrics::write_report_json(rep, out_dir + "/report_" + split_name + ".json");
    }
    std::cout << "output,rmse,rrmse,median_rel_err,exceed\n";
    for (const auto& s : rep.outputs)
        std::cout << s.name << ',' << s.rmse << ',' << s.rrmse << ',' << s.dist.median << ','
                  << s.dist.exceed_count << '\n';
    std::cout << "total above " << threshold * 100 << "%: " << rep.total_exceed << "/"
              << rep.total_elements << "\n";
    return kExitOk;
}

int cmd_search(const std::string& space_path, const std::string& dataset,
               const std::string& case_id, int budget, const std::string& arch,
               std::uint64_t seed, int trial_epochs, const std::string& out_dir,
               const std::string& column_map_path) {
    std::ifstream in(space_path);
    if (!in) throw contract_error("cannot open search space: " + space_path);
    json js;
    try {
        in >> js;
    } catch (const json::parse_error& e) {
        throw contract_error(std::string("search space parse error: ") + e.what());
    }
    train::SearchSpace space;
    space.min_layers = js.value("min_layers", space.min_layers);
    space.max_layers = js.value("max_layers", space.max_layers);
    space.min_neurons = js.value("min_neurons", space.min_neurons);
    space.max_neurons = js.value("max_neurons", space.max_neurons);
    space.min_degree = js.value("min_degree", space.min_degree);
    space.max_degree = js.value("max_degree", space.max_degree);
    space.min_grid = js.value("min_grid", space.min_grid);
    space.max_grid = js.value("max_grid", space.max_grid);
    space.min_batch = js.value("min_batch", space.min_batch);
    space.max_batch = js.value("max_batch", space.max_batch);
    const bool kan = arch == "kan";
    train::validate_search_space(space, kan);

    const data::Dataset ds = load_any_dataset(dataset, case_id, column_map_path);
    const data::Split sp = data::split(ds, plan_for(ds, seed));
    const data::Preprocess pp = data::fit_preprocessor(sp.train);
    const train::TrainData td = preprocessed_train_data(sp, pp);

    const auto trials =
        train::random_search(space, budget, kan, ds.inputs.cols, ds.outputs.cols, td, seed,
                             trial_epochs);

    fs::create_directories(out_dir);
    {
        std::ofstream f(out_dir + "/trials.csv");
        f << "rank,trial,val_loss,params,layers,neurons,degree,grid,batch\n";
        for (std::size_t rank = 0; rank < trials.size(); ++rank) {
            const auto& t = trials[rank];
            const auto& hidden = t.is_kan ? t.kan.hidden : t.mlp.hidden;
            f << rank << ',' << t.index << ',' << csv::format_double(t.val_loss) << ',' << t.params
              << ',' << hidden.size() << ',' << (hidden.empty() ? 0 : hidden[0]) << ','
              << (t.is_kan ? t.kan.degree : 0) << ',' << (t.is_kan ? t.kan.grid_size : 0) << ','
              << t.batch_size << '\n';
        }
    }
    {
        const auto& best = trials.front();
        json bj{{"arch", arch},
                {"hidden", best.is_kan ? best.kan.hidden : best.mlp.hidden},
                {"batch_size", best.batch_size},
                {"val_loss", best.val_loss},
                {"params", best.params}};
        if (best.is_kan) {
            bj["degree"] = best.kan.degree;
            bj["grid"] = best.kan.grid_size;
        }
        std::ofstream f(out_dir + "/best_config.json");
        f << bj.dump(1, '\t') << "\n";
    }
    std::cout << "ran " << trials.size() << " trials; best val loss " << trials.front().val_loss
              << " (trial " << trials.front().index << ")\n";
    return kExitOk;
}

int cmd_bench(const std::string& ckpt_path, const std::string& case_id, long n,
              std::uint64_t seed, const std::string& thermo_path, int jobs) {
    const nn::Checkpoint ckpt = nn::load_checkpoint(ckpt_path);
    const data::CaseStudy cs = data::case_from_name(case_id);
    if (cs == data::CaseStudy::Cement)
        throw contract_error("bench needs an oracle-backed case (mech_mix|binary_ss|ternary_ss)");
    const data::DatasetSpec spec = data::DatasetSpec::for_case(cs);
    if (static_cast<int>(spec.input_names.size()) != ckpt.net.input_dim() ||
        static_cast<int>(spec.output_names.size()) != ckpt.net.output_dim())
        throw contract_error("checkpoint dimensions do not match case " + case_id);
    const thermo::ThermoData td = load_thermo_data(thermo_path);

    // identical input rows for both sides, by construction
    data::SobolSampler sampler(static_cast<int>(spec.input_names.size()), seed);
    std::vector<thermo::Recipe> recipes;
    Matrix inputs(static_cast<int>(n), static_cast<int>(spec.input_names.size()));
    for (long i = 0; i < n; ++i) {
        const auto row = data::scale_to_ranges(sampler.next(), spec.input_ranges);
        std::copy(row.begin(), row.end(), inputs.row(static_cast<int>(i)));
        recipes.push_back(spec.recipe_from_inputs(row));
    }
    for (long i = 0; i < n; ++i)
        if (spec.recipe_from_inputs(std::vector<double>(
                inputs.row(static_cast<int>(i)),
                inputs.row(static_cast<int>(i)) + inputs.cols)).baso4_umol !=
            recipes[static_cast<std::size_t>(i)].baso4_umol)
            throw contract_error("bench input rows diverged");

    // Both sides are timed as the best of three runs (after one surrogate
    // warm-up) so scheduler noise does not leak into the comparison.
    double oracle_seconds = std::numeric_limits<double>::infinity();
    std::vector<thermo::EquilibriumState> states;
    for (int rep = 0; rep < 3; ++rep) {
        double secs = 0.0;
        states = thermo::batch_equilibrate(recipes, spec.solid_model(), td, jobs, &secs);
        oracle_seconds = std::min(oracle_seconds, secs);
    }

    auto run_surrogate = [&]() {
        std::vector<double> x = inputs.v;
        ckpt.preprocess.apply_inputs(x);
        std::vector<double> pred = ckpt.net.infer(x, inputs.rows);
        ckpt.preprocess.invert_outputs(pred);
        return pred;
    };
    (void)run_surrogate(); // warm-up excluded from timing
    double surrogate_seconds = std::numeric_limits<double>::infinity();
    std::vector<double> pred;
    for (int rep = 0; rep < 3; ++rep) {
        const auto t0 = std::chrono::steady_clock::now();
        pred = run_surrogate();
        surrogate_seconds = std::min(
            surrogate_seconds,
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
    }
    if (pred.size() != states.size() * spec.output_names.size())
        throw contract_error("bench surrogate output size mismatch");

    const double improvement = 100.0 * (oracle_seconds - surrogate_seconds) / oracle_seconds;
    const double speedup = oracle_seconds / surrogate_seconds;
    std::printf("%-12s %18s %18s %16s\n", "Model", "Run time GEM (s)", "Run time KAN (s)",
                "Improvement (%)");
    std::printf("%-12s %18.3f %18.3f %16.2f\n", case_id.c_str(), oracle_seconds,
                surrogate_seconds, improvement);
    std::printf("speedup: %.1fx over %ld equilibria\n", speedup, n);
    return kExitOk;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"KAN surrogate toolkit for chemical-equilibrium prediction"};
    app.require_subcommand(1);

    // generate
    auto* gen = app.add_subcommand("generate", "sample recipes and label them with the oracle");
    std::string gen_case, gen_thermo, gen_out;
    int gen_m = 15, gen_jobs = 1;
    std::uint64_t gen_seed = 0;
    gen->add_option("--case", gen_case, "mech_mix|binary_ss|ternary_ss")->required();
    gen->add_option("--m", gen_m, "dataset size exponent (2^m rows)")->required();
    gen->add_option("--seed", gen_seed, "scramble seed (0 = unscrambled)");
    gen->add_option("--thermo-data", gen_thermo, "standard-state CSV (default: builtin)");
    gen->add_option("--out", gen_out, "output directory")->required();
    gen->add_option("--jobs", gen_jobs, "worker threads");

    // train
    auto* tr = app.add_subcommand("train", "train a surrogate and write a run directory");
    TrainCli ta;
    tr->add_option("--arch", ta.arch, "kan|mlp")->required();
    tr->add_option("--dataset", ta.dataset, "dataset CSV")->required();
    tr->add_option("--case", ta.case_id, "cement|mech_mix|binary_ss|ternary_ss")->required();
    tr->add_option("--config", ta.config_path, "JSON config (flags override)");
    tr->add_option("--out", ta.out_dir, "run directory")->required();
    tr->add_option("--column-map", ta.column_map_path, "JSON header renames for cement CSV");
    tr->add_option("--hidden", ta.hidden, "hidden widths");
    tr->add_option("--degree", ta.degree, "KAN spline degree");
    tr->add_option("--grid", ta.grid, "KAN grid intervals");
    tr->add_option("--epochs", ta.epochs, "training epochs");
    tr->add_option("--batch", ta.batch, "batch size");
    tr->add_option("--lr", ta.lr, "initial learning rate");
    tr->add_option("--factor", ta.factor, "plateau reduction factor");
    tr->add_option("--patience", ta.patience, "plateau patience (epochs)");
    tr->add_option("--seed", ta.seed, "global seed");
    tr->add_option("--threshold", ta.threshold, "high-error threshold for the test report");

    // eval
    auto* ev = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    std::string ev_ckpt, ev_dataset, ev_case, ev_split = "test", ev_out, ev_cmap;
    double ev_threshold = 0.10;
    ev->add_option("--checkpoint", ev_ckpt)->required();
    ev->add_option("--dataset", ev_dataset)->required();
    ev->add_option("--case", ev_case)->required();
    ev->add_option("--split", ev_split, "train|val|test|all");
    ev->add_option("--threshold", ev_threshold, "high-error threshold");
    ev->add_option("--out", ev_out, "report directory");
    ev->add_option("--column-map", ev_cmap, "JSON header renames for cement CSV");

    // search
    auto* se = app.add_subcommand("search", "seeded random hyperparameter search");
    std::string se_space, se_dataset, se_case, se_arch = "kan", se_out, se_cmap;
    int se_budget = 1, se_epochs = 25;
    std::uint64_t se_seed = 0;
    se->add_option("--space", se_space, "JSON search-space bounds")->required();
    se->add_option("--dataset", se_dataset)->required();
    se->add_option("--case", se_case)->required();
    se->add_option("--budget", se_budget, "number of trials")->required();
    se->add_option("--arch", se_arch, "kan|mlp");
    se->add_option("--seed", se_seed);
    se->add_option("--trial-epochs", se_epochs, "epochs per trial");
    se->add_option("--out", se_out, "output directory")->required();
    se->add_option("--column-map", se_cmap, "JSON header renames for cement CSV");

    // bench
    auto* be = app.add_subcommand("bench", "oracle vs surrogate wall-clock comparison");
    std::string be_ckpt, be_case, be_thermo;
    long be_n = 5000;
    int be_jobs = 1;
    std::uint64_t be_seed = 0;
    be->add_option("--checkpoint", be_ckpt)->required();
    be->add_option("--case", be_case)->required();
    be->add_option("--n", be_n, "number of equilibria");
    be->add_option("--seed", be_seed);
    be->add_option("--thermo-data", be_thermo);
    be->add_option("--jobs", be_jobs, "oracle worker threads");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        if (gen->parsed()) return cmd_generate(gen_case, gen_m, gen_seed, gen_thermo, gen_out, gen_jobs);
        if (tr->parsed()) {
            json merged;
            merge_config_file(tr, ta.config_path, merged);
            if (merged.contains("hidden")) ta.hidden = merged["hidden"].get<std::vector<int>>();
            if (merged.contains("degree")) ta.degree = merged["degree"];
            if (merged.contains("grid")) ta.grid = merged["grid"];
            if (merged.contains("epochs")) ta.epochs = merged["epochs"];
            if (merged.contains("batch")) ta.batch = merged["batch"];
            if (merged.contains("lr")) ta.lr = merged["lr"];
            if (merged.contains("factor")) ta.factor = merged["factor"];
            if (merged.contains("patience")) ta.patience = merged["patience"];
            if (merged.contains("seed")) ta.seed = merged["seed"];
            if (merged.contains("threshold")) ta.threshold = merged["threshold"];
            return cmd_train(ta);
        }
        if (ev->parsed())
            return cmd_eval(ev_ckpt, ev_dataset, ev_case, ev_split, ev_threshold, ev_out, ev_cmap);
        if (se->parsed())
            return cmd_search(se_space, se_dataset, se_case, se_budget, se_arch, se_seed, se_epochs,
                              se_out, se_cmap);
        if (be->parsed()) return cmd_bench(be_ckpt, be_case, be_n, be_seed, be_thermo, be_jobs);
    } catch (const contract_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
    return kExitUsage;
}
