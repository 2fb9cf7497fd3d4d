#include <CLI11.hpp>

#include <cstdint>
#include <iostream>
#include <string>
#include <vector>

#include "bcnn/errors.hpp"
#include "bcnn/synth.hpp"
#include "bcnn/trainer.hpp"

namespace {

std::vector<double> parse_gammas(const std::string& csv) {
    std::vector<double> out;
    std::size_t pos = 0;
    while (pos < csv.size()) {
        std::size_t next = csv.find(',', pos);
        if (next == std::string::npos) next = csv.size();
        out.push_back(std::stod(csv.substr(pos, next - pos)));
        pos = next + 1;
    }
    return out;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Bayesian CNN training, evaluation and uncertainty tool"};
    app.require_subcommand(1);

    // --- train ---
    bcnn::TrainConfig cfg;
    auto* train = app.add_subcommand("train", "train a model");
    train->add_option("--arch", cfg.arch, "lenet5|alexnet|vgg")
        ->check(CLI::IsMember({"lenet5", "alexnet", "vgg"}));
    train->add_option("--dataset", cfg.dataset, "mnist|cifar10|cifar100")
        ->check(CLI::IsMember({"mnist", "cifar10", "cifar100"}));
    train->add_option("--data-dir", cfg.data_dir, "dataset directory");
    train->add_option("--epochs", cfg.epochs);
    train->add_option("--batch-size", cfg.batch_size);
    train->add_option("--lr", cfg.learning_rate);
    train->add_option("--mc-samples", cfg.mc_samples,
                      "stochastic passes per batch");
    train->add_option("--weight-decay", cfg.weight_decay);
    train->add_option("--mode", cfg.mode, "bayesian|frequentist")
        ->check(CLI::IsMember({"bayesian", "frequentist"}));
    train->add_option("--train-n", cfg.train_n, "training subset size, 0 = full");
    train->add_option("--val-n", cfg.val_n, "validation subset size, 0 = full");
    train->add_option("--seed", cfg.seed);
    train->add_option("--out", cfg.out_dir, "output directory");
    train->add_option("--eval-T", cfg.eval_T,
                      "predictive samples for per-epoch uncertainty");
    train->add_option("--save-every", cfg.save_every,
                      "checkpoint every k epochs (0 = final only)");
    train->add_flag("--val-mc", cfg.val_mc,
                    "validation accuracy from MC predictions instead of MAP");
    train->add_flag("--plain-gaussian-init", cfg.plain_gaussian_init,
                    "initialize mu from N(0,1) instead of N(0,1/fan_in)");
    train->add_option("--resume", cfg.resume_from, "checkpoint to resume from");

    // --- eval ---
    std::string eval_checkpoint;
    bcnn::EvalOptions eval_opts;
    std::string eval_normalizer = "softplus_n";
    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint");
    eval->add_option("--checkpoint", eval_checkpoint)->required();
    eval->add_option("--dataset", eval_opts.dataset,
                     "override the checkpoint dataset");
    eval->add_option("--data-dir", eval_opts.data_dir);
    eval->add_option("--T", eval_opts.T, "predictive samples per image");
    eval->add_option("--normalizer", eval_normalizer, "softplus_n|softmax")
        ->check(CLI::IsMember({"softplus_n", "softmax"}));
    eval->add_option("--val-n", eval_opts.val_n);
    eval->add_option("--out", eval_opts.out_dir);
    eval->add_option("--eval-seed", eval_opts.eval_seed);

    // --- sweep ---
    std::string sweep_checkpoint;
    std::string gammas_csv = "0,0.1,0.2,0.3";
    bcnn::EvalOptions sweep_opts;
    std::string sweep_normalizer = "softplus_n";
    auto* sweep = app.add_subcommand("sweep", "noise sweep over gamma levels");
    sweep->add_option("--checkpoint", sweep_checkpoint)->required();
    sweep->add_option("--gammas", gammas_csv, "comma-separated noise levels");
    sweep->add_option("--T", sweep_opts.T);
    sweep->add_option("--normalizer", sweep_normalizer, "softplus_n|softmax")
        ->check(CLI::IsMember({"softplus_n", "softmax"}));
    sweep->add_option("--dataset", sweep_opts.dataset);
    sweep->add_option("--data-dir", sweep_opts.data_dir);
    sweep->add_option("--val-n", sweep_opts.val_n);
    sweep->add_option("--out", sweep_opts.out_dir);
    sweep->add_option("--eval-seed", sweep_opts.eval_seed);

    // --- gen-data ---
    std::string gen_kind = "mnist";
    std::string gen_dir = ".";
    std::int64_t gen_train_n = 10000;
    std::int64_t gen_test_n = 2000;
    std::uint64_t gen_seed = 7;
    auto* gen = app.add_subcommand(
        "gen-data", "write synthetic datasets in MNIST/CIFAR binary formats");
    gen->add_option("--format", gen_kind, "mnist|cifar10")
        ->check(CLI::IsMember({"mnist", "cifar10"}));
    gen->add_option("--dir", gen_dir)->required();
    gen->add_option("--train-n", gen_train_n);
    gen->add_option("--test-n", gen_test_n);
    gen->add_option("--seed", gen_seed);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*train) {
            const auto result = bcnn::train(cfg, &std::cout);
            std::cout << "wrote " << result.metrics_path << " and "
                      << result.checkpoint_path << "\n";
        } else if (*eval) {
            eval_opts.normalizer = bcnn::normalizer_from_string(eval_normalizer);
            const auto result =
                bcnn::evaluate(eval_checkpoint, eval_opts, &std::cout);
            std::cout << "wrote " << result.csv_path << "\n";
        } else if (*sweep) {
            sweep_opts.normalizer =
                bcnn::normalizer_from_string(sweep_normalizer);
            const auto result = bcnn::noise_sweep(
                sweep_checkpoint, parse_gammas(gammas_csv), sweep_opts,
                &std::cout);
            std::cout << "wrote " << result.csv_path << "\n";
        } else if (*gen) {
            if (gen_kind == "mnist") {
                bcnn::synth::write_digit_set(gen_dir, gen_train_n, gen_test_n,
                                             gen_seed);
            } else {
                bcnn::synth::write_shape_set(gen_dir, gen_train_n, gen_test_n,
                                             gen_seed);
            }
            std::cout << "wrote synthetic " << gen_kind << " files to "
                      << gen_dir << "\n";
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
