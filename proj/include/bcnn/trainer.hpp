#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "bcnn/checkpoint.hpp"
#include "bcnn/data.hpp"
#include "bcnn/models.hpp"
#include "bcnn/uncertainty.hpp"

namespace bcnn {

struct TrainConfig {
    std::string arch = "lenet5";
    std::string dataset = "mnist";
    std::string data_dir = ".";
    int epochs = 100;
    int batch_size = 128;
    double learning_rate = 0.001;
    int mc_samples = 10; // stochastic passes per batch
    double weight_decay = 0.0005;
    std::uint64_t seed = 0;
    int eval_T = 25;
    std::int64_t train_n = 0; // 0 = full split
    std::int64_t val_n = 0;
    std::string mode = "bayesian"; // or "frequentist"
    std::string out_dir = "out";
    int save_every = 0; // extra checkpoint every k epochs; 0 = end only
    bool val_mc = false;
    bool plain_gaussian_init = false;
    std::string resume_from;

    std::string to_json() const;
    static TrainConfig from_json(const std::string& json);
};

struct MetricsRow {
    int epoch = 0;
    double train_nll = 0.0;
    double train_kl = 0.0;
    double train_total = 0.0;
    double train_acc = 0.0;
    double val_acc = 0.0;
    double val_aleatoric = 0.0;
    double val_epistemic = 0.0;
    double wall_seconds = 0.0;
};

struct TrainResult {
    std::vector<MetricsRow> metrics;
    std::string checkpoint_path;
    std::string metrics_path;
};

TrainResult train(const TrainConfig& config, std::ostream* log = nullptr);

struct EvalOptions {
    std::string dataset;  // empty: use the checkpoint's dataset
    std::string data_dir; // empty: use the checkpoint's data_dir
    int T = 25;
    NormalizerKind normalizer = NormalizerKind::softplus_n;
    std::int64_t val_n = 0;
    std::string out_dir = ".";
    std::uint64_t eval_seed = 0; // 0: derive from the checkpoint's seed
};

struct EvalResult {
    double accuracy = 0.0;
    double mean_aleatoric = 0.0;
    double mean_epistemic = 0.0;
    std::int64_t images = 0;
    std::string csv_path;
};

EvalResult evaluate(const std::string& checkpoint_path,
                    const EvalOptions& options, std::ostream* log = nullptr);

struct SweepRow {
    double gamma = 0.0;
    double aleatoric = 0.0;
    double epistemic = 0.0;
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::string csv_path;
};

SweepResult noise_sweep(const std::string& checkpoint_path,
                        const std::vector<double>& gammas,
                        const EvalOptions& options,
                        std::ostream* log = nullptr);

// --- shared plumbing, also used by the test suites ---

int num_classes_for(const std::string& dataset);
std::int64_t in_channels_for(const std::string& arch,
                             const std::string& dataset);

struct DataSplits {
    Dataset train;
    Dataset val;
};

// Parses the dataset files under config.data_dir (gzip accepted for the
// IDX files), applies train_n/val_n subsets and adapts the images to the
// architecture input shape.
DataSplits load_splits(const TrainConfig& config);

// Rebuilds the architecture recorded in a checkpoint and restores its
// parameter tensors.
Model restore_model(const Checkpoint& checkpoint,
                    TrainConfig* config_out = nullptr);

// MAP-mode accuracy (argmax of the mean path) over a dataset.
double map_accuracy(Model& model, const Dataset& ds);

std::string metrics_to_csv(const std::vector<MetricsRow>& rows);

} // namespace bcnn
