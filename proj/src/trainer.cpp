#include "bcnn/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <unordered_map>

#include <nlohmann/json.hpp>

#include "bcnn/errors.hpp"
#include "bcnn/objective.hpp"
#include "bcnn/optimizer.hpp"

namespace fs = std::filesystem;

namespace bcnn {

namespace {

// Stream ids carving independent noise sequences out of the run seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kEvalStream = 2;
constexpr std::uint64_t kSweepStream = 3;
constexpr std::uint64_t kTrainStreamBase = 1000; // + epoch

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

void write_file_atomic(const std::string& path, const std::string& contents) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
        if (!f) throw Error("cannot write " + tmp);
        f.write(contents.data(),
                static_cast<std::streamsize>(contents.size()));
        if (!f) throw Error("short write to " + tmp);
    }
    fs::rename(tmp, path);
}

// Returns the first existing candidate of path or path.gz.
std::string existing_path(const std::string& base) {
    if (fs::exists(base)) return base;
    if (fs::exists(base + ".gz")) return base + ".gz";
    throw Error("dataset file not found: " + base + "[.gz]");
}

const std::int64_t kUncertaintySlice = 512;

} // namespace

std::string TrainConfig::to_json() const {
    nlohmann::json j;
    j["arch"] = arch;
    j["dataset"] = dataset;
    j["data_dir"] = data_dir;
    j["epochs"] = epochs;
    j["batch_size"] = batch_size;
    j["learning_rate"] = learning_rate;
    j["mc_samples"] = mc_samples;
    j["weight_decay"] = weight_decay;
    j["seed"] = seed;
    j["eval_T"] = eval_T;
    j["train_n"] = train_n;
    j["val_n"] = val_n;
    j["mode"] = mode;
    j["out_dir"] = out_dir;
    j["save_every"] = save_every;
    j["val_mc"] = val_mc;
    j["plain_gaussian_init"] = plain_gaussian_init;
    return j.dump();
}

TrainConfig TrainConfig::from_json(const std::string& json) {
    nlohmann::json j = nlohmann::json::parse(json);
    TrainConfig c;
    c.arch = j.at("arch").get<std::string>();
    c.dataset = j.at("dataset").get<std::string>();
    c.data_dir = j.at("data_dir").get<std::string>();
    c.epochs = j.at("epochs").get<int>();
    c.batch_size = j.at("batch_size").get<int>();
    c.learning_rate = j.at("learning_rate").get<double>();
    c.mc_samples = j.at("mc_samples").get<int>();
    c.weight_decay = j.at("weight_decay").get<double>();
    c.seed = j.at("seed").get<std::uint64_t>();
    c.eval_T = j.at("eval_T").get<int>();
    c.train_n = j.at("train_n").get<std::int64_t>();
    c.val_n = j.at("val_n").get<std::int64_t>();
    c.mode = j.at("mode").get<std::string>();
    c.out_dir = j.at("out_dir").get<std::string>();
    c.save_every = j.at("save_every").get<int>();
    c.val_mc = j.at("val_mc").get<bool>();
    c.plain_gaussian_init = j.at("plain_gaussian_init").get<bool>();
    return c;
}

int num_classes_for(const std::string& dataset) {
    if (dataset == "mnist" || dataset == "cifar10") return 10;
    if (dataset == "cifar100") return 100;
    throw ContractError("unknown dataset \"" + dataset + "\"");
}

std::int64_t in_channels_for(const std::string& arch,
                             const std::string& dataset) {
    if (arch == "lenet5") return dataset == "mnist" ? 1 : 3;
    return 3;
}

DataSplits load_splits(const TrainConfig& config) {
    const std::string& dir = config.data_dir;
    Dataset train;
    Dataset val;
    if (config.dataset == "mnist") {
        train = parse_mnist(existing_path(dir + "/train-images-idx3-ubyte"),
                            existing_path(dir + "/train-labels-idx1-ubyte"));
        val = parse_mnist(existing_path(dir + "/t10k-images-idx3-ubyte"),
                          existing_path(dir + "/t10k-labels-idx1-ubyte"));
    } else if (config.dataset == "cifar10") {
        std::vector<std::string> paths;
        for (int b = 1; b <= 5; ++b) {
            paths.push_back(
                existing_path(dir + "/data_batch_" + std::to_string(b) + ".bin"));
        }
        train = parse_cifar(paths, CifarVariant::cifar10);
        val = parse_cifar({existing_path(dir + "/test_batch.bin")},
                          CifarVariant::cifar10);
    } else if (config.dataset == "cifar100") {
        train = parse_cifar({existing_path(dir + "/train.bin")},
                            CifarVariant::cifar100);
        val = parse_cifar({existing_path(dir + "/test.bin")},
                          CifarVariant::cifar100);
    } else {
        throw ContractError("unknown dataset \"" + config.dataset + "\"");
    }

    if (config.train_n > 0) train = take(train, 0, config.train_n);
    if (config.val_n > 0) val = take(val, 0, config.val_n);

    const Shape input = {in_channels_for(config.arch, config.dataset), 32, 32};
    DataSplits splits;
    splits.train = adapt_input(train, input);
    splits.val = adapt_input(val, input);
    return splits;
}

Model restore_model(const Checkpoint& checkpoint, TrainConfig* config_out) {
    TrainConfig cfg = TrainConfig::from_json(checkpoint.config_json);
    Model model = build(cfg.arch, num_classes_for(cfg.dataset),
                        in_channels_for(cfg.arch, cfg.dataset),
                        derive_seed(cfg.seed, kInitStream),
                        cfg.plain_gaussian_init);
    std::unordered_map<std::string, TensorPtr> by_name;
    for (const auto& [name, tensor] : checkpoint.tensors) {
        by_name[name] = tensor;
    }
    for (auto& param : model.parameters()) {
        auto it = by_name.find(param.name);
        if (it == by_name.end()) {
            throw ConsistencyError("checkpoint is missing tensor \"" +
                                   param.name + "\"");
        }
        if (it->second->shape != param.tensor->shape) {
            throw ConsistencyError("checkpoint tensor \"" + param.name +
                                   "\" has shape " + it->second->shape_str() +
                                   ", expected " + param.tensor->shape_str());
        }
        param.tensor->data = it->second->data;
    }
    if (config_out) *config_out = cfg;
    return model;
}

double map_accuracy(Model& model, const Dataset& ds) {
    const std::int64_t n = ds.size();
    if (n == 0) return 0.0;
    NoiseStream unused(0);
    std::int64_t correct = 0;
    const std::int64_t chunk = 256;
    for (std::int64_t lo = 0; lo < n; lo += chunk) {
        const std::int64_t hi = std::min(n, lo + chunk);
        std::vector<std::int64_t> idx(static_cast<std::size_t>(hi - lo));
        std::iota(idx.begin(), idx.end(), lo);
        auto images = gather_images(ds.images, idx);
        auto logits = model.forward(images, unused, /*stochastic=*/false);
        const std::int64_t c = logits->shape[1];
        for (std::int64_t row = 0; row < hi - lo; ++row) {
            const double* l = logits->data.data() + row * c;
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < c; ++j) {
                if (l[j] > l[best]) best = j;
            }
            if (static_cast<int>(best) ==
                ds.labels[static_cast<std::size_t>(lo + row)]) {
                ++correct;
            }
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

std::string metrics_to_csv(const std::vector<MetricsRow>& rows) {
    std::string out = "epoch,train_nll,train_kl,train_total,train_acc,"
                      "val_acc,val_aleatoric,val_epistemic,wall_seconds\n";
    for (const auto& r : rows) {
        out += std::to_string(r.epoch);
        for (double v : {r.train_nll, r.train_kl, r.train_total, r.train_acc,
                         r.val_acc, r.val_aleatoric, r.val_epistemic,
                         r.wall_seconds}) {
            out += ',';
            out += format_double(v);
        }
        out += '\n';
    }
    return out;
}

namespace {

std::vector<NamedParam> trainable_params(const Model& model, bool bayesian) {
    std::vector<NamedParam> out;
    for (auto& p : model.parameters()) {
        if (!bayesian && p.name.ends_with(".log_alpha")) continue;
        out.push_back(p);
    }
    return out;
}

Checkpoint make_checkpoint(const TrainConfig& cfg, const Model& model,
                           Adam& adam, int epoch) {
    Checkpoint ckpt;
    ckpt.config_json = cfg.to_json();
    for (const auto& p : model.parameters()) {
        ckpt.tensors.emplace_back(p.name, p.tensor);
    }
    const auto& params = adam.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto m = Tensor::from_vector(params[i].tensor->shape,
                                     adam.first_moments()[i]);
        auto v = Tensor::from_vector(params[i].tensor->shape,
                                     adam.second_moments()[i]);
        ckpt.tensors.emplace_back("adam.m." + params[i].name, std::move(m));
        ckpt.tensors.emplace_back("adam.v." + params[i].name, std::move(v));
    }
    ckpt.adam_step = static_cast<std::uint64_t>(adam.step_count());
    ckpt.epoch = static_cast<std::uint32_t>(epoch);
    return ckpt;
}

void restore_adam(Adam& adam, const Checkpoint& ckpt) {
    std::unordered_map<std::string, const TensorPtr*> by_name;
    for (const auto& [name, tensor] : ckpt.tensors) {
        by_name[name] = &tensor;
    }
    const auto& params = adam.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
        const auto m = by_name.find("adam.m." + params[i].name);
        const auto v = by_name.find("adam.v." + params[i].name);
        if (m == by_name.end() || v == by_name.end()) {
            throw ConsistencyError("checkpoint is missing optimizer state for \"" +
                                   params[i].name + "\"");
        }
        adam.first_moments()[i] = (*m->second)->data;
        adam.second_moments()[i] = (*v->second)->data;
    }
    adam.set_step_count(static_cast<std::int64_t>(ckpt.adam_step));
}

} // namespace

TrainResult train(const TrainConfig& cfg, std::ostream* log) {
    if (cfg.epochs < 1 || cfg.batch_size < 1 || cfg.mc_samples < 1 ||
        cfg.eval_T < 1 || !(cfg.learning_rate > 0.0)) {
        throw ContractError("train: invalid configuration");
    }
    const bool bayesian = cfg.mode == "bayesian";
    if (!bayesian && cfg.mode != "frequentist") {
        throw ContractError("train: mode must be bayesian or frequentist");
    }

    fs::create_directories(cfg.out_dir);
    DataSplits data = load_splits(cfg);
    if (data.train.size() == 0) throw Error("train: empty training split");

    Model model = build(cfg.arch, num_classes_for(cfg.dataset),
                        in_channels_for(cfg.arch, cfg.dataset),
                        derive_seed(cfg.seed, kInitStream),
                        cfg.plain_gaussian_init);
    Adam adam(trainable_params(model, bayesian),
              {cfg.learning_rate, 0.9, 0.999, 1e-8, cfg.weight_decay});

    int start_epoch = 1;
    if (!cfg.resume_from.empty()) {
        const Checkpoint ckpt = load_checkpoint(cfg.resume_from);
        std::unordered_map<std::string, TensorPtr> by_name;
        for (const auto& [name, tensor] : ckpt.tensors) by_name[name] = tensor;
        for (auto& p : model.parameters()) {
            auto it = by_name.find(p.name);
            if (it == by_name.end()) {
                throw ConsistencyError("resume: checkpoint is missing \"" +
                                       p.name + "\"");
            }
            p.tensor->data = it->second->data;
        }
        restore_adam(adam, ckpt);
        start_epoch = static_cast<int>(ckpt.epoch) + 1;
    }

    const KLWeightSchedule schedule{
        BatchPlan{cfg.batch_size, 0}.minibatches(data.train.size())};
    const std::uint64_t eval_seed = derive_seed(cfg.seed, kEvalStream);
    const std::int64_t slice_n = std::min(kUncertaintySlice, data.val.size());

    TrainResult result;
    result.metrics_path = cfg.out_dir + "/metrics.csv";
    result.checkpoint_path = cfg.out_dir + "/checkpoint.bcnn";

    for (int epoch = start_epoch; epoch <= cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        NoiseStream train_noise(
            derive_seed(cfg.seed, kTrainStreamBase + static_cast<std::uint64_t>(epoch)));
        const auto epoch_batches =
            batches(data.train, {cfg.batch_size, cfg.seed + static_cast<std::uint64_t>(epoch)});

        double nll_sum = 0.0;
        double kl_sum = 0.0;
        double weighted_kl = 0.0;
        std::int64_t correct = 0;
        for (const auto& batch : epoch_batches) {
            adam.zero_grad();
            const auto stats = free_energy(
                batch, model, schedule, batch.index,
                bayesian ? cfg.mc_samples : 1, train_noise,
                /*accumulate_grads=*/true, /*stochastic=*/bayesian,
                /*include_kl=*/bayesian);
            if (!std::isfinite(stats.loss.total)) {
                throw Error("train: non-finite loss in epoch " +
                            std::to_string(epoch) + ", batch " +
                            std::to_string(batch.index));
            }
            adam.step();
            const auto bsize = static_cast<double>(batch.images->shape[0]);
            nll_sum += stats.loss.nll * bsize;
            kl_sum += stats.loss.kl;
            weighted_kl += stats.loss.beta_i * stats.loss.kl;
            correct += stats.correct;
        }

        MetricsRow row;
        row.epoch = epoch;
        const auto train_count = static_cast<double>(data.train.size());
        row.train_nll = nll_sum / train_count;
        row.train_kl = kl_sum / static_cast<double>(epoch_batches.size());
        row.train_total = weighted_kl + row.train_nll;
        row.train_acc = static_cast<double>(correct) / train_count;

        if (data.val.size() > 0) {
            auto slice = take(data.val, 0, slice_n);
            const auto unc = batch_uncertainty(
                model, slice.images, slice.labels, cfg.eval_T,
                NormalizerKind::softplus_n, eval_seed);
            row.val_aleatoric = unc.mean_aleatoric;
            row.val_epistemic = unc.mean_epistemic;
            if (cfg.val_mc) {
                const auto full = batch_uncertainty(
                    model, data.val.images, data.val.labels, cfg.eval_T,
                    NormalizerKind::softplus_n, eval_seed);
                row.val_acc = full.accuracy;
            } else {
                row.val_acc = map_accuracy(model, data.val);
            }
        }

        row.wall_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
                .count();
        result.metrics.push_back(row);
        write_file_atomic(result.metrics_path, metrics_to_csv(result.metrics));

        if (log) {
            *log << "epoch " << epoch << ": nll " << format_double(row.train_nll)
                 << " kl " << format_double(row.train_kl) << " train_acc "
                 << format_double(row.train_acc) << " val_acc "
                 << format_double(row.val_acc) << " ("
                 << format_double(row.wall_seconds) << "s)\n";
        }

        if (cfg.save_every > 0 && epoch % cfg.save_every == 0 &&
            epoch != cfg.epochs) {
            save_checkpoint(cfg.out_dir + "/checkpoint_epoch" +
                                std::to_string(epoch) + ".bcnn",
                            make_checkpoint(cfg, model, adam, epoch));
        }
    }

    save_checkpoint(result.checkpoint_path,
                    make_checkpoint(cfg, model, adam, cfg.epochs));
    return result;
}

EvalResult evaluate(const std::string& checkpoint_path,
                    const EvalOptions& options, std::ostream* log) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    TrainConfig cfg;
    Model model = restore_model(ckpt, &cfg);

    TrainConfig data_cfg = cfg;
    if (!options.dataset.empty()) data_cfg.dataset = options.dataset;
    if (!options.data_dir.empty()) data_cfg.data_dir = options.data_dir;
    data_cfg.val_n = options.val_n;
    if (num_classes_for(data_cfg.dataset) != model.spec.num_classes) {
        throw ContractError("evaluate: checkpoint has " +
                            std::to_string(model.spec.num_classes) +
                            " classes but dataset \"" + data_cfg.dataset +
                            "\" has " +
                            std::to_string(num_classes_for(data_cfg.dataset)));
    }
    data_cfg.train_n = 1; // only the validation split is needed
    const DataSplits data = load_splits(data_cfg);
    if (data.val.size() == 0) throw Error("evaluate: empty validation split");

    const std::uint64_t seed = options.eval_seed
                                   ? options.eval_seed
                                   : derive_seed(cfg.seed, kEvalStream);
    const auto unc =
        batch_uncertainty(model, data.val.images, data.val.labels, options.T,
                          options.normalizer, seed);

    fs::create_directories(options.out_dir);
    std::string csv = "image_index,scalar_aleatoric,scalar_epistemic,"
                      "predicted,label\n";
    for (std::size_t i = 0; i < unc.per_image.size(); ++i) {
        csv += std::to_string(i) + ',' +
               format_double(unc.per_image[i].aleatoric) + ',' +
               format_double(unc.per_image[i].epistemic) + ',' +
               std::to_string(unc.per_image[i].predicted) + ',' +
               std::to_string(data.val.labels[i]) + '\n';
    }
    EvalResult res;
    res.csv_path = options.out_dir + "/uncertainty.csv";
    write_file_atomic(res.csv_path, csv);
    res.accuracy = unc.accuracy;
    res.mean_aleatoric = unc.mean_aleatoric;
    res.mean_epistemic = unc.mean_epistemic;
    res.images = data.val.size();
    if (log) {
        *log << "eval: " << res.images << " images, accuracy "
             << format_double(res.accuracy) << ", aleatoric "
             << format_double(res.mean_aleatoric) << ", epistemic "
             << format_double(res.mean_epistemic) << "\n";
    }
    return res;
}

SweepResult noise_sweep(const std::string& checkpoint_path,
                        const std::vector<double>& gammas,
                        const EvalOptions& options, std::ostream* log) {
    if (gammas.empty()) throw ContractError("noise_sweep: no gamma values");
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    TrainConfig cfg;
    Model model = restore_model(ckpt, &cfg);

    TrainConfig data_cfg = cfg;
    if (!options.dataset.empty()) data_cfg.dataset = options.dataset;
    if (!options.data_dir.empty()) data_cfg.data_dir = options.data_dir;
    data_cfg.val_n = options.val_n;
    data_cfg.train_n = 1;
    const DataSplits data = load_splits(data_cfg);
    const std::int64_t slice_n = std::min(kUncertaintySlice, data.val.size());
    if (slice_n == 0) throw Error("noise_sweep: empty validation split");
    const Dataset slice = take(data.val, 0, slice_n);

    const std::uint64_t eval_seed = options.eval_seed
                                        ? options.eval_seed
                                        : derive_seed(cfg.seed, kEvalStream);
    const std::uint64_t noise_seed = derive_seed(cfg.seed, kSweepStream);

    SweepResult res;
    std::string csv = "gamma,aleatoric,epistemic\n";
    for (double gamma : gammas) {
        const Dataset noisy = add_noise(slice, {gamma, noise_seed});
        const auto unc =
            batch_uncertainty(model, noisy.images, noisy.labels, options.T,
                              options.normalizer, eval_seed);
        res.rows.push_back({gamma, unc.mean_aleatoric, unc.mean_epistemic});
        csv += format_double(gamma) + ',' +
               format_double(unc.mean_aleatoric) + ',' +
               format_double(unc.mean_epistemic) + '\n';
        if (log) {
            *log << "gamma " << format_double(gamma) << ": aleatoric "
                 << format_double(unc.mean_aleatoric) << ", epistemic "
                 << format_double(unc.mean_epistemic) << "\n";
        }
    }
    fs::create_directories(options.out_dir);
    res.csv_path = options.out_dir + "/sweep.csv";
    write_file_atomic(res.csv_path, csv);
    return res;
}

} // namespace bcnn
