#include <CLI11.hpp>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <numeric>
#include <random>
#include <string>
#include <vector>

#include "saldis/errors.hpp"
#include "saldis/harness.hpp"

namespace fs = std::filesystem;
using namespace saldis;

namespace {

FusionFlags parse_flags(const std::string& s) {
    FusionFlags flags;
    for (char c : s) {
        switch (c) {
            case 'O': case 'o': flags.object_block = true; break;
            case 'S': case 's': flags.size = true; break;
            case 'A': case 'a': flags.appearance = true; break;
            default: throw DataError(std::string("unknown fusion flag: ") + c);
        }
    }
    return flags;
}

SimilarityBackend parse_backend(const std::string& s) {
    if (s == "cosine") return SimilarityBackend::cosine;
    if (s == "svcca") return SimilarityBackend::svcca;
    throw DataError("unknown distance backend: " + s);
}

struct CommonOpts {
    std::string flags = "SA";
    std::string distance = "cosine";
    std::string mode = "predicted";
    double threshold = 0.7;
};

void add_common(CLI::App* cmd, CommonOpts& opts) {
    cmd->add_option("--flags", opts.flags, "Fusion channels, subset of OSA");
    cmd->add_option("--distance", opts.distance, "Similarity backend: cosine|svcca");
    cmd->add_option("--mode", opts.mode, "Detection source: gt|predicted|random|none");
    cmd->add_option("--threshold", opts.threshold, "Detection confidence threshold");
}

void add_train_opts(CLI::App* cmd, TrainConfig& config, std::string& loss) {
    cmd->add_option("--lr", config.learning_rate, "Learning rate");
    cmd->add_option("--batch", config.batch_size, "Batch size");
    cmd->add_option("--epochs", config.epochs, "Training epochs");
    cmd->add_option("--seed", config.seed, "RNG seed");
    cmd->add_option("--loss", loss, "Training loss: kld|eml");
}

LossKind parse_loss(const std::string& s) {
    if (s == "kld") return LossKind::kld;
    if (s == "eml") return LossKind::eml;
    throw DataError("unknown loss: " + s);
}

std::vector<TrainSample> samples_for(const std::vector<Scene>& corpus,
                                     const std::vector<std::size_t>& indices,
                                     DetectionMode mode, const ChannelConfig& config,
                                     std::uint64_t seed) {
    std::vector<TrainSample> out;
    for (std::size_t i : indices)
        out.push_back(make_sample(corpus[i],
                                  select_detections(corpus, i, mode, seed), config));
    return out;
}

void print_report_table(const MetricReport& report) {
    std::cout << "image";
    for (const std::string& name : kMetricNames) std::cout << '\t' << name;
    std::cout << '\n';
    for (std::size_t i = 0; i < report.image_ids.size(); ++i) {
        std::cout << report.image_ids[i];
        for (const std::string& name : kMetricNames) {
            const auto& v = report.per_image.at(name)[i];
            std::cout << '\t';
            if (v) std::cout << *v; else std::cout << "skip";
        }
        std::cout << '\n';
    }
    std::cout << "mean";
    for (const std::string& name : kMetricNames)
        std::cout << '\t' << report.mean.at(name);
    std::cout << '\n';
}

// Finite-difference check of the analytic gradients; exits nonzero on
// failure. Mirrors the test-suite oracle so it can be run in the field.
int gradcheck(int n_models, std::uint64_t seed) {
    const double h = 1e-4;
    double worst = 0;
    for (int trial = 0; trial < n_models; ++trial) {
        std::mt19937_64 rng(seed + trial);
        std::uniform_real_distribution<double> unif(0.0, 1.0);

        FeatureMap fused(6, 6, 3);
        for (double& v : fused.data) v = 2.0 * unif(rng) - 1.0;
        Grid q_raw(6, 6), f(6, 6);
        for (double& v : q_raw.data) v = unif(rng) + 0.05;
        for (int i = 0; i < 5; ++i) f.data[rng() % f.data.size()] = 1.0;
        const SaliencyMap q = normalize_to_distribution(q_raw);

        ReadoutModel model = make_readout_model(3, seed + 1000 + trial);
        model.smooth_sigma = 1.0;
        model.cb = CenterBias{2.5, 2.5, 2.0, 2.0, 0.5};

        for (LossKind kind : {LossKind::kld, LossKind::eml}) {
            const Gradients grads = backward(model, fused, q, f, kind);
            auto loss_at = [&](const ReadoutModel& m) {
                const SaliencyMap p = forward(m, fused).prediction;
                return kind == LossKind::kld ? kld_loss(p, q) : eml_loss(p, q, f);
            };
            for (std::size_t l = 0; l < model.layers.size(); ++l) {
                auto check = [&](std::vector<double>& param,
                                 const std::vector<double>& grad) {
                    for (std::size_t i = 0; i < param.size(); ++i) {
                        ReadoutModel m = model;
                        std::vector<double>& p =
                            (&param == &model.layers[l].weights) ? m.layers[l].weights
                                                                 : m.layers[l].bias;
                        const double orig = p[i];
                        p[i] = orig + h;
                        const double up = loss_at(m);
                        p[i] = orig - h;
                        const double down = loss_at(m);
                        const double fd = (up - down) / (2 * h);
                        const double scale = std::max({std::abs(fd), std::abs(grad[i]), 1e-4});
                        worst = std::max(worst, std::abs(fd - grad[i]) / scale);
                    }
                };
                check(model.layers[l].weights, grads.layers[l].weights);
                check(model.layers[l].bias, grads.layers[l].bias);
            }
        }
    }
    std::cout << "gradcheck: max relative error " << worst << " over " << n_models
              << " models\n";
    if (worst >= 1e-4) {
        std::cerr << "gradcheck: FAILED (tolerance 1e-4)\n";
        return 3;
    }
    return 0;
}

int run(int argc, char** argv) {
    CLI::App app{"Object-dissimilarity saliency toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic corpus");
    int synth_n = 8;
    std::uint64_t synth_seed = 0;
    std::string synth_out;
    SynthSpec spec;
    synth->add_option("--n", synth_n, "Number of scenes");
    synth->add_option("--seed", synth_seed, "RNG seed");
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--map-h", spec.map_h);
    synth->add_option("--map-w", spec.map_w);
    synth->add_option("--img-w", spec.img_w);
    synth->add_option("--img-h", spec.img_h);
    synth->add_option("--channels", spec.channels);
    synth->add_option("--max-objects", spec.max_objects);

    // dissim
    auto* dissim = app.add_subcommand("dissim", "Write a scene's channel maps");
    std::string dissim_scene, dissim_out;
    CommonOpts dissim_opts;
    dissim->add_option("--scene", dissim_scene, "Scene directory")->required();
    dissim->add_option("--out", dissim_out, "Output directory")->required();
    add_common(dissim, dissim_opts);

    // train
    auto* train_cmd = app.add_subcommand("train", "Train a readout model");
    std::string train_corpus, train_out;
    CommonOpts train_opts;
    TrainConfig train_config;
    train_config.epochs = 20;
    std::string train_loss = "kld";
    double train_smooth = 0.0;
    bool train_cb = false;
    train_cmd->add_option("--corpus", train_corpus, "Corpus directory")->required();
    train_cmd->add_option("--out", train_out, "Checkpoint path")->required();
    train_cmd->add_option("--smooth-sigma", train_smooth, "Smoothing sigma");
    train_cmd->add_flag("--center-bias", train_cb, "Fit and attach a center-bias prior");
    add_common(train_cmd, train_opts);
    add_train_opts(train_cmd, train_config, train_loss);

    // predict
    auto* predict = app.add_subcommand("predict", "Predict a scene's saliency map");
    std::string predict_model, predict_scene, predict_out;
    CommonOpts predict_opts;
    predict->add_option("--model", predict_model, "Checkpoint path")->required();
    predict->add_option("--scene", predict_scene, "Scene directory")->required();
    predict->add_option("--out", predict_out, "Output FTN1 path")->required();
    add_common(predict, predict_opts);

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "Evaluate a model on a corpus");
    std::string eval_corpus, eval_model, eval_out, eval_split = "test";
    CommonOpts eval_opts;
    std::uint64_t eval_seed = 0;
    eval_cmd->add_option("--corpus", eval_corpus, "Corpus directory")->required();
    eval_cmd->add_option("--model", eval_model, "Checkpoint path")->required();
    eval_cmd->add_option("--out", eval_out, "Report file (key=value)")->required();
    eval_cmd->add_option("--split", eval_split, "Corpus split: test|all");
    eval_cmd->add_option("--seed", eval_seed, "Split / sAUC seed");
    add_common(eval_cmd, eval_opts);

    // ablate
    auto* ablate = app.add_subcommand("ablate", "Run the fusion-flag ablation grid");
    std::string ablate_corpus, ablate_out, ablate_distance = "cosine";
    TrainConfig ablate_config;
    ablate_config.epochs = 20;
    std::string ablate_loss = "kld";
    ablate->add_option("--corpus", ablate_corpus, "Corpus directory")->required();
    ablate->add_option("--out", ablate_out, "Output directory")->required();
    ablate->add_option("--distance", ablate_distance, "cosine|svcca");
    add_train_opts(ablate, ablate_config, ablate_loss);

    // robust
    auto* robust = app.add_subcommand("robust", "Run the detection-robustness protocol");
    std::string robust_corpus, robust_out, robust_train = "predicted",
                robust_test = "predicted";
    TrainConfig robust_config;
    robust_config.epochs = 20;
    std::string robust_loss = "kld";
    robust->add_option("--corpus", robust_corpus, "Corpus directory")->required();
    robust->add_option("--out", robust_out, "Report file")->required();
    robust->add_option("--train-mode", robust_train, "gt|predicted|random|none");
    robust->add_option("--test-mode", robust_test, "gt|predicted|random|none");
    add_train_opts(robust, robust_config, robust_loss);

    // gradcheck
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    int grad_models = 20;
    std::uint64_t grad_seed = 0;
    grad->add_option("--models", grad_models, "Number of random models");
    grad->add_option("--seed", grad_seed, "RNG seed");

    // fitcb
    auto* fitcb = app.add_subcommand("fitcb", "Fit a center-bias prior from a corpus");
    std::string fitcb_corpus, fitcb_model, fitcb_out;
    fitcb->add_option("--corpus", fitcb_corpus, "Corpus directory")->required();
    fitcb->add_option("--model", fitcb_model, "Checkpoint to attach the prior to");
    fitcb->add_option("--out", fitcb_out, "Output checkpoint path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;  // usage error
    }

    if (*synth) {
        save_corpus(synth_corpus(synth_n, synth_seed, spec), synth_out);
        std::cout << "wrote " << synth_n << " scenes to " << synth_out << '\n';
    } else if (*dissim) {
        const Scene scene = load_scene(dissim_scene, dissim_opts.threshold);
        const DetectionMode mode = parse_detection_mode(dissim_opts.mode);
        if (mode == DetectionMode::random)
            throw DataError("dissim: random mode needs a corpus, not a single scene");
        const std::vector<Detection> dets =
            mode == DetectionMode::ground_truth ? scene.dets_gt
            : mode == DetectionMode::predicted  ? scene.dets_pred
                                                : std::vector<Detection>{};
        const int h = scene.features.height, w = scene.features.width;
        Grid appearance(h, w), size(h, w);
        if (!dets.empty()) {
            const ObjectSet set =
                build_object_set(scene.features, dets, scene.img_w, scene.img_h);
            const std::vector<double> scores = dissimilarity_scores(
                set, 1e-8, parse_backend(dissim_opts.distance));
            appearance = rasterize_scores(dets, scores, h, w, scene.img_w,
                                          scene.img_h).map;
            size = size_channel(dets, h, w, scene.img_w, scene.img_h).map;
        }
        fs::create_directories(dissim_out);
        save_grid(appearance, fs::path(dissim_out) / "appearance.ftn");
        save_grid(size, fs::path(dissim_out) / "size.ftn");
    } else if (*train_cmd) {
        const std::vector<Scene> corpus = load_corpus(train_corpus, train_opts.threshold);
        const Split split = split_corpus(corpus.size(), train_config.seed);
        const ChannelConfig config{parse_flags(train_opts.flags),
                                   parse_backend(train_opts.distance)};
        const DetectionMode mode = parse_detection_mode(train_opts.mode);
        train_config.loss = parse_loss(train_loss);
        const std::vector<TrainSample> train_set =
            samples_for(corpus, split.train, mode, config, train_config.seed);
        const std::vector<TrainSample> val_set =
            samples_for(corpus, split.val, mode, config, train_config.seed);

        ReadoutModel model = make_readout_model(train_set.front().features.channels,
                                                train_config.seed);
        model.smooth_sigma = train_smooth;
        if (train_cb) {
            std::vector<FixationMap> fixations;
            for (std::size_t i : split.train) fixations.push_back(corpus[i].fixations);
            model.cb = fit_center_bias(fixations);
        }
        const TrainResult result = saldis::train(std::move(model), train_set,
                                                 train_config, &val_set);
        save_checkpoint(result.model, train_out);
        std::cout << "final train loss " << result.loss_trace.back() << ", checkpoint "
                  << train_out << '\n';
    } else if (*predict) {
        const ReadoutModel model = load_checkpoint(predict_model);
        const Scene scene = load_scene(predict_scene, predict_opts.threshold);
        const DetectionMode mode = parse_detection_mode(predict_opts.mode);
        if (mode == DetectionMode::random)
            throw DataError("predict: random mode needs a corpus, not a single scene");
        const std::vector<Detection> dets =
            mode == DetectionMode::ground_truth ? scene.dets_gt
            : mode == DetectionMode::predicted  ? scene.dets_pred
                                                : std::vector<Detection>{};
        const ChannelConfig config{parse_flags(predict_opts.flags),
                                   parse_backend(predict_opts.distance)};
        save_grid(forward(model, fuse_scene(scene, dets, config)).prediction,
                  predict_out);
    } else if (*eval_cmd) {
        const ReadoutModel model = load_checkpoint(eval_model);
        const std::vector<Scene> corpus = load_corpus(eval_corpus, eval_opts.threshold);
        const ChannelConfig config{parse_flags(eval_opts.flags),
                                   parse_backend(eval_opts.distance)};
        const DetectionMode mode = parse_detection_mode(eval_opts.mode);
        std::vector<std::size_t> indices;
        if (eval_split == "all") {
            indices.resize(corpus.size());
            std::iota(indices.begin(), indices.end(), 0);
        } else if (eval_split == "test") {
            indices = split_corpus(corpus.size(), eval_seed).test;
        } else {
            throw DataError("eval: unknown split " + eval_split);
        }
        std::vector<SaliencyMap> predictions, gts;
        std::vector<FixationMap> fixations;
        std::vector<std::string> ids;
        for (std::size_t i : indices) {
            const std::vector<Detection> dets =
                select_detections(corpus, i, mode, eval_seed);
            predictions.push_back(
                forward(model, fuse_scene(corpus[i], dets, config)).prediction);
            gts.push_back(corpus[i].ground_truth);
            fixations.push_back(corpus[i].fixations);
            ids.push_back(corpus[i].id);
        }
        EvalConfig eval_config;
        eval_config.sauc.seed = eval_seed;
        const MetricReport report = evaluate(predictions, gts, fixations, ids,
                                             eval_config);
        print_report_table(report);
        write_report(report, eval_out);
    } else if (*ablate) {
        const std::vector<Scene> corpus = load_corpus(ablate_corpus);
        ablate_config.loss = parse_loss(ablate_loss);
        std::vector<FusionFlags> grid;
        for (int mask = 1; mask < 8; ++mask)
            grid.push_back(FusionFlags{(mask & 4) != 0, (mask & 2) != 0,
                                       (mask & 1) != 0});
        const std::vector<AblationRow> rows =
            run_ablation(corpus, grid, ablate_config, EvalConfig{},
                         parse_backend(ablate_distance));
        fs::create_directories(ablate_out);
        for (const AblationRow& row : rows) {
            if (row.diverged) {
                std::cout << row.label << ": diverged (" << row.error << ")\n";
                continue;
            }
            std::cout << row.label;
            for (const std::string& name : kMetricNames)
                std::cout << '\t' << name << '=' << row.report.mean.at(name);
            std::cout << '\n';
            write_report(row.report, fs::path(ablate_out) / (row.label + ".report"));
        }
    } else if (*robust) {
        const std::vector<Scene> corpus = load_corpus(robust_corpus);
        robust_config.loss = parse_loss(robust_loss);
        const RobustnessResult result = run_robustness(
            corpus, parse_detection_mode(robust_train),
            parse_detection_mode(robust_test), robust_config);
        print_report_table(result.report);
        write_report(result.report, robust_out);
    } else if (*grad) {
        return gradcheck(grad_models, grad_seed);
    } else if (*fitcb) {
        const std::vector<Scene> corpus = load_corpus(fitcb_corpus);
        std::vector<FixationMap> fixations;
        for (const Scene& s : corpus) fixations.push_back(s.fixations);
        const CenterBias cb = fit_center_bias(fixations);
        std::cout << "mu=(" << cb.mu_x << ", " << cb.mu_y << ") sigma=("
                  << cb.sigma_x << ", " << cb.sigma_y << ") weight=" << cb.weight
                  << '\n';
        if (!fitcb_model.empty()) {
            if (fitcb_out.empty())
                throw DataError("fitcb: --out required when --model is given");
            ReadoutModel model = load_checkpoint(fitcb_model);
            model.cb = cb;
            save_checkpoint(model, fitcb_out);
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    try {
        return run(argc, argv);
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
}
