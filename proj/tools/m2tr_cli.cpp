// m2tr command-line driver.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "m2tr/m2tr.hpp"

namespace fs = std::filesystem;
using namespace m2tr;

namespace {

enum ExitCode : int { kOk = 0, kConfig = 2, kData = 3, kNumeric = 4 };

struct Globals {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out;
    std::size_t threads = 1;
};

Config resolve_config(const Globals& g, Config base = {}) {
    Config c = g.config_path.empty() ? base : load_config(g.config_path, base);
    if (g.seed) c.seed = *g.seed;
    c.validate();
    return c;
}

fs::path out_dir(const Globals& g, const char* fallback) { return g.out.empty() ? fs::path(fallback) : fs::path(g.out); }

std::vector<Tensor<float>> load_frames(const std::vector<std::string>& inputs) {
    std::vector<fs::path> paths;
    for (const auto& in : inputs) {
        if (fs::is_directory(in)) {
            std::vector<fs::path> dir;
            for (const auto& e : fs::directory_iterator(in))
                if (e.path().extension() == ".tns") dir.push_back(e.path());
            std::sort(dir.begin(), dir.end());
            paths.insert(paths.end(), dir.begin(), dir.end());
        } else {
            paths.emplace_back(in);
        }
    }
    if (paths.empty()) throw DataError("no frames given");
    std::vector<Tensor<float>> frames;
    for (const auto& p : paths) frames.push_back(tns::load<float>(p));
    return frames;
}

void print_json(const nlohmann::ordered_json& j) { std::cout << j.dump(2) << '\n'; }

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"M2TR face-forgery detector: data generation, training, evaluation and quality metrics"};
    app.require_subcommand(1);
    Globals g;
    app.add_option("--config", g.config_path, "JSON config; keys are Config field names")->check(CLI::ExistingFile);
    app.add_option("--seed", g.seed, "Seed (overrides the config)");
    app.add_option("--out", g.out, "Output directory or file");
    app.add_option("--threads", g.threads, "Worker threads")->check(CLI::PositiveNumber);

    // gen-data
    auto* gen = app.add_subcommand("gen-data", "Generate a synthetic forgery dataset");
    std::string preset;
    std::size_t n_real = 500, n_fake = 2000, gen_size = 64;
    gen->add_option("--preset", preset, "desk: train/val/test splits of 2000/400/400")->check(CLI::IsMember({"desk"}));
    gen->add_option("--n-real", n_real, "Real samples (without --preset)");
    gen->add_option("--n-fake", n_fake, "Fake samples (without --preset)");
    gen->add_option("--image-size", gen_size, "Image side");

    // train
    auto* tr = app.add_subcommand("train", "Train a model");
    std::string data;
    std::optional<std::size_t> epochs;
    tr->add_option("--data", data, "Dataset root with train/ and val/")->required();
    tr->add_option("--epochs", epochs, "Override the epoch count");
    bool desk = false;
    tr->add_flag("--desk", desk, "Start from the desk preset (10 epochs)");

    // eval
    auto* ev = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset split");
    std::string ckpt;
    ev->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    ev->add_option("--data", data, "Dataset directory")->required();

    // predict
    auto* pr = app.add_subcommand("predict", "Score one image");
    std::string image;
    pr->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    pr->add_option("--image", image, ".tns image (H, W, 3)")->required()->check(CLI::ExistingFile);

    // gradcheck
    auto* gc = app.add_subcommand("gradcheck", "Finite-difference gradient checks in double precision");
    std::vector<std::string> gc_names;
    double gc_tol = 1e-4;
    gc->add_option("--name", gc_names, "Subset of checks")->check(CLI::IsMember(gradcheck_names()));
    gc->add_option("--tol", gc_tol, "Relative error bound");

    // ablate
    auto* ab = app.add_subcommand("ablate", "Train and score the ablation variants");
    std::vector<std::string> variants;
    ab->add_option("--data", data, "Dataset root with train/, val/ and optionally test/")->required();
    ab->add_option("--variants", variants, "full no_mt no_ff no_cmf single_scale ncl")->delimiter(',');
    ab->add_option("--epochs", epochs, "Override the epoch count");
    ab->add_flag("--desk", desk, "Start from the desk preset (10 epochs)");

    // qc
    auto* qc = app.add_subcommand("qc", "Dataset quality metrics");
    qc->require_subcommand(1);
    auto* qs = qc->add_subcommand("mask-ssim", "SSIM inside a face mask");
    std::string forged, original, face_mask;
    qs->add_option("--forged", forged)->required()->check(CLI::ExistingFile);
    qs->add_option("--original", original)->required()->check(CLI::ExistingFile);
    qs->add_option("--mask", face_mask)->required()->check(CLI::ExistingFile);
    auto* qp = qc->add_subcommand("perceptual", "Feature-pyramid perceptual distance");
    std::string img_a, img_b;
    std::uint64_t pyramid_seed = 2024;
    qp->add_option("--a", img_a)->required()->check(CLI::ExistingFile);
    qp->add_option("--b", img_b)->required()->check(CLI::ExistingFile);
    qp->add_option("--pyramid-seed", pyramid_seed);
    auto* qe = qc->add_subcommand("ewarp", "Flow warping error between consecutive frames");
    std::string frame_t, frame_t1, flow, occlusion;
    qe->add_option("--frame", frame_t, "Frame t")->required()->check(CLI::ExistingFile);
    qe->add_option("--next", frame_t1, "Frame t+1")->required()->check(CLI::ExistingFile);
    qe->add_option("--flow", flow, "(H, W, 2) flow, (dy, dx)")->required()->check(CLI::ExistingFile);
    qe->add_option("--occlusion", occlusion, "(H, W) mask, 1 = occluded")->check(CLI::ExistingFile);

    // export-features
    auto* ex = app.add_subcommand("export-features", "Write pooled features of a dataset as CSV");
    ex->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    ex->add_option("--data", data, "Dataset directory")->required();

    // video-eval
    auto* ve = app.add_subcommand("video-eval", "Score a clip of frames");
    std::string fusion = "mean";
    std::vector<std::string> frame_inputs;
    ve->add_option("--checkpoint", ckpt)->required()->check(CLI::ExistingFile);
    ve->add_option("--fusion", fusion)->check(CLI::IsMember({"mean", "temporal"}));
    ve->add_option("--frames", frame_inputs, ".tns frames or a directory of them, in order")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kOk : kConfig;
    }

    try {
        if (gen->parsed()) {
            const std::uint64_t seed = g.seed.value_or(0);
            const fs::path root = out_dir(g, "data");
            if (preset == "desk") {
                for (const auto& m : build_splits(root, desk_splits(), seed, gen_size))
                    std::cout << m.dir.string() << ": " << m.n_real << " real, " << m.n_fake << " fake\n";
            } else {
                const Manifest m = build_dataset(n_real, n_fake, seed, root, gen_size);
                std::cout << m.dir.string() << ": " << m.n_real << " real, " << m.n_fake << " fake\n";
            }
        } else if (tr->parsed() || ab->parsed()) {
            Config cfg = resolve_config(g, desk ? Config::desk() : Config{});
            if (epochs) {
                cfg.epochs = *epochs;
                cfg.validate();
            }
            TrainOptions opt;
            opt.threads = g.threads;
            opt.log = &std::cerr;
            if (tr->parsed()) {
                const fs::path out = out_dir(g, "run");
                const TrainResult r = train(cfg, data, out, opt);
                std::cout << "best val auc " << r.best_auc << " at epoch " << r.best_epoch + 1 << "; checkpoints in "
                          << out.string() << '\n';
            } else {
                const auto rows = run_ablation(select_ablations(cfg, variants), data, out_dir(g, "ablation"), opt);
                std::cout << kAblationHeader << '\n';
                for (const auto& r : rows) std::cout << ablation_csv_row(r) << '\n';
            }
        } else if (ev->parsed()) {
            const auto reports = evaluate(ckpt, data, g.threads);
            const auto j = to_json(reports);
            if (!g.out.empty()) write_json_file(g.out, j);
            print_json(j);
        } else if (pr->parsed()) {
            const fs::path out = out_dir(g, ".");
            print_json(predict(ckpt, image, out / (fs::path(image).stem().string() + "_mask.tns")));
        } else if (gc->parsed()) {
            const auto& names = gc_names.empty() ? gradcheck_names() : gc_names;
            bool ok = true;
            for (const auto& n : names) {
                const auto r = run_gradcheck(n, g.seed.value_or(0));
                const bool pass = r.result.max_rel_error < gc_tol;
                ok = ok && pass;
                std::printf("%-11s %s  max rel error %.3e  (%s)\n", n.c_str(), pass ? "ok  " : "FAIL",
                            r.result.max_rel_error, r.result.worst.c_str());
            }
            return ok ? kOk : kNumeric;
        } else if (qc->parsed()) {
            MetricReport rep;
            if (qs->parsed()) {
                rep.metric = "mask_ssim";
                rep.value = mask_ssim(tns::load<float>(forged), tns::load<float>(original), tns::load<float>(face_mask));
            } else if (qp->parsed()) {
                rep.metric = "perceptual";
                rep.value = perceptual_distance(tns::load<float>(img_a), tns::load<float>(img_b),
                                                FeaturePyramid::standard(pyramid_seed));
            } else {
                rep.metric = "ewarp";
                const auto a = tns::load<float>(frame_t), b = tns::load<float>(frame_t1), f = tns::load<float>(flow);
                rep.value = occlusion.empty() ? ewarp(a, b, f) : ewarp(a, b, f, tns::load<float>(occlusion));
            }
            rep.n = 1;
            print_json(to_json(rep));
        } else if (ex->parsed()) {
            const Checkpoint c = load_checkpoint(ckpt);
            const fs::path out = g.out.empty() ? fs::path("features.csv") : fs::path(g.out);
            export_features(model_from_checkpoint(c), load_manifest(data), out);
            std::cout << out.string() << '\n';
        } else if (ve->parsed()) {
            const Checkpoint c = load_checkpoint(ckpt);
            const auto model = model_from_checkpoint(c);
            const auto frames = load_frames(frame_inputs);
            const std::size_t k = std::min(c.config.frames_per_clip, frames.size());
            double score = 0.0;
            nlohmann::ordered_json j;
            if (fusion == "mean") {
                score = video_mean_forward(model, sample_frames(frames, k));
            } else {
                // The temporal head is not trained by this tool; weights come from the seed.
                TemporalConfig tc;
                tc.feature_dim = c.config.feature_dim;
                tc.frames_per_clip = c.config.frames_per_clip;
                const TemporalHead<float> head(tc, derive_seed(g.seed.value_or(c.config.seed), 3));
                score = video_temporal_forward(model, head, sample_frames(frames, c.config.frames_per_clip));
                j["temporal_head"] = "untrained";
            }
            j["fusion"] = fusion;
            j["frames_used"] = fusion == "mean" ? k : c.config.frames_per_clip;
            j["score"] = score;
            print_json(j);
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kConfig;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const ShapeError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    } catch (const NumericError& e) {
        std::cerr << "numeric failure: " << e.what() << '\n';
        return kNumeric;
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return kData;
    }
    return kOk;
}
