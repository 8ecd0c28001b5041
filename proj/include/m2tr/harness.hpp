#pragma once

// Training, evaluation and ablation drivers plus the named gradient-check suite.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <ostream>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"
#include "m2tr/checkpoint.hpp"
#include "m2tr/config.hpp"
#include "m2tr/data.hpp"
#include "m2tr/gradcheck.hpp"
#include "m2tr/losses.hpp"
#include "m2tr/metrics.hpp"
#include "m2tr/network.hpp"
#include "m2tr/optim.hpp"

namespace m2tr {

/// Runs fn(i) for i in [0, n) on up to `threads` workers. The first exception
/// thrown by any worker is rethrown on the caller.
inline void parallel_for(std::size_t n, std::size_t threads, const std::function<void(std::size_t)>& fn) {
    threads = std::max<std::size_t>(1, std::min(threads, n));
    if (threads == 1) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::exception_ptr error;
    std::mutex mu;
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < threads; ++t)
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += threads) fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lock(mu);
                if (!error) error = std::current_exception();
            }
        });
    for (auto& th : pool) th.join();
    if (error) std::rethrow_exception(error);
}

/// A dataset split held in memory.
struct Split {
    Manifest manifest;
    std::vector<Tensor<float>> images, masks;
    std::vector<int> labels;
    std::vector<std::string> ids;

    std::size_t size() const noexcept { return labels.size(); }
};

inline Split load_split(const std::filesystem::path& dir, std::size_t threads = 1) {
    Split s;
    s.manifest = load_manifest(dir);
    const std::size_t n = s.manifest.entries.size();
    s.images.resize(n);
    s.masks.resize(n);
    s.labels.resize(n);
    s.ids.resize(n);
    parallel_for(n, threads, [&](std::size_t i) {
        Sample smp = load_sample(s.manifest, i);
        s.images[i] = std::move(smp.image);
        s.masks[i] = std::move(smp.mask);
        s.labels[i] = smp.label;
        s.ids[i] = smp.id;
    });
    return s;
}

inline void check_split_matches(const Split& s, const Config& cfg, const std::string& what) {
    if (s.manifest.image_size != cfg.image_size)
        throw DataError(what + " split has image_size " + std::to_string(s.manifest.image_size) +
                        " but the config expects " + std::to_string(cfg.image_size));
}

/// Directory of a named split: `root/name` when it exists, else `root` itself
/// when that is a dataset directory.
inline std::filesystem::path split_dir(const std::filesystem::path& root, const std::string& name) {
    if (std::filesystem::exists(root / name / "manifest.json")) return root / name;
    if (std::filesystem::exists(root / "manifest.json")) return root;
    throw DataError("no '" + name + "' split under " + root.string());
}

struct SplitSpec {
    std::string name;
    std::size_t n_real = 0, n_fake = 0;
};

/// 1000/1000 train, 200/200 val, 200/200 test.
inline std::vector<SplitSpec> desk_splits() {
    return {{"train", 1000, 1000}, {"val", 200, 200}, {"test", 200, 200}};
}

/// Builds each split under `root/<name>`; split k uses derive_seed(seed, k).
inline std::vector<Manifest> build_splits(const std::filesystem::path& root, const std::vector<SplitSpec>& specs,
                                          std::uint64_t seed, std::size_t image_size) {
    std::vector<Manifest> out;
    for (std::size_t k = 0; k < specs.size(); ++k)
        out.push_back(build_dataset(specs[k].n_real, specs[k].n_fake, derive_seed(seed, k), root / specs[k].name,
                                    image_size));
    return out;
}

// ---------------------------------------------------------------------------
// inference

struct SplitPredictions {
    std::vector<double> scores;
    std::vector<Tensor<float>> masks;
    std::vector<int> labels;
};

inline SplitPredictions predict_split(const M2TRModel<float>& model, const Split& s, std::size_t threads = 1,
                                      bool keep_masks = false) {
    SplitPredictions p;
    p.scores.resize(s.size());
    p.labels = s.labels;
    p.masks.resize(s.size());
    parallel_for(s.size(), threads, [&](std::size_t i) {
        auto pr = model.predict(s.images[i]);
        p.scores[i] = pr.score;
        p.masks[i] = std::move(pr.mask);
    });
    if (!keep_masks) p.masks.clear();
    return p;
}

struct SplitMetrics {
    double acc = 0.0, auc = 0.0, iou = 0.0;
    std::size_t n = 0;
};

inline SplitMetrics score_split(const M2TRModel<float>& model, const Split& s, std::size_t threads = 1) {
    SplitPredictions p = predict_split(model, s, threads, true);
    SplitMetrics m;
    m.n = s.size();
    m.acc = accuracy(p.scores, p.labels);
    m.auc = auc(p.scores, p.labels);
    IouAccumulator iou;
    for (std::size_t i = 0; i < s.size(); ++i) iou.add(p.masks[i], s.masks[i]);
    m.iou = iou.value();
    return m;
}

// ---------------------------------------------------------------------------
// training

struct EpochLog {
    std::size_t epoch = 0;
    double lr = 0.0;
    double cls = 0.0, seg = 0.0, con = 0.0, total = 0.0;
    double val_acc = 0.0, val_auc = 0.0;
    std::size_t samples = 0;
};

inline nlohmann::ordered_json to_json(const EpochLog& e) {
    return {{"epoch", e.epoch}, {"lr", e.lr},           {"cls", e.cls},         {"seg", e.seg},
            {"con", e.con},     {"total", e.total},     {"val_acc", e.val_acc}, {"val_auc", e.val_auc},
            {"samples", e.samples}};
}

struct TrainOptions {
    std::size_t threads = 1;
    std::ostream* log = nullptr;  // progress lines, not part of any artifact
    bool write_checkpoints = true;
};

struct TrainResult {
    std::vector<EpochLog> history;
    std::size_t best_epoch = 0;
    double best_auc = -1.0;
    Checkpoint last;
};

/// Loss terms of one optimizer step.
struct StepLosses {
    double cls = 0.0, seg = 0.0, con = 0.0, total = 0.0;
    bool con_skipped = true;
};

/// One Adam step on a batch. Each sample gets its own graph; per-sample
/// gradients are reduced in batch order, so the result does not depend on
/// `threads`.
inline StepLosses train_step(M2TRModel<float>& model, Adam<float>& opt, const Config& cfg,
                             const std::vector<const Tensor<float>*>& images,
                             const std::vector<const Tensor<float>*>& masks, const std::vector<int>& labels,
                             double lr, std::size_t threads = 1) {
    const std::size_t b = labels.size();
    if (b == 0 || images.size() != b || masks.size() != b) throw ContractError("train_step: bad batch");
    struct Slot {
        std::unique_ptr<Graph<float>> g;
        M2TRModel<float>::Outputs out;
        Var<float> cls, seg;
    };
    std::vector<Slot> slots(b);
    const auto& cm = model;
    parallel_for(b, threads, [&](std::size_t i) {
        Slot& s = slots[i];
        s.g = std::make_unique<Graph<float>>(true);
        s.out = cm.forward(*s.g, s.g->input(*images[i]));
        s.cls = bce_logits_mean(s.out.logit, Tensor<float>({1, 1}, static_cast<float>(labels[i])));
        s.seg = bce_logits_mean(s.out.mask_logit, *masks[i]);
    });

    const std::size_t d = cfg.feature_dim;
    Tensor<float> feats({b, d});
    for (std::size_t i = 0; i < b; ++i)
        std::copy_n(slots[i].out.feature.value().data(), d, feats.data() + i * d);
    StepLosses sl;
    ContrastiveResult<float> con;
    if (cfg.lambda_con > 0.0) {
        con = contrastive_loss(feats, labels);
        sl.con_skipped = con.skipped;
        sl.con = con.value;
    }
    for (std::size_t i = 0; i < b; ++i) {
        sl.cls += slots[i].cls.value()[0] / double(b);
        sl.seg += slots[i].seg.value()[0] / double(b);
    }
    sl.total = total_loss(sl.cls, sl.seg, sl.con, LossWeights{cfg.lambda_seg, cfg.lambda_con});
    if (!std::isfinite(sl.total)) throw NumericError("non-finite training loss");

    const bool use_con = cfg.lambda_con > 0.0 && !con.skipped;
    parallel_for(b, threads, [&](std::size_t i) {
        Slot& s = slots[i];
        std::vector<std::pair<Var<float>, Tensor<float>>> seeds;
        seeds.emplace_back(s.cls, Tensor<float>({1}, static_cast<float>(1.0 / double(b))));
        seeds.emplace_back(s.seg, Tensor<float>({1}, static_cast<float>(cfg.lambda_seg / double(b))));
        if (use_con) {
            Tensor<float> gf({1, d});
            for (std::size_t j = 0; j < d; ++j) gf[j] = static_cast<float>(cfg.lambda_con * con.grad.at(i, j));
            seeds.emplace_back(s.out.feature, std::move(gf));
        }
        s.g->backward_seeded(seeds);
    });
    auto& ps = model.params();
    ps.zero_grad();
    for (std::size_t i = 0; i < b; ++i) {
        ps.accumulate_grads(slots[i].g->param_grads());
        slots[i].g.reset();
    }
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (float v : ps.grad(i).values())
            if (!std::isfinite(v)) throw NumericError("non-finite gradient in " + ps.name(i));
    opt.step(ps, lr);
    return sl;
}

/// Source of the per-epoch shuffle seeds. Depends on the seed only, so every
/// ablation variant sees the same sample order.
inline Rng epoch_order_rng(std::uint64_t seed) { return Rng(derive_seed(seed, 1)); }

inline void write_json_file(const std::filesystem::path& path, const nlohmann::ordered_json& j) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write " + path.string());
    os << j.dump(2) << '\n';
}

/// Trains on `data_root/train`, validating on `data_root/val` after every epoch.
/// Writes config.json, metrics.jsonl, best.ckpt and last.ckpt into `out_dir`.
inline TrainResult train(const Config& cfg, const std::filesystem::path& data_root,
                         const std::filesystem::path& out_dir, const TrainOptions& opt = {}) {
    cfg.validate();
    const Split tr = load_split(data_root / "train", opt.threads);
    const Split val = load_split(data_root / "val", opt.threads);
    check_split_matches(tr, cfg, "train");
    check_split_matches(val, cfg, "val");

    std::filesystem::create_directories(out_dir);
    write_json_file(out_dir / "config.json", to_json(cfg));
    std::ofstream metrics_log(out_dir / "metrics.jsonl", std::ios::binary);
    if (!metrics_log) throw DataError("cannot write " + (out_dir / "metrics.jsonl").string());

    M2TRModel<float> model(cfg.model(), derive_seed(cfg.seed, 0));
    Adam<float> adam(model.params());
    Rng order_rng = epoch_order_rng(cfg.seed);
    TrainResult result;

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const double lr = cfg.lr_at(epoch);
        const auto order = balanced_epoch(tr.manifest, order_rng.next_u64());
        EpochLog log;
        log.epoch = epoch;
        log.lr = lr;
        std::size_t con_batches = 0, steps = 0;
        for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
            const std::size_t end = std::min(order.size(), start + cfg.batch_size);
            std::vector<const Tensor<float>*> im, mk;
            std::vector<int> lb;
            for (std::size_t k = start; k < end; ++k) {
                im.push_back(&tr.images[order[k]]);
                mk.push_back(&tr.masks[order[k]]);
                lb.push_back(tr.labels[order[k]]);
            }
            const StepLosses sl = train_step(model, adam, cfg, im, mk, lb, lr, opt.threads);
            const double w = double(end - start);
            log.cls += sl.cls * w;
            log.seg += sl.seg * w;
            log.total += sl.total * w;
            if (!sl.con_skipped) {
                log.con += sl.con;
                ++con_batches;
            }
            ++steps;
            log.samples += end - start;
        }
        log.cls /= double(log.samples);
        log.seg /= double(log.samples);
        log.total /= double(log.samples);
        if (con_batches) log.con /= double(con_batches);

        const SplitMetrics vm = score_split(model, val, opt.threads);
        log.val_acc = vm.acc;
        log.val_auc = vm.auc;
        result.history.push_back(log);
        metrics_log << to_json(log).dump() << '\n';
        metrics_log.flush();

        result.last = make_checkpoint(cfg, model, &adam, static_cast<std::uint32_t>(epoch + 1), order_rng.state());
        if (vm.auc > result.best_auc) {
            result.best_auc = vm.auc;
            result.best_epoch = epoch;
            if (opt.write_checkpoints) save_checkpoint(out_dir / "best.ckpt", result.last);
        }
        if (opt.write_checkpoints) save_checkpoint(out_dir / "last.ckpt", result.last);
        if (opt.log) {
            const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "epoch %zu/%zu lr %.2g loss %.4f (cls %.4f seg %.4f con %.4f) val acc %.4f auc %.4f "
                          "[%zu steps, %.1fs]\n",
                          epoch + 1, cfg.epochs, lr, log.total, log.cls, log.seg, log.con, vm.acc, vm.auc, steps,
                          secs);
            *opt.log << buf << std::flush;
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// evaluation, prediction

inline std::vector<MetricReport> evaluate(const M2TRModel<float>& model, const Config& cfg, const Split& s,
                                          std::size_t threads = 1) {
    check_split_matches(s, cfg, "evaluation");
    const SplitMetrics m = score_split(model, s, threads);
    const std::string h = config_hash(cfg);
    return {{"acc", m.acc, m.n, h}, {"auc", m.auc, m.n, h}, {"mask_iou", m.iou, m.n, h}};
}

inline std::vector<MetricReport> evaluate(const std::filesystem::path& checkpoint,
                                          const std::filesystem::path& dataset_dir, std::size_t threads = 1) {
    const Checkpoint c = load_checkpoint(checkpoint);
    const auto model = model_from_checkpoint(c);
    return evaluate(model, c.config, load_split(dataset_dir, threads), threads);
}

/// Scores one (H, W, 3) image and writes its predicted mask to `mask_path`.
inline nlohmann::ordered_json predict(const std::filesystem::path& checkpoint, const std::filesystem::path& image,
                                      const std::filesystem::path& mask_path) {
    const Checkpoint c = load_checkpoint(checkpoint);
    const auto model = model_from_checkpoint(c);
    const Tensor<float> img = tns::load<float>(image);
    const std::size_t s = c.config.image_size;
    if (img.shape() != Shape{s, s, 3})
        throw DataError("image " + image.string() + " has shape " + shape_str(img.shape()) + ", model expects " +
                        shape_str(Shape{s, s, 3}));
    const auto p = model.predict(img);
    if (mask_path.has_parent_path()) std::filesystem::create_directories(mask_path.parent_path());
    tns::save(mask_path, p.mask);
    return {{"score", static_cast<double>(p.score)}, {"mask_path", mask_path.string()}};
}

// ---------------------------------------------------------------------------
// ablation

struct AblationVariant {
    std::string name;
    Config config;
};

/// full, no_mt, no_ff, no_cmf, single_scale (middle patch side only), ncl.
inline std::vector<AblationVariant> standard_ablations(const Config& base) {
    std::vector<AblationVariant> v;
    v.push_back({"full", base});
    Config c = base;
    c.ablate_mt = true;
    v.push_back({"no_mt", c});
    c = base;
    c.ablate_ff = true;
    v.push_back({"no_ff", c});
    c = base;
    c.ablate_cmf = true;
    v.push_back({"no_cmf", c});
    c = base;
    c.patch_sides = {base.patch_sides[base.patch_sides.size() / 2]};
    v.push_back({"single_scale", c});
    c = base;
    c.lambda_con = 0.0;
    v.push_back({"ncl", c});
    return v;
}

inline std::vector<AblationVariant> select_ablations(const Config& base, const std::vector<std::string>& names) {
    auto all = standard_ablations(base);
    if (names.empty()) return all;
    std::vector<AblationVariant> out;
    for (const auto& n : names) {
        auto it = std::find_if(all.begin(), all.end(), [&](const auto& v) { return v.name == n; });
        if (it == all.end()) throw ConfigError("unknown ablation variant '" + n + "'");
        out.push_back(*it);
    }
    return out;
}

struct AblationRow {
    std::string variant;
    Config config;
    double acc = 0.0, auc = 0.0;
    std::size_t n = 0;
};

inline const char* kAblationHeader = "variant,ablate_mt,ablate_ff,ablate_cmf,patch_sides,lambda_con,acc,auc,n";

inline std::string ablation_csv_row(const AblationRow& r) {
    std::string sides;
    for (std::size_t i = 0; i < r.config.patch_sides.size(); ++i)
        sides += (i ? ";" : "") + std::to_string(r.config.patch_sides[i]);
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%d,%d,%d,%s,%.9g,%.9g,%.9g,%zu", r.variant.c_str(), int(r.config.ablate_mt),
                  int(r.config.ablate_ff), int(r.config.ablate_cmf), sides.c_str(), r.config.lambda_con, r.acc,
                  r.auc, r.n);
    return buf;
}

/// Trains every variant with the same seed and scores it on the test split
/// (val when there is no test split). Writes ablation.csv into `out_dir`.
inline std::vector<AblationRow> run_ablation(const std::vector<AblationVariant>& variants,
                                             const std::filesystem::path& data_root,
                                             const std::filesystem::path& out_dir, const TrainOptions& opt = {}) {
    std::filesystem::create_directories(out_dir);
    const auto eval_dir =
        std::filesystem::exists(data_root / "test" / "manifest.json") ? data_root / "test" : data_root / "val";
    const Split test = load_split(eval_dir, opt.threads);
    std::vector<AblationRow> rows;
    std::ofstream csv(out_dir / "ablation.csv", std::ios::binary);
    if (!csv) throw DataError("cannot write " + (out_dir / "ablation.csv").string());
    csv << kAblationHeader << '\n';
    for (const auto& v : variants) {
        if (opt.log) *opt.log << "ablation variant " << v.name << '\n';
        TrainResult tr = train(v.config, data_root, out_dir / v.name, opt);
        const auto model = model_from_checkpoint(tr.last);
        const SplitMetrics m = score_split(model, test, opt.threads);
        AblationRow row{v.name, v.config, m.acc, m.auc, m.n};
        csv << ablation_csv_row(row) << '\n';
        csv.flush();
        rows.push_back(std::move(row));
    }
    return rows;
}

// ---------------------------------------------------------------------------
// gradient-check suite

struct GradcheckReport {
    std::string name;
    GradcheckResult result;
};

namespace suite_detail {

inline Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
    Tensor<double> t(std::move(shape));
    for (auto& v : t.values()) v = rng.uniform(lo, hi);
    return t;
}

inline void randomize(ParameterStore<double>& ps, Rng& rng, double lo, double hi) {
    for (std::size_t i = 0; i < ps.size(); ++i)
        for (auto& v : ps.value(i).values()) v = rng.uniform(lo, hi);
}

// Biases away from zero so no relu input sits exactly on its kink.
inline void jitter_biases(ParameterStore<double>& ps, Rng& rng) {
    for (std::size_t i = 0; i < ps.size(); ++i)
        if (ps.name(i).ends_with(".bias"))
            for (auto& v : ps.value(i).values()) v = rng.uniform(-0.1, 0.1);
}

inline ModelConfig tiny_model() {
    ModelConfig m;
    m.image_size = 32;
    m.stem_channels = 4;
    m.feature_dim = 6;
    m.n_stack = 1;
    m.patch_sides = ModelConfig::default_patch_sides(32);
    return m;
}

}  // namespace suite_detail

inline const std::vector<std::string>& gradcheck_names() {
    static const std::vector<std::string> names{"mst",      "ff",       "cmf",         "stem",
                                                "cls_head", "decoder",  "cls_loss",    "seg_loss",
                                                "con_loss", "bce_logits", "full_model"};
    return names;
}

/// Runs one named check in double precision.
inline GradcheckReport run_gradcheck(const std::string& name, std::uint64_t seed = 0) {
    using namespace suite_detail;
    const auto& names = gradcheck_names();
    const auto pos = std::find(names.begin(), names.end(), name);
    if (pos == names.end()) throw ConfigError("unknown gradient check '" + name + "'");
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(pos - names.begin())));
    const GridShape grid{4, 4, 3};
    GradcheckReport rep{name, {}};
    if (name == "mst") {
        ParameterStore<double> ps;
        MultiScaleTransformerBlock b(ps, "mst", grid, {4, 2, 1}, AttentionScale::paper, rng);
        randomize(ps, rng, -0.5, 0.5);
        rep.result = gradcheck(ps, {random_tensor(grid.shape(), rng)},
                               [&](auto& g, const auto& p, const auto& in) { return b.forward(g, p, in[0]); }, seed);
    } else if (name == "ff") {
        ParameterStore<double> ps;
        FrequencyFilterBlock b(ps, "ff", grid);
        randomize(ps, rng, -1.0, 1.0);
        rep.result = gradcheck(ps, {random_tensor(grid.shape(), rng)},
                               [&](auto& g, const auto& p, const auto& in) { return b.forward(g, p, in[0]); }, seed);
    } else if (name == "cmf") {
        ParameterStore<double> ps;
        CrossModalityFusionBlock b(ps, "cmf", grid, AttentionScale::paper, QuerySource::rgb, rng);
        randomize(ps, rng, -0.5, 0.5);
        rep.result = gradcheck(
            ps, {random_tensor(grid.shape(), rng), random_tensor(grid.shape(), rng)},
            [&](auto& g, const auto& p, const auto& in) { return b.forward(g, p, in[0], in[1]); }, seed);
    } else if (name == "stem" || name == "cls_head" || name == "decoder" || name == "full_model") {
        M2TRModel<double> model(tiny_model(), rng.next_u64());
        jitter_biases(model.params(), rng);
        const auto mc = model.config();
        const Shape image{mc.image_size, mc.image_size, 3};
        const Shape fmap{mc.grid_side(), mc.grid_side(), mc.stem_channels};
        GradcheckBuild build;
        Tensor<double> input;
        if (name == "stem") {
            input = random_tensor(image, rng, 0.0, 1.0);
            build = [&](auto& g, const auto&, const auto& in) { return model.stem(g, in[0]); };
        } else if (name == "cls_head") {
            input = random_tensor(fmap, rng);
            build = [&](auto& g, const auto&, const auto& in) {
                auto [f, logit] = model.classification_head(g, in[0]);
                return ops::linear_combination<double>({ops::sum(f), ops::sum(logit)}, {0.3, 1.0});
            };
        } else if (name == "decoder") {
            input = random_tensor(fmap, rng);
            build = [&](auto& g, const auto&, const auto& in) { return model.decoder(g, in[0]); };
        } else {
            input = random_tensor(image, rng, 0.0, 1.0);
            build = [&](auto& g, const auto&, const auto& in) {
                auto o = model.forward(g, in[0]);
                return ops::linear_combination<double>(
                    {ops::sum(o.probability), ops::sum(o.mask), ops::sum(o.feature)}, {1.0, 0.01, 0.1});
            };
        }
        rep.result = gradcheck(model.params(), {input}, build, seed, GradcheckOptions{1e-5, 6, true});
    } else if (name == "cls_loss") {
        ParameterStore<double> ps;
        const int y = static_cast<int>(rng.below(2));
        rep.result = gradcheck(ps, {random_tensor({1, 1}, rng, 0.05, 0.95)},
                               [&](auto&, const auto&, const auto& in) { return cls_loss(in[0], y); }, seed);
    } else if (name == "seg_loss") {
        ParameterStore<double> ps;
        Tensor<double> truth({8, 8, 1});
        for (auto& v : truth.values()) v = double(rng.below(2));
        rep.result = gradcheck(ps, {random_tensor({8, 8, 1}, rng, 0.05, 0.95)},
                               [&](auto&, const auto&, const auto& in) { return seg_loss(in[0], truth); }, seed);
    } else if (name == "con_loss") {
        ParameterStore<double> ps;
        const std::vector<int> labels{0, 1, 0, 1, 1, 0};
        rep.result =
            gradcheck(ps, {random_tensor({labels.size(), 5}, rng)},
                      [&](auto&, const auto&, const auto& in) { return contrastive_loss(in[0], labels); }, seed);
    } else if (name == "bce_logits") {
        ParameterStore<double> ps;
        Tensor<double> truth({8, 8, 1});
        for (auto& v : truth.values()) v = double(rng.below(2));
        rep.result = gradcheck(ps, {random_tensor({8, 8, 1}, rng, -4.0, 4.0)},
                               [&](auto&, const auto&, const auto& in) { return bce_logits_mean(in[0], truth); }, seed);
    }
    return rep;
}

inline std::vector<GradcheckReport> run_gradcheck_suite(std::uint64_t seed = 0) {
    std::vector<GradcheckReport> out;
    for (const auto& n : gradcheck_names()) out.push_back(run_gradcheck(n, seed));
    return out;
}

}  // namespace m2tr
