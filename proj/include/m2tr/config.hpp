#pragma once

// Run configuration. JSON keys are exactly the field names below.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "m2tr/errors.hpp"
#include "m2tr/network.hpp"

namespace m2tr {

struct Config {
    std::size_t image_size = 64;
    std::size_t stem_channels = 32;
    std::size_t feature_dim = 128;
    std::size_t n_stack = 4;
    std::vector<std::size_t> patch_sides{16, 8, 4, 2};
    double lambda_seg = 1.0;
    double lambda_con = 0.001;
    double lr = 1e-4;
    std::size_t lr_decay_every = 40;
    double lr_decay_factor = 0.1;
    std::size_t batch_size = 24;
    std::size_t epochs = 90;
    std::uint64_t seed = 0;
    bool ablate_mt = false;
    bool ablate_ff = false;
    bool ablate_cmf = false;
    AttentionScale attention_scale = AttentionScale::paper;
    QuerySource cmf_query_source = QuerySource::rgb;
    std::size_t frames_per_clip = 16;

    /// 64x64, batch 24, 10 epochs.
    static Config desk() {
        Config c;
        c.epochs = 10;
        return c;
    }

    ModelConfig model() const {
        ModelConfig m;
        m.image_size = image_size;
        m.stem_channels = stem_channels;
        m.feature_dim = feature_dim;
        m.n_stack = n_stack;
        m.patch_sides = patch_sides;
        m.ablate_mt = ablate_mt;
        m.ablate_ff = ablate_ff;
        m.ablate_cmf = ablate_cmf;
        m.attention_scale = attention_scale;
        m.cmf_query_source = cmf_query_source;
        return m;
    }

    void validate() const {
        auto positive = [](bool ok, const char* name) {
            if (!ok) throw ConfigError(std::string(name) + " must be positive");
        };
        positive(batch_size > 0, "batch_size");
        positive(epochs > 0, "epochs");
        positive(lr > 0 && std::isfinite(lr), "lr");
        positive(lr_decay_every > 0, "lr_decay_every");
        positive(lr_decay_factor > 0 && std::isfinite(lr_decay_factor), "lr_decay_factor");
        positive(frames_per_clip > 0, "frames_per_clip");
        if (!(lambda_seg >= 0) || !(lambda_con >= 0)) throw ConfigError("loss weights must be nonnegative");
        model().validate();
    }

    /// lr0 * factor^floor(epoch / every).
    double lr_at(std::size_t epoch) const {
        return lr * std::pow(lr_decay_factor, static_cast<double>(epoch / lr_decay_every));
    }
};

inline std::string to_string(AttentionScale s) { return s == AttentionScale::paper ? "paper" : "sqrt_dim"; }
inline std::string to_string(QuerySource s) { return s == QuerySource::rgb ? "rgb" : "freq"; }

/// Canonical form: fixed key order, used for hashing and checkpoints.
inline nlohmann::ordered_json to_json(const Config& c) {
    return {{"image_size", c.image_size},
            {"stem_channels", c.stem_channels},
            {"feature_dim", c.feature_dim},
            {"n_stack", c.n_stack},
            {"patch_sides", c.patch_sides},
            {"lambda_seg", c.lambda_seg},
            {"lambda_con", c.lambda_con},
            {"lr", c.lr},
            {"lr_decay_every", c.lr_decay_every},
            {"lr_decay_factor", c.lr_decay_factor},
            {"batch_size", c.batch_size},
            {"epochs", c.epochs},
            {"seed", c.seed},
            {"ablate_mt", c.ablate_mt},
            {"ablate_ff", c.ablate_ff},
            {"ablate_cmf", c.ablate_cmf},
            {"attention_scale", to_string(c.attention_scale)},
            {"cmf_query_source", to_string(c.cmf_query_source)},
            {"frames_per_clip", c.frames_per_clip}};
}

/// Overlays the keys present in `j` onto `base`. Unknown keys and wrong types
/// are configuration errors. If image_size is given without patch_sides, the
/// default sides for that size are used.
inline Config config_from_json(const nlohmann::json& j, Config base = {}) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    try {
        for (const auto& [key, v] : j.items()) {
            if (key == "image_size") base.image_size = v.get<std::size_t>();
            else if (key == "stem_channels") base.stem_channels = v.get<std::size_t>();
            else if (key == "feature_dim") base.feature_dim = v.get<std::size_t>();
            else if (key == "n_stack") base.n_stack = v.get<std::size_t>();
            else if (key == "patch_sides") base.patch_sides = v.get<std::vector<std::size_t>>();
            else if (key == "lambda_seg") base.lambda_seg = v.get<double>();
            else if (key == "lambda_con") base.lambda_con = v.get<double>();
            else if (key == "lr") base.lr = v.get<double>();
            else if (key == "lr_decay_every") base.lr_decay_every = v.get<std::size_t>();
            else if (key == "lr_decay_factor") base.lr_decay_factor = v.get<double>();
            else if (key == "batch_size") base.batch_size = v.get<std::size_t>();
            else if (key == "epochs") base.epochs = v.get<std::size_t>();
            else if (key == "seed") base.seed = v.get<std::uint64_t>();
            else if (key == "ablate_mt") base.ablate_mt = v.get<bool>();
            else if (key == "ablate_ff") base.ablate_ff = v.get<bool>();
            else if (key == "ablate_cmf") base.ablate_cmf = v.get<bool>();
            else if (key == "attention_scale") {
                const auto s = v.get<std::string>();
                if (s != "paper" && s != "sqrt_dim") throw ConfigError("attention_scale must be paper or sqrt_dim");
                base.attention_scale = s == "paper" ? AttentionScale::paper : AttentionScale::sqrt_dim;
            } else if (key == "cmf_query_source") {
                const auto s = v.get<std::string>();
                if (s != "rgb" && s != "freq") throw ConfigError("cmf_query_source must be rgb or freq");
                base.cmf_query_source = s == "rgb" ? QuerySource::rgb : QuerySource::freq;
            } else if (key == "frames_per_clip") base.frames_per_clip = v.get<std::size_t>();
            else throw ConfigError("unknown config key '" + key + "'");
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }
    if (j.contains("image_size") && !j.contains("patch_sides"))
        base.patch_sides = ModelConfig::default_patch_sides(base.image_size);
    base.validate();
    return base;
}

inline Config load_config(const std::filesystem::path& path, Config base = {}) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot read config " + path.string());
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    return config_from_json(j, base);
}

/// FNV-1a 64 of the canonical JSON, as 16 hex digits.
inline std::string config_hash(const Config& c) {
    const std::string s = to_json(c).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : s) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace m2tr
