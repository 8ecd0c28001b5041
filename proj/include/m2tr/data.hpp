#pragma once

// Procedural forgery data: smooth face-like real images, four local
// manipulation recipes with exact region masks, and the on-disk dataset layout
// (images/<id>.tns, masks/<id>.tns, labels.csv, manifest.json).

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "m2tr/errors.hpp"
#include "m2tr/fft.hpp"
#include "m2tr/rng.hpp"
#include "m2tr/tensor.hpp"
#include "m2tr/tns.hpp"

namespace m2tr {

enum class RecipeKind { splice, color_shift, blur_patch, spectral_truncation };

inline constexpr std::array<RecipeKind, 4> kRecipeKinds = {RecipeKind::splice, RecipeKind::color_shift,
                                                           RecipeKind::blur_patch, RecipeKind::spectral_truncation};

inline std::string to_string(RecipeKind k) {
    switch (k) {
        case RecipeKind::splice: return "splice";
        case RecipeKind::color_shift: return "color-shift";
        case RecipeKind::blur_patch: return "blur-patch";
        case RecipeKind::spectral_truncation: return "spectral-truncation";
    }
    return "?";
}

inline RecipeKind recipe_kind_from_string(const std::string& s) {
    for (RecipeKind k : kRecipeKinds)
        if (to_string(k) == s) return k;
    throw DataError("unknown recipe kind '" + s + "'");
}

/// Ellipse (centre, semi-axes) or half-open integer rectangle [y0, y1) x [x0, x1).
struct Region {
    enum class Shape { ellipse, rect } shape = Shape::ellipse;
    double cy = 0, cx = 0, ry = 0, rx = 0;
    long y0 = 0, x0 = 0, y1 = 0, x1 = 0;

    bool contains(long y, long x) const {
        if (shape == Shape::rect) return y >= y0 && y < y1 && x >= x0 && x < x1;
        const double dy = (double(y) - cy) / ry, dx = (double(x) - cx) / rx;
        return dy * dy + dx * dx <= 1.0;
    }

    bool inside(std::size_t h, std::size_t w) const {
        if (shape == Shape::rect) return y0 >= 0 && x0 >= 0 && y1 <= long(h) && x1 <= long(w) && y0 < y1 && x0 < x1;
        return ry > 0 && rx > 0 && cy - ry >= 0 && cx - rx >= 0 && cy + ry <= double(h - 1) &&
               cx + rx <= double(w - 1);
    }
};

/// Intensity meaning per kind: splice opacity in (0, 1]; color-shift offset
/// magnitude in (0, 0.5]; blur sigma in pixels in (0, 4]; spectral-truncation
/// fraction of the frequency band removed in (0, 1).
struct ForgeryRecipe {
    RecipeKind kind = RecipeKind::splice;
    Region region;
    double intensity = 0.0;
    std::uint64_t seed = 0;  // donor face / channel directions
};

/// One image with its label and manipulation mask.
struct Sample {
    std::string id;
    Tensor<float> image;  // (H, W, 3) in [0, 1]
    Tensor<float> mask;   // (H, W) in {0, 1}
    int label = 0;
    std::string recipe_kind = "real";
};

inline constexpr double kMinMaskFraction = 0.01;
inline constexpr double kMaxMaskFraction = 0.60;
inline constexpr long kFeatherRadius = 2;

namespace data_detail {

inline float clamp01(double v) { return static_cast<float>(std::clamp(v, 0.0, 1.0)); }

inline void fill_ellipse(Tensor<double>& img, double cy, double cx, double ry, double rx, const double rgb[3],
                         double soft = 1.0) {
    const std::size_t h = img.dim(0), w = img.dim(1);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double dy = (double(y) - cy) / ry, dx = (double(x) - cx) / rx;
            const double r = std::sqrt(dy * dy + dx * dx);
            // soft edge about one pixel wide
            const double a = std::clamp((1.0 - r) * std::min(ry, rx) / soft + 0.5, 0.0, 1.0);
            if (a <= 0.0) continue;
            for (std::size_t c = 0; c < 3; ++c) img.at(y, x, c) = (1 - a) * img.at(y, x, c) + a * rgb[c];
        }
}

inline Tensor<float> to_float01(const Tensor<double>& img) {
    Tensor<float> out(img.shape());
    for (std::size_t i = 0; i < img.size(); ++i) out[i] = clamp01(img[i]);
    return out;
}

inline Tensor<float> gaussian_blur(const Tensor<float>& img, double sigma) {
    const long rad = std::max<long>(1, static_cast<long>(std::ceil(3.0 * sigma)));
    std::vector<double> k(2 * rad + 1);
    double s = 0;
    for (long i = -rad; i <= rad; ++i) s += (k[i + rad] = std::exp(-0.5 * double(i * i) / (sigma * sigma)));
    for (auto& v : k) v /= s;
    const long h = long(img.dim(0)), w = long(img.dim(1));
    const std::size_t c = img.dim(2);
    auto reflect = [](long i, long n) {
        while (i < 0 || i >= n) i = i < 0 ? -i - 1 : 2 * n - i - 1;
        return i;
    };
    Tensor<double> tmp(img.shape());
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0;
                for (long i = -rad; i <= rad; ++i) acc += k[i + rad] * img.at(y, reflect(x + i, w), ch);
                tmp.at(y, x, ch) = acc;
            }
    Tensor<float> out(img.shape());
    for (long y = 0; y < h; ++y)
        for (long x = 0; x < w; ++x)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0;
                for (long i = -rad; i <= rad; ++i) acc += k[i + rad] * tmp.at(reflect(y + i, h), x, ch);
                out.at(y, x, ch) = clamp01(acc);
            }
    return out;
}

}  // namespace data_detail

/// Smooth synthetic face: low-frequency background, skin ellipse with eyes and
/// mouth, then per-image Gaussian noise. Pure function of (seed, h, w).
inline Sample generate_real(std::uint64_t seed, std::size_t h, std::size_t w) {
    if (h < 16 || w < 16) throw ConfigError("generate_real: image must be at least 16x16");
    Rng rng(seed);
    Tensor<double> img({h, w, 3});
    double base[3], gy[3], gx[3], amp[3];
    for (int c = 0; c < 3; ++c) {
        base[c] = rng.uniform(0.2, 0.8);
        gy[c] = rng.uniform(-0.25, 0.25);
        gx[c] = rng.uniform(-0.25, 0.25);
        amp[c] = rng.uniform(0.0, 0.08);
    }
    const double fy = rng.uniform(0.5, 2.0), fx = rng.uniform(0.5, 2.0), ph = rng.uniform(0, 6.283);
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
            const double v = double(y) / double(h - 1) - 0.5, u = double(x) / double(w - 1) - 0.5;
            const double wave = std::sin(6.283 * (fy * v + fx * u) + ph);
            for (int c = 0; c < 3; ++c) img.at(y, x, c) = base[c] + gy[c] * v + gx[c] * u + amp[c] * wave;
        }

    const double H = double(h), W = double(w);
    const double cy = H * rng.uniform(0.42, 0.58), cx = W * rng.uniform(0.42, 0.58);
    const double ry = H * rng.uniform(0.28, 0.38), rx = W * rng.uniform(0.20, 0.30);
    const double skin[3] = {rng.uniform(0.55, 0.95), rng.uniform(0.4, 0.75), rng.uniform(0.3, 0.6)};
    data_detail::fill_ellipse(img, cy, cx, ry, rx, skin);
    const double eye_dy = ry * rng.uniform(0.15, 0.3), eye_dx = rx * rng.uniform(0.3, 0.45);
    const double eye_r = std::max(1.0, rx * rng.uniform(0.1, 0.16));
    const double eye[3] = {rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3), rng.uniform(0.05, 0.3)};
    data_detail::fill_ellipse(img, cy - eye_dy, cx - eye_dx, eye_r * 0.7, eye_r, eye);
    data_detail::fill_ellipse(img, cy - eye_dy, cx + eye_dx, eye_r * 0.7, eye_r, eye);
    const double lips[3] = {rng.uniform(0.5, 0.8), rng.uniform(0.1, 0.35), rng.uniform(0.15, 0.4)};
    data_detail::fill_ellipse(img, cy + ry * rng.uniform(0.4, 0.55), cx, std::max(1.0, ry * 0.08),
                              rx * rng.uniform(0.3, 0.5), lips);

    const double sigma = rng.uniform(0.01, 0.03);
    for (auto& v : img.values()) v += sigma * rng.normal();

    Sample s;
    s.image = data_detail::to_float01(img);
    s.mask = Tensor<float>({h, w});
    s.label = 0;
    return s;
}

/// Region indicator as a {0,1} mask (H, W).
inline Tensor<float> region_mask(const Region& r, std::size_t h, std::size_t w) {
    Tensor<float> m({h, w});
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) m.at(y, x) = r.contains(long(y), long(x)) ? 1.0f : 0.0f;
    return m;
}

/// Kept frequency half-widths (kh, kw) of a spectral-truncation recipe on an
/// h x w rectangle; a bin (u, v) survives iff min(u, h-u) <= kh and min(v, w-v) <= kw.
inline std::pair<std::size_t, std::size_t> truncation_cutoff(double intensity, std::size_t h, std::size_t w) {
    auto keep = [&](std::size_t n) {
        return static_cast<std::size_t>(std::floor(double(n / 2) * (1.0 - intensity)));
    };
    return {keep(h), keep(w)};
}

inline void validate_recipe(const ForgeryRecipe& r, std::size_t h, std::size_t w) {
    if (!(r.intensity > 0.0))
        throw DataError(to_string(r.kind) + " recipe with non-positive intensity is degenerate");
    const double hi = r.kind == RecipeKind::splice        ? 1.0
                      : r.kind == RecipeKind::color_shift ? 0.5
                      : r.kind == RecipeKind::blur_patch  ? 4.0
                                                          : 1.0;
    if (r.intensity > hi || (r.kind == RecipeKind::spectral_truncation && r.intensity >= 1.0))
        throw DataError(to_string(r.kind) + " intensity " + std::to_string(r.intensity) + " out of range");
    if (!r.region.inside(h, w)) throw DataError("forgery region lies outside the image");
    if (r.kind == RecipeKind::spectral_truncation) {
        if (r.region.shape != Region::Shape::rect) throw DataError("spectral truncation needs a rectangular region");
        const auto [kh, kw] = truncation_cutoff(r.intensity, r.region.y1 - r.region.y0, r.region.x1 - r.region.x0);
        if (kh >= std::size_t(r.region.y1 - r.region.y0) / 2 && kw >= std::size_t(r.region.x1 - r.region.x0) / 2)
            throw DataError("spectral truncation removes no frequency bins (intensity too small)");
    }
}

/// Applies a recipe to a real sample. The result differs from `base` only
/// inside the region, plus the feather band for splices.
inline Sample generate_fake(const Sample& base, const ForgeryRecipe& recipe) {
    if (base.label != 0) throw DataError("generate_fake needs a real base sample");
    const std::size_t h = base.image.dim(0), w = base.image.dim(1);
    validate_recipe(recipe, h, w);
    Sample out;
    out.image = base.image;
    out.mask = region_mask(recipe.region, h, w);
    out.label = 1;
    out.recipe_kind = to_string(recipe.kind);
    const double frac = out.mask.sum() / double(h * w);
    if (frac < kMinMaskFraction || frac > kMaxMaskFraction)
        throw DataError("forgery region covers " + std::to_string(frac * 100) + "% of the image, outside [1%, 60%]");

    const Region& reg = recipe.region;
    Rng rng(recipe.seed);
    switch (recipe.kind) {
        case RecipeKind::splice: {
            const Sample donor = generate_real(recipe.seed, h, w);
            for (long y = 0; y < long(h); ++y)
                for (long x = 0; x < long(w); ++x) {
                    // linear ramp 1, 2/3, 1/3 at distance 0, 1, 2 from the region
                    double best = 1e9;
                    for (long dy = -kFeatherRadius; dy <= kFeatherRadius; ++dy)
                        for (long dx = -kFeatherRadius; dx <= kFeatherRadius; ++dx)
                            if (reg.contains(y + dy, x + dx)) best = std::min(best, std::sqrt(double(dy * dy + dx * dx)));
                    const double a = recipe.intensity * std::max(0.0, 1.0 - best / double(kFeatherRadius + 1));
                    if (a <= 0.0) continue;
                    for (std::size_t c = 0; c < 3; ++c)
                        out.image.at(y, x, c) = data_detail::clamp01((1 - a) * base.image.at(y, x, c) +
                                                                     a * donor.image.at(y, x, c));
                }
            break;
        }
        case RecipeKind::color_shift: {
            double dir[3], norm = 0;
            for (auto& d : dir) norm += (d = rng.normal()) * d;
            norm = std::sqrt(norm);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    if (out.mask.at(y, x) > 0)
                        for (std::size_t c = 0; c < 3; ++c)
                            out.image.at(y, x, c) =
                                data_detail::clamp01(base.image.at(y, x, c) + recipe.intensity * dir[c] / norm);
            break;
        }
        case RecipeKind::blur_patch: {
            const Tensor<float> blurred = data_detail::gaussian_blur(base.image, recipe.intensity);
            for (std::size_t y = 0; y < h; ++y)
                for (std::size_t x = 0; x < w; ++x)
                    if (out.mask.at(y, x) > 0)
                        for (std::size_t c = 0; c < 3; ++c) out.image.at(y, x, c) = blurred.at(y, x, c);
            break;
        }
        case RecipeKind::spectral_truncation: {
            const std::size_t rh = std::size_t(reg.y1 - reg.y0), rw = std::size_t(reg.x1 - reg.x0);
            Tensor<double> patch({rh, rw, 3});
            for (std::size_t y = 0; y < rh; ++y)
                for (std::size_t x = 0; x < rw; ++x)
                    for (std::size_t c = 0; c < 3; ++c) patch.at(y, x, c) = base.image.at(reg.y0 + y, reg.x0 + x, c);
            auto spec = fft2d(patch);
            const auto [kh, kw] = truncation_cutoff(recipe.intensity, rh, rw);
            for (std::size_t u = 0; u < rh; ++u)
                for (std::size_t v = 0; v < rw; ++v)
                    if (std::min(u, rh - u) > kh || std::min(v, rw - v) > kw)
                        for (std::size_t c = 0; c < 3; ++c) spec.re.at(u, v, c) = spec.im.at(u, v, c) = 0.0;
            const Tensor<double> low = ifft2d(spec);
            // shrink about the per-channel mean (the DC bin) until the patch fits in [0, 1]
            for (std::size_t c = 0; c < 3; ++c) {
                double mean = 0;
                for (std::size_t i = 0; i < rh * rw; ++i) mean += low[i * 3 + c];
                mean /= double(rh * rw);
                double s = 1.0;
                for (std::size_t i = 0; i < rh * rw; ++i) {
                    const double d = low[i * 3 + c] - mean;
                    if (d > 0 && mean + d > 1.0) s = std::min(s, (1.0 - mean) / d);
                    if (d < 0 && mean + d < 0.0) s = std::min(s, -mean / d);
                }
                for (std::size_t y = 0; y < rh; ++y)
                    for (std::size_t x = 0; x < rw; ++x)
                        out.image.at(reg.y0 + y, reg.x0 + x, c) =
                            static_cast<float>(mean + s * (low.at(y, x, c) - mean));
            }
            break;
        }
    }
    return out;
}

/// Draws a recipe of the given kind with a region centred on the face area.
inline ForgeryRecipe random_recipe(RecipeKind kind, Rng& rng, std::size_t h, std::size_t w) {
    ForgeryRecipe r;
    r.kind = kind;
    r.seed = rng.next_u64();
    const double H = double(h), W = double(w);
    if (kind == RecipeKind::spectral_truncation) {
        const long rh = long(std::round(H * rng.uniform(0.25, 0.5))), rw = long(std::round(W * rng.uniform(0.25, 0.5)));
        r.region.shape = Region::Shape::rect;
        r.region.y0 = long(rng.below(std::uint64_t(long(h) - rh + 1)));
        r.region.x0 = long(rng.below(std::uint64_t(long(w) - rw + 1)));
        r.region.y1 = r.region.y0 + rh;
        r.region.x1 = r.region.x0 + rw;
        r.intensity = rng.uniform(0.5, 0.85);
    } else {
        r.region.ry = H * rng.uniform(0.12, 0.28);
        r.region.rx = W * rng.uniform(0.12, 0.28);
        r.region.cy = rng.uniform(r.region.ry, H - 1 - r.region.ry);
        r.region.cx = rng.uniform(r.region.rx, W - 1 - r.region.rx);
        r.intensity = kind == RecipeKind::splice        ? rng.uniform(0.7, 1.0)
                      : kind == RecipeKind::color_shift ? rng.uniform(0.08, 0.25)
                                                        : rng.uniform(1.0, 2.5);
    }
    return r;
}

// ---------------------------------------------------------------------------
// dataset on disk

inline constexpr int kDatasetFormatVersion = 1;

struct DatasetEntry {
    std::string id;
    std::string path_image;  // relative to the dataset directory
    std::string path_mask;
    int label = 0;
    std::string recipe_kind;
};

struct Manifest {
    std::filesystem::path dir;
    std::uint64_t seed = 0;
    std::size_t image_size = 0;
    std::size_t n_real = 0, n_fake = 0;
    std::vector<DatasetEntry> entries;
};

inline const char* kLabelsHeader = "id,path_image,path_mask,label,recipe_kind";

inline nlohmann::json recipe_ranges_json() {
    return {{"splice", {{"intensity", {0.7, 1.0}}, {"semi_axis_fraction", {0.12, 0.28}}}},
            {"color-shift", {{"intensity", {0.08, 0.25}}, {"semi_axis_fraction", {0.12, 0.28}}}},
            {"blur-patch", {{"sigma", {1.0, 2.5}}, {"semi_axis_fraction", {0.12, 0.28}}}},
            {"spectral-truncation", {{"band_removed", {0.5, 0.85}}, {"side_fraction", {0.25, 0.5}}}},
            {"feather_radius", kFeatherRadius}};
}

/// Sample `index` of a dataset: reals are indices [0, n_real), fakes follow and
/// cycle through the four recipe kinds.
inline Sample dataset_sample(std::uint64_t seed, std::size_t index, std::size_t n_real, std::size_t size) {
    char id[32];
    if (index < n_real) {
        Sample s = generate_real(derive_seed(seed, index), size, size);
        std::snprintf(id, sizeof id, "real_%06zu", index);
        s.id = id;
        return s;
    }
    const std::size_t j = index - n_real;
    Rng rng(derive_seed(seed, index));
    const Sample base = generate_real(rng.next_u64(), size, size);
    const ForgeryRecipe recipe = random_recipe(kRecipeKinds[j % kRecipeKinds.size()], rng, size, size);
    Sample s = generate_fake(base, recipe);
    std::snprintf(id, sizeof id, "fake_%06zu", j);
    s.id = id;
    return s;
}

/// Writes a dataset directory and returns its manifest. Byte-identical for
/// identical arguments.
inline Manifest build_dataset(std::size_t n_real, std::size_t n_fake, std::uint64_t seed,
                              const std::filesystem::path& out_dir, std::size_t image_size = 64) {
    namespace fs = std::filesystem;
    if (n_real + n_fake == 0) throw ConfigError("build_dataset: empty dataset requested");
    fs::create_directories(out_dir / "images");
    fs::create_directories(out_dir / "masks");
    Manifest m{out_dir, seed, image_size, n_real, n_fake, {}};
    std::ofstream csv(out_dir / "labels.csv", std::ios::binary);
    csv << kLabelsHeader << '\n';
    for (std::size_t i = 0; i < n_real + n_fake; ++i) {
        const Sample s = dataset_sample(seed, i, n_real, image_size);
        DatasetEntry e{s.id, "images/" + s.id + ".tns", "masks/" + s.id + ".tns", s.label, s.recipe_kind};
        tns::save(out_dir / e.path_image, s.image);
        tns::save(out_dir / e.path_mask, s.mask);
        csv << e.id << ',' << e.path_image << ',' << e.path_mask << ',' << e.label << ',' << e.recipe_kind << '\n';
        m.entries.push_back(std::move(e));
    }
    if (!csv) throw DataError("failed writing " + (out_dir / "labels.csv").string());
    nlohmann::json j = {{"format_version", kDatasetFormatVersion},
                        {"seed", seed},
                        {"image_size", image_size},
                        {"n_real", n_real},
                        {"n_fake", n_fake},
                        {"recipe_kinds", {"splice", "color-shift", "blur-patch", "spectral-truncation"}},
                        {"recipe_ranges", recipe_ranges_json()}};
    std::ofstream(out_dir / "manifest.json", std::ios::binary) << j.dump(2) << '\n';
    return m;
}

/// Reads and cross-checks labels.csv against manifest.json.
inline Manifest load_manifest(const std::filesystem::path& dir) {
    namespace fs = std::filesystem;
    std::ifstream mf(dir / "manifest.json");
    if (!mf) throw DataError("no manifest.json in " + dir.string());
    nlohmann::json j;
    try {
        mf >> j;
    } catch (const nlohmann::json::exception& e) {
        throw DataError("malformed manifest.json: " + std::string(e.what()));
    }
    if (j.value("format_version", -1) != kDatasetFormatVersion)
        throw DataError("unsupported dataset format version in " + dir.string());
    Manifest m;
    m.dir = dir;
    m.seed = j.at("seed").get<std::uint64_t>();
    m.image_size = j.at("image_size").get<std::size_t>();
    const auto n_real = j.at("n_real").get<std::size_t>(), n_fake = j.at("n_fake").get<std::size_t>();

    std::ifstream csv(dir / "labels.csv");
    if (!csv) throw DataError("no labels.csv in " + dir.string());
    std::string line;
    std::getline(csv, line);
    if (line != kLabelsHeader) throw DataError("labels.csv header mismatch: '" + line + "'");
    std::size_t row = 1;
    while (std::getline(csv, line)) {
        ++row;
        if (line.empty()) continue;
        std::vector<std::string> f;
        std::stringstream ss(line);
        for (std::string cell; std::getline(ss, cell, ',');) f.push_back(cell);
        if (f.size() != 5) throw DataError("labels.csv row " + std::to_string(row) + ": expected 5 columns");
        DatasetEntry e{f[0], f[1], f[2], 0, f[4]};
        if (f[3] != "0" && f[3] != "1") throw DataError("labels.csv row " + std::to_string(row) + ": bad label");
        e.label = f[3] == "1";
        if ((e.label == 0) != (e.recipe_kind == "real"))
            throw DataError("labels.csv row " + std::to_string(row) + ": label and recipe kind disagree");
        (e.label ? m.n_fake : m.n_real)++;
        m.entries.push_back(std::move(e));
    }
    if (m.n_real != n_real || m.n_fake != n_fake)
        throw DataError("dataset/label mismatch: manifest lists " + std::to_string(n_real) + " real / " +
                        std::to_string(n_fake) + " fake, labels.csv has " + std::to_string(m.n_real) + " / " +
                        std::to_string(m.n_fake));
    return m;
}

/// Loads one entry; validates shapes against the manifest image size.
inline Sample load_sample(const Manifest& m, std::size_t index) {
    const DatasetEntry& e = m.entries.at(index);
    Sample s;
    s.id = e.id;
    s.label = e.label;
    s.recipe_kind = e.recipe_kind;
    s.image = tns::load<float>(m.dir / e.path_image);
    s.mask = tns::load<float>(m.dir / e.path_mask);
    if (s.image.shape() != Shape{m.image_size, m.image_size, 3} || s.mask.shape() != Shape{m.image_size, m.image_size})
        throw DataError("sample " + e.id + " has the wrong shape for image_size " + std::to_string(m.image_size));
    return s;
}

/// Entry indices of one training epoch: each real repeated ceil(n_fake / n_real)
/// times, each fake once, shuffled by `seed`.
inline std::vector<std::size_t> balanced_epoch(const Manifest& m, std::uint64_t seed) {
    std::size_t reps = 1;
    if (m.n_real > 0 && m.n_fake > m.n_real) reps = (m.n_fake + m.n_real - 1) / m.n_real;
    std::vector<std::size_t> order;
    order.reserve(m.n_real * reps + m.n_fake);
    for (std::size_t i = 0; i < m.entries.size(); ++i)
        for (std::size_t r = 0; r < (m.entries[i].label == 0 ? reps : 1); ++r) order.push_back(i);
    Rng rng(seed);
    rng.shuffle(order.begin(), order.end());
    return order;
}

}  // namespace m2tr
