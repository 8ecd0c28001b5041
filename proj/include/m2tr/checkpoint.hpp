#pragma once

// Binary checkpoint: "M2TR", u32 version, length-prefixed canonical config JSON,
// named parameters (u32 name length, UTF-8 name, u8 rank, u32 dims, f32 payload),
// Adam step count and moments, epoch counter, RNG state. Little-endian throughout.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "json.hpp"
#include "m2tr/config.hpp"
#include "m2tr/errors.hpp"
#include "m2tr/network.hpp"
#include "m2tr/optim.hpp"
#include "m2tr/tns.hpp"

namespace m2tr {

inline constexpr char kCheckpointMagic[4] = {'M', '2', 'T', 'R'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
    Config config;
    ParameterStore<float> params;
    std::uint64_t adam_steps = 0;
    std::vector<Tensor<float>> adam_m, adam_v;
    std::uint32_t epoch = 0;
    std::string rng_state;
};

namespace ckpt_detail {

inline void put_string(std::ostream& os, const std::string& s) {
    tns::detail::put_u32(os, static_cast<std::uint32_t>(s.size()));
    os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& is, std::size_t limit = 1u << 26) {
    const std::uint32_t n = tns::detail::get_u32(is);
    if (n > limit) throw DataError("checkpoint: implausible string length");
    std::string s(n, '\0');
    if (!is.read(s.data(), n)) throw DataError("checkpoint: truncated string");
    return s;
}

inline void put_tensor(std::ostream& os, const Tensor<float>& t) {
    os.put(static_cast<char>(t.rank()));
    tns::write_dims_and_payload(os, t);
}

inline Tensor<float> get_tensor(std::istream& is) {
    const int rank = is.get();
    if (rank <= 0) throw DataError("checkpoint: bad tensor rank");
    return tns::read_dims_and_payload<float>(is, static_cast<std::size_t>(rank));
}

}  // namespace ckpt_detail

inline void save_checkpoint(const std::filesystem::path& path, const Checkpoint& c) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot write checkpoint " + path.string());
    os.write(kCheckpointMagic, 4);
    tns::detail::put_u32(os, kCheckpointVersion);
    ckpt_detail::put_string(os, to_json(c.config).dump());
    tns::detail::put_u32(os, static_cast<std::uint32_t>(c.params.size()));
    for (std::size_t i = 0; i < c.params.size(); ++i) {
        ckpt_detail::put_string(os, c.params.name(i));
        ckpt_detail::put_tensor(os, c.params.value(i));
    }
    const bool has_adam = !c.adam_m.empty();
    if (has_adam && (c.adam_m.size() != c.params.size() || c.adam_v.size() != c.params.size()))
        throw ContractError("checkpoint: optimizer moments do not match parameters");
    tns::detail::put_u32(os, static_cast<std::uint32_t>(c.adam_steps & 0xffffffffu));
    tns::detail::put_u32(os, static_cast<std::uint32_t>(c.adam_steps >> 32));
    os.put(has_adam ? 1 : 0);
    if (has_adam)
        for (std::size_t i = 0; i < c.params.size(); ++i) {
            ckpt_detail::put_tensor(os, c.adam_m[i]);
            ckpt_detail::put_tensor(os, c.adam_v[i]);
        }
    tns::detail::put_u32(os, c.epoch);
    ckpt_detail::put_string(os, c.rng_state);
    if (!os) throw DataError("failed writing checkpoint " + path.string());
}

inline Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot read checkpoint " + path.string());
    char magic[4] = {};
    is.read(magic, 4);
    if (!is || std::memcmp(magic, kCheckpointMagic, 4) != 0)
        throw DataError(path.string() + " is not an M2TR checkpoint (bad magic)");
    const std::uint32_t version = tns::detail::get_u32(is);
    if (version != kCheckpointVersion)
        throw DataError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kCheckpointVersion) + ")");
    Checkpoint c;
    try {
        c.config = config_from_json(nlohmann::json::parse(ckpt_detail::get_string(is)));
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("checkpoint config: ") + e.what());
    }
    const std::uint32_t n = tns::detail::get_u32(is);
    for (std::uint32_t i = 0; i < n; ++i) {
        std::string name = ckpt_detail::get_string(is);
        c.params.add(std::move(name), ckpt_detail::get_tensor(is));
    }
    const std::uint64_t lo = tns::detail::get_u32(is), hi = tns::detail::get_u32(is);
    c.adam_steps = lo | (hi << 32);
    const int has_adam = is.get();
    if (has_adam == 1)
        for (std::uint32_t i = 0; i < n; ++i) {
            c.adam_m.push_back(ckpt_detail::get_tensor(is));
            c.adam_v.push_back(ckpt_detail::get_tensor(is));
        }
    else if (has_adam != 0)
        throw DataError("checkpoint: truncated optimizer section");
    c.epoch = tns::detail::get_u32(is);
    c.rng_state = ckpt_detail::get_string(is);
    return c;
}

/// Model with the checkpoint's architecture and weights.
inline M2TRModel<float> model_from_checkpoint(const Checkpoint& c) {
    M2TRModel<float> model(c.config.model(), 0);
    model.params().assign_from(c.params);
    return model;
}

inline Checkpoint make_checkpoint(const Config& cfg, const M2TRModel<float>& model, const Adam<float>* opt,
                                  std::uint32_t epoch, const std::string& rng_state) {
    Checkpoint c;
    c.config = cfg;
    c.params = model.params();
    if (opt) {
        c.adam_steps = opt->steps();
        c.adam_m = opt->first_moments();
        c.adam_v = opt->second_moments();
    }
    c.epoch = epoch;
    c.rng_state = rng_state;
    return c;
}

}  // namespace m2tr
