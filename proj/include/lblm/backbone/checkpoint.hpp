#pragma once

#include "lblm/backbone/model.hpp"
#include "lblm/diff/optim.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>

namespace lblm::backbone {

enum class Stage : std::uint8_t { init = 0, mstp = 1, astp = 2, finetuned = 3 };
std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view s);

inline constexpr std::uint16_t kCheckpointVersion = 1;

// Unit of persistence between pretraining, finetuning and evaluation.
// `config` holds {"model": ModelConfig, ...} plus any classifier section;
// `metadata` holds provenance (ancestor hash, config hash, loss log).
//
// Byte layout, little-endian, magic "LBLC":
//   u16 version, u8 stage, string config JSON, string metadata JSON,
//   u32 tensor count, per tensor: string name, u8 rank, u32 dims[rank], f32 data,
//   u64 optimizer step, u32 moment count, per moment: string name, u64 n, f32 m[n], f32 v[n].
// Strings are u64 length + bytes. Values are float32 on disk; make_checkpoint
// rounds in memory so a save/load roundtrip is lossless.
struct Checkpoint {
    Stage stage = Stage::init;
    nlohmann::json config;
    nlohmann::json metadata = nlohmann::json::object();
    diff::ParamStore params;
    diff::OptimState optim;

    ModelConfig model_config() const;
    // Hash of stage, config and tensor payload (metadata excluded).
    std::uint64_t content_hash() const;
};

Checkpoint make_checkpoint(Stage stage, nlohmann::json config, diff::ParamStore params, diff::OptimState optim = {},
                           nlohmann::json metadata = nlohmann::json::object());

std::vector<char> encode_checkpoint(const Checkpoint& c);
Checkpoint decode_checkpoint(std::vector<char> bytes);
void save_checkpoint(const Checkpoint& c, const std::filesystem::path& path);
Checkpoint load_checkpoint(const std::filesystem::path& path);

// Rounds every value (and moment) to the nearest float32.
void round_to_float(diff::ParamStore& ps);

}  // namespace lblm::backbone
