#pragma once

#include "lblm/signal/synth.hpp"
#include "lblm/signal/types.hpp"

#include <filesystem>
#include <optional>
#include <vector>

namespace lblm::signal {

inline constexpr std::uint16_t kDatasetVersion = 1;
inline constexpr std::uint16_t kSegmentFileVersion = 1;

// Little-endian container, magic "LBLD":
//   u16 version, u32 record count, then per record
//   u16 subject, u16 session, u16 C, u64 T, f32 fs, u32 trial count,
//   trials as (u64 start, u8 word, u8 semantic, u8 condition),
//   C·T float32 samples, row-major by channel.
// Samples are stored as float32; values that are not float-representable are rounded.
std::vector<char> encode_dataset(const std::vector<EegRecording>& recs);
std::vector<EegRecording> decode_dataset(std::vector<char> bytes);

void write_dataset(const std::vector<EegRecording>& recs, const std::filesystem::path& path);
std::vector<EegRecording> read_dataset(const std::filesystem::path& path);

// "<stem>.meta.json" next to the dataset file.
std::filesystem::path sidecar_path(const std::filesystem::path& dataset_path);
// extra keys (e.g. a config hash) are merged into the sidecar object.
void write_sidecar(const std::filesystem::path& dataset_path, const GeneratorSpec& spec, std::uint64_t seed,
                   const nlohmann::json& extra = nlohmann::json::object());

// Preprocessed segment container, magic "LBLS":
//   u16 version, u32 count, then per segment
//   u16 subject, u16 session, u16 C, u32 L, f32 fs, u8 band, i8 word, i8 semantic, u8 condition,
//   C·L float32 samples.
std::vector<char> encode_segments(const std::vector<TrialSegment>& segs);
std::vector<TrialSegment> decode_segments(std::vector<char> bytes);
void write_segments(const std::vector<TrialSegment>& segs, const std::filesystem::path& path);
std::vector<TrialSegment> read_segments(const std::filesystem::path& path);

}  // namespace lblm::signal
