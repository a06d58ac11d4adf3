#pragma once

#include "lblm/common.hpp"

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace lblm::signal {

inline constexpr int kNumWords = 24;
inline constexpr int kNumGroups = 6;

// Word w belongs to semantic group w / 4. Groups in order: motion, emotion,
// location, people, number, object.
constexpr int semantic_group(int word) { return word / 4; }
std::string_view word_name(int word);
std::string_view group_name(int group);

enum class Condition : std::uint8_t { rest = 0, read = 1, silent = 2 };
std::string_view condition_name(Condition c);
Condition parse_condition(std::string_view name);

struct TrialMark {
    std::uint64_t start = 0;
    std::uint8_t word = 0;
    std::uint8_t semantic = 0;
    Condition condition = Condition::silent;

    bool operator==(const TrialMark&) const = default;
};

// Continuous multi-channel recording, channels × samples.
struct EegRecording {
    Mat data;
    double fs = 250.0;
    int subject_id = 0;
    int session_id = 0;
    std::vector<TrialMark> trial_marks;

    int channels() const { return static_cast<int>(data.rows()); }
    std::int64_t samples() const { return data.cols(); }
    // Throws ConfigError if a mark lies outside [0, T) or violates the label taxonomy.
    void validate() const;
};

enum class BandTag : std::uint8_t { raw = 0, alpha = 1, beta = 2, gamma = 3 };
std::string_view band_tag_name(BandTag b);

// Fixed-length window cut from a recording. Unlabeled (pretraining) segments
// carry word = semantic = -1.
struct TrialSegment {
    Mat data;
    double fs = 250.0;
    int word = -1;
    int semantic = -1;
    int subject_id = 0;
    int session_id = 0;
    BandTag band = BandTag::raw;
    Condition condition = Condition::silent;

    bool labeled() const { return word >= 0; }
    int channels() const { return static_cast<int>(data.rows()); }
    int length() const { return static_cast<int>(data.cols()); }
};

}  // namespace lblm::signal
