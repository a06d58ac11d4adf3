#include "lblm/signal/types.hpp"

#include <string>

namespace lblm::signal {

namespace {

constexpr std::array<std::string_view, kNumWords> kWords = {
    "jumping", "running", "swimming",    "going",  //
    "happy",   "sad",     "fun",         "horrible",
    "college", "home",    "battlefield", "here",
    "mother",  "cowboy",  "professor",   "me",
    "one",     "three",   "eleven",      "million",
    "spoon",   "alfa",    "python",      "telephone",
};

constexpr std::array<std::string_view, kNumGroups> kGroups = {
    "motion", "emotion", "location", "people", "number", "object",
};

}  // namespace

std::string_view word_name(int word) {
    if (word < 0 || word >= kNumWords) throw RangeError("word label out of range");
    return kWords[word];
}

std::string_view group_name(int group) {
    if (group < 0 || group >= kNumGroups) throw RangeError("semantic label out of range");
    return kGroups[group];
}

std::string_view condition_name(Condition c) {
    switch (c) {
        case Condition::rest: return "rest";
        case Condition::read: return "read";
        case Condition::silent: return "silent";
    }
    return "?";
}

Condition parse_condition(std::string_view name) {
    if (name == "rest") return Condition::rest;
    if (name == "read") return Condition::read;
    if (name == "silent") return Condition::silent;
    throw ConfigError("unknown condition '" + std::string(name) + "'");
}

std::string_view band_tag_name(BandTag b) {
    switch (b) {
        case BandTag::raw: return "raw";
        case BandTag::alpha: return "alpha";
        case BandTag::beta: return "beta";
        case BandTag::gamma: return "gamma";
    }
    return "?";
}

void EegRecording::validate() const {
    const auto T = static_cast<std::uint64_t>(samples());
    for (const auto& m : trial_marks) {
        if (m.start >= T) throw ConfigError("trial mark at " + std::to_string(m.start) + " outside recording");
        if (m.word >= kNumWords || m.semantic >= kNumGroups) throw ConfigError("trial label out of range");
        if (m.semantic != semantic_group(m.word)) {
            throw ConfigError("semantic label does not match word " + std::to_string(m.word));
        }
        if (static_cast<int>(m.condition) > 2) throw ConfigError("unknown trial condition");
    }
    if (!(fs > 0)) throw ConfigError("sampling rate must be positive");
}

}  // namespace lblm::signal
