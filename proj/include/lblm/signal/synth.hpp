#pragma once

#include "lblm/signal/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <vector>

namespace lblm::signal {

// One oscillatory burst planted in a trial's silent-speech window.
struct SignatureComponent {
    double freq_hz = 20.0;
    std::vector<int> channels;
    double onset_s = 0.3;     // relative to the silent-speech mark
    double duration_s = 1.2;  // Hann envelope length
    double amplitude = 1.0;   // peak amplitude relative to background std
};

// Synthetic multi-subject, multi-session corpus with planted class structure.
//
// Each trial lays out rest (2 s), read (1 s) and silent speech (2 s) windows
// and emits one trial mark per window. The silent window carries the word's
// signature bursts with a random per-trial phase. Background is pink noise
// with unit standard deviation scaled by noise_level. Each session applies its
// own per-channel gain and per-component phase/frequency drift.
struct GeneratorSpec {
    int subjects = 2;
    int sessions = 4;
    int trials_per_session = 48;
    int channels = 8;
    double fs = 250.0;
    double noise_level = 1.0;
    double session_drift = 0.15;
    double onset_jitter_s = 0.1;
    double trial_period_s = 5.5;
    double lead_s = 1.0;
    double tail_s = 1.0;
    // Indexed by word label; must hold kNumWords entries.
    std::vector<std::vector<SignatureComponent>> signatures;

    void validate() const;
};

// A 24-word table where each semantic group owns a (frequency, channel subset)
// burst and each word adds a weaker word-specific burst. snr scales the group
// burst amplitude; word bursts are word_snr.
std::vector<std::vector<SignatureComponent>> default_signatures(int channels, double snr = 1.0,
                                                                double word_snr = 0.4);
GeneratorSpec default_generator_spec();

std::vector<EegRecording> synth_dataset(const GeneratorSpec& spec, std::uint64_t seed);

nlohmann::json to_json(const GeneratorSpec& spec);
GeneratorSpec generator_spec_from_json(const nlohmann::json& j);

}  // namespace lblm::signal
