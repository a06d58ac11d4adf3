#include "lblm/signal/synth.hpp"

#include <algorithm>
#include <cmath>
#include <random>

namespace lblm::signal {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

// Paul Kellet's pink filter over white noise, normalized to unit std.
std::vector<double> pink_noise(std::size_t n, std::mt19937_64& rng) {
    std::normal_distribution<double> white(0.0, 1.0);
    double b[7] = {0, 0, 0, 0, 0, 0, 0};
    const std::size_t burn = 4096;
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n + burn; ++i) {
        const double w = white(rng);
        b[0] = 0.99886 * b[0] + w * 0.0555179;
        b[1] = 0.99332 * b[1] + w * 0.0750759;
        b[2] = 0.96900 * b[2] + w * 0.1538520;
        b[3] = 0.86650 * b[3] + w * 0.3104856;
        b[4] = 0.55000 * b[4] + w * 0.5329522;
        b[5] = -0.7616 * b[5] - w * 0.0168980;
        const double p = b[0] + b[1] + b[2] + b[3] + b[4] + b[5] + b[6] + w * 0.5362;
        b[6] = w * 0.115926;
        if (i >= burn) out[i - burn] = p;
    }
    double mean = 0.0;
    for (double v : out) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : out) var += (v - mean) * (v - mean);
    const double sd = std::sqrt(var / static_cast<double>(n));
    for (double& v : out) v = (v - mean) / sd;
    return out;
}

// Adds amp·hann(t)·sin(2π f t + phase) to one channel over [start, start+len).
void add_burst(Mat& data, int ch, std::int64_t start, std::int64_t len, double fs, double freq, double amp,
               double phase) {
    const std::int64_t T = data.cols();
    for (std::int64_t i = 0; i < len; ++i) {
        const std::int64_t t = start + i;
        if (t < 0 || t >= T) continue;
        const double env = 0.5 - 0.5 * std::cos(2.0 * kPi * static_cast<double>(i) / static_cast<double>(len));
        data(ch, t) += amp * env * std::sin(2.0 * kPi * freq * static_cast<double>(i) / fs + phase);
    }
}

std::vector<int> channel_range(int lo, int hi) {
    std::vector<int> v;
    for (int c = lo; c < hi; ++c) v.push_back(c);
    return v;
}

}  // namespace

void GeneratorSpec::validate() const {
    if (subjects <= 0 || sessions <= 0 || trials_per_session < 0) throw ConfigError("generator counts must be positive");
    if (channels < 1) throw ConfigError("generator needs at least one channel");
    if (!(fs > 0)) throw ConfigError("generator sampling rate must be positive");
    if (signatures.empty()) throw ConfigError("class-signature table is empty");
    if (static_cast<int>(signatures.size()) != kNumWords) {
        throw ConfigError("class-signature table must have one entry per word (" + std::to_string(kNumWords) + ")");
    }
    for (const auto& word : signatures) {
        for (const auto& comp : word) {
            if (!(comp.freq_hz > 0) || comp.freq_hz >= fs / 2) throw ConfigError("signature frequency above Nyquist");
            for (int c : comp.channels) {
                if (c < 0 || c >= channels) throw ConfigError("signature channel out of range");
            }
            if (!(comp.duration_s > 0)) throw ConfigError("signature duration must be positive");
        }
    }
    if (trial_period_s < 5.0) throw ConfigError("trial period must hold rest, read and silent windows (5 s)");
    if (noise_level < 0 || session_drift < 0) throw ConfigError("noise and drift levels must be non-negative");
}

std::vector<std::vector<SignatureComponent>> default_signatures(int channels, double snr, double word_snr) {
    const int third = std::max(1, channels / 3);
    const auto front = channel_range(0, third);
    const auto back = channel_range(std::max(0, channels - third), channels);
    auto middle = channel_range(third, std::max(third, channels - third));
    if (middle.empty()) middle = front;

    const double group_freq[kNumGroups] = {10.0, 20.0, 40.0, 10.0, 20.0, 40.0};
    const double word_freq[4] = {6.0, 15.0, 27.0, 45.0};

    std::vector<std::vector<SignatureComponent>> table(kNumWords);
    for (int w = 0; w < kNumWords; ++w) {
        const int g = semantic_group(w);
        SignatureComponent group_burst;
        group_burst.freq_hz = group_freq[g];
        group_burst.channels = g < 3 ? front : back;
        group_burst.amplitude = snr;
        SignatureComponent word_burst;
        word_burst.freq_hz = word_freq[w % 4];
        word_burst.channels = middle;
        word_burst.amplitude = word_snr;
        table[w] = {group_burst, word_burst};
    }
    return table;
}

GeneratorSpec default_generator_spec() {
    GeneratorSpec s;
    s.signatures = default_signatures(s.channels);
    return s;
}

std::vector<EegRecording> synth_dataset(const GeneratorSpec& spec, std::uint64_t seed) {
    spec.validate();
    const double fs = spec.fs;
    const auto period = static_cast<std::int64_t>(std::llround(spec.trial_period_s * fs));
    const auto lead = static_cast<std::int64_t>(std::llround(spec.lead_s * fs));
    const auto tail = static_cast<std::int64_t>(std::llround(spec.tail_s * fs));
    const auto two_s = static_cast<std::int64_t>(std::llround(2.0 * fs));
    const auto one_s = static_cast<std::int64_t>(std::llround(1.0 * fs));
    const std::int64_t T = lead + spec.trials_per_session * period + tail;
    const int C = spec.channels;
    const int third = std::max(1, C / 3);

    std::vector<EegRecording> out;
    for (int subj = 0; subj < spec.subjects; ++subj) {
        // Subject-level variability of the condition effects.
        std::mt19937_64 srng(splitmix64(seed ^ splitmix64(0x5bULL + static_cast<std::uint64_t>(subj))));
        std::normal_distribution<double> sn(0.0, 1.0);
        const double rest_alpha = std::max(0.2, 0.8 * (1.0 + 0.3 * sn(srng)));
        const double silent_beta = std::max(0.1, 0.4 * (1.0 + 0.3 * sn(srng)));
        const double read_theta = std::max(0.1, 0.5 * (1.0 + 0.3 * sn(srng)));

        for (int sess = 0; sess < spec.sessions; ++sess) {
            const std::uint64_t key = splitmix64(seed) ^ splitmix64((static_cast<std::uint64_t>(subj) << 32) |
                                                                     static_cast<std::uint64_t>(sess));
            std::mt19937_64 rng(key);
            std::normal_distribution<double> normal(0.0, 1.0);
            std::uniform_real_distribution<double> unif(0.0, 1.0);

            EegRecording rec;
            rec.fs = fs;
            rec.subject_id = subj;
            rec.session_id = sess;
            rec.data = Mat::Zero(C, T);

            // Background: independent pink noise per channel plus a shared component.
            auto common = pink_noise(static_cast<std::size_t>(T), rng);
            for (int c = 0; c < C; ++c) {
                auto pn = pink_noise(static_cast<std::size_t>(T), rng);
                for (std::int64_t t = 0; t < T; ++t) rec.data(c, t) = spec.noise_level * (0.95 * pn[t] + 0.3 * common[t]);
            }

            // Session drift: channel gains and per-word frequency offsets.
            std::vector<double> gain(C);
            for (int c = 0; c < C; ++c) gain[c] = std::max(0.3, 1.0 + spec.session_drift * normal(rng));
            std::vector<double> freq_shift(kNumWords * 4);
            for (double& f : freq_shift) f = spec.session_drift * normal(rng);

            std::vector<int> words(static_cast<std::size_t>(spec.trials_per_session));
            for (int i = 0; i < spec.trials_per_session; ++i) words[i] = i % kNumWords;
            std::shuffle(words.begin(), words.end(), rng);

            for (int k = 0; k < spec.trials_per_session; ++k) {
                const int w = words[k];
                const std::int64_t start = lead + k * period;
                const std::int64_t read_at = start + two_s;
                const std::int64_t silent_at = start + two_s + one_s;
                const auto wu = static_cast<std::uint8_t>(w);
                const auto gu = static_cast<std::uint8_t>(semantic_group(w));
                rec.trial_marks.push_back({static_cast<std::uint64_t>(start), wu, gu, Condition::rest});
                rec.trial_marks.push_back({static_cast<std::uint64_t>(read_at), wu, gu, Condition::read});
                rec.trial_marks.push_back({static_cast<std::uint64_t>(silent_at), wu, gu, Condition::silent});

                // Condition effects: posterior alpha at rest, theta while reading,
                // left-hemisphere beta during silent speech.
                for (int c = C - third; c < C; ++c) {
                    add_burst(rec.data, c, start, two_s, fs, 10.0, rest_alpha, 2.0 * kPi * unif(rng));
                }
                for (int c = 0; c < C; ++c) {
                    add_burst(rec.data, c, read_at, one_s, fs, 6.0, read_theta, 2.0 * kPi * unif(rng));
                }
                for (int c = 0; c < std::max(1, C / 2); ++c) {
                    add_burst(rec.data, c, silent_at, two_s, fs, 24.0, silent_beta, 2.0 * kPi * unif(rng));
                }

                const auto& sig = spec.signatures[w];
                for (std::size_t ci = 0; ci < sig.size(); ++ci) {
                    const auto& comp = sig[ci];
                    const double jitter = spec.onset_jitter_s * (2.0 * unif(rng) - 1.0);
                    const auto onset = silent_at + static_cast<std::int64_t>(std::llround((comp.onset_s + jitter) * fs));
                    const auto len = static_cast<std::int64_t>(std::llround(comp.duration_s * fs));
                    const double f = std::max(0.5, comp.freq_hz + freq_shift[(w * 4 + ci) % freq_shift.size()]);
                    const double phase = 2.0 * kPi * unif(rng);
                    for (int c : comp.channels) add_burst(rec.data, c, onset, len, fs, f, comp.amplitude, phase);
                }
            }
            for (int c = 0; c < C; ++c) rec.data.row(c) *= gain[c];
            // Stored as float32 on disk; keep in-memory values float-representable.
            rec.data = rec.data.cast<float>().cast<double>();
            out.push_back(std::move(rec));
        }
    }
    return out;
}

nlohmann::json to_json(const GeneratorSpec& s) {
    nlohmann::json sigs = nlohmann::json::array();
    for (const auto& word : s.signatures) {
        nlohmann::json comps = nlohmann::json::array();
        for (const auto& c : word) {
            comps.push_back({{"freq_hz", c.freq_hz},
                             {"channels", c.channels},
                             {"onset_s", c.onset_s},
                             {"duration_s", c.duration_s},
                             {"amplitude", c.amplitude}});
        }
        sigs.push_back(comps);
    }
    return {{"subjects", s.subjects},
            {"sessions", s.sessions},
            {"trials_per_session", s.trials_per_session},
            {"channels", s.channels},
            {"fs", s.fs},
            {"noise_level", s.noise_level},
            {"session_drift", s.session_drift},
            {"onset_jitter_s", s.onset_jitter_s},
            {"trial_period_s", s.trial_period_s},
            {"lead_s", s.lead_s},
            {"tail_s", s.tail_s},
            {"signatures", sigs}};
}

GeneratorSpec generator_spec_from_json(const nlohmann::json& j) {
    static const std::vector<std::string> known = {
        "subjects", "sessions",       "trials_per_session", "channels", "fs",   "noise_level", "session_drift",
        "onset_jitter_s", "trial_period_s", "lead_s", "tail_s", "signatures", "snr", "word_snr"};
    if (!j.is_object()) throw ConfigError("generator spec must be a JSON object");
    for (const auto& [k, v] : j.items()) {
        if (std::find(known.begin(), known.end(), k) == known.end()) {
            throw ConfigError("unknown generator key '" + k + "'");
        }
    }
    GeneratorSpec s;
    auto get = [&](const char* key, auto& field) {
        if (j.contains(key)) field = j.at(key).get<std::decay_t<decltype(field)>>();
    };
    get("subjects", s.subjects);
    get("sessions", s.sessions);
    get("trials_per_session", s.trials_per_session);
    get("channels", s.channels);
    get("fs", s.fs);
    get("noise_level", s.noise_level);
    get("session_drift", s.session_drift);
    get("onset_jitter_s", s.onset_jitter_s);
    get("trial_period_s", s.trial_period_s);
    get("lead_s", s.lead_s);
    get("tail_s", s.tail_s);
    if (j.contains("signatures")) {
        if (j.contains("snr") || j.contains("word_snr")) {
            throw ConfigError("give either an explicit signature table or snr/word_snr, not both");
        }
        for (const auto& word : j.at("signatures")) {
            std::vector<SignatureComponent> comps;
            for (const auto& c : word) {
                SignatureComponent sc;
                sc.freq_hz = c.at("freq_hz").get<double>();
                sc.channels = c.at("channels").get<std::vector<int>>();
                sc.onset_s = c.value("onset_s", sc.onset_s);
                sc.duration_s = c.value("duration_s", sc.duration_s);
                sc.amplitude = c.value("amplitude", sc.amplitude);
                comps.push_back(std::move(sc));
            }
            s.signatures.push_back(std::move(comps));
        }
    } else {
        s.signatures = default_signatures(s.channels, j.value("snr", 1.0), j.value("word_snr", 0.4));
    }
    return s;
}

}  // namespace lblm::signal
