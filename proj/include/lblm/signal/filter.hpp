#pragma once

#include "lblm/signal/types.hpp"

#include <span>
#include <variant>
#include <vector>

namespace lblm::signal {

struct Bandpass {
    double lo;
    double hi;
};

struct Notch {
    double f0;
    double half_width = 2.0;  // stop band is f0 ± half_width
};

using FilterKind = std::variant<Bandpass, Notch>;

// Windowed-sinc (Hamming) designs. Order is 4·fs/transition rounded to an even
// number, so every filter has an odd tap count and an integer group delay.
std::vector<double> design_lowpass(double cutoff_hz, double transition_hz, double fs);
std::vector<double> design_highpass(double cutoff_hz, double transition_hz, double fs);
// Pass band edges lo/hi; the -6 dB points sit half a transition outside them.
std::vector<double> design_bandpass(double lo, double hi, double fs);
std::vector<double> design_notch(const Notch& n, double fs);
std::vector<double> design(const FilterKind& kind, double fs);

// Heuristic transition width for a band edge pair (EEGLAB-style).
double default_transition(double lo, double hi, double fs);

// Linear-phase convolution with the group delay removed. Edges are extended by
// odd reflection. Output has the input's length.
std::vector<double> filter_zero_phase(std::span<const double> x, std::span<const double> taps);
Mat filter_rows(const Mat& x, std::span<const double> taps);

// Magnitude response of taps at frequency f.
double magnitude_response(std::span<const double> taps, double f, double fs);

EegRecording fir_filter(const EegRecording& rec, const FilterKind& kind);

}  // namespace lblm::signal
