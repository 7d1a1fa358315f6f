#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meansq/channel.hpp"
#include "meansq/msstab.hpp"

namespace meansq {

struct SimConfig {
    long long steps = 100000;
    int trials = 1;
    long long burn_in = 0;  // 0: ten times the slowest nominal time constant
    std::uint64_t seed = 1;
    bool record_psd = false;
    bool record_cross_correlation = true;
    bool allow_unstable_nominal = false;
    int psd_frequencies = 16;
    int max_lag = 5;
    std::string dump_trajectory_path;  // nonempty: write trial 0 to this file
};

struct SimReport {
    Vector empirical_powers;        // mean of u_i^2 over window and trials
    Vector power_standard_errors;   // across-trial standard errors
    bool diverged = false;
    int diverged_trials = 0;
    long long burn_in_used = 0;

    // Normalized cross-correlations of the uncertainty outputs d_i for lags
    // -max_lag..max_lag (index lag + max_lag); diagonal entries zeroed.
    std::vector<Matrix> cross_corr_by_lag;
    std::vector<Matrix> cross_corr_se_by_lag;
    Matrix cross_corr;     // max |correlation| over lags per pair
    Matrix cross_corr_se;  // standard error at the maximizing lag

    // Optional per-channel PSD estimates of d_i at the listed frequencies.
    Vector psd_freqs;
    Matrix empirical_psd;     // frequencies x channels
    Matrix empirical_psd_se;  // frequencies x channels
};

SimReport simulate_loop(const LoopDescription& loop, const std::vector<DelayChannelSpec>& specs,
                        const SimConfig& cfg);

// Max-|correlation| matrix of the uncertainty outputs; requires a completed,
// non-diverged simulation with cross-correlation recording enabled.
Matrix estimate_cross_correlation(const SimReport& report);

// Open-loop bridge: drive one channel with unit white noise and estimate the
// spectral density of its zero-mean output at the given frequencies.
struct ChannelEsdEstimate {
    Vector freqs;
    Vector psd;
    Vector se;
};
ChannelEsdEstimate estimate_channel_esd(const DelayChannelSpec& spec, int frequencies,
                                        long long steps, int trials, std::uint64_t seed);

}  // namespace meansq
