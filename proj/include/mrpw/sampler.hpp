// Copyright (C) 2026 the mrpweights authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef MRPW_SAMPLER_HPP_
#define MRPW_SAMPLER_HPP_

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mrpw/errors.hpp"
#include "mrpw/model.hpp"

namespace mrpw {

struct SamplerConfig {
    int chains = 4;
    int warmup = 1000;
    int draws = 1000;  // kept draws per chain
    std::uint64_t seed = 0;
    double target_accept = 0.9;
    int max_treedepth = 10;
    double rhat_threshold = 1.05;
    // Post-warmup divergences tolerated before the fit is rejected;
    // negative means chains*draws/10.
    long max_divergences = -1;
    // Reported ESS is capped at this multiple of the total draw count.
    double ess_cap_multiple = 1.0;
    int threads = 0;  // 0 = one thread per chain up to hardware

    long total_draws() const { return static_cast<long>(chains) * draws; }
    long divergence_limit() const {
        return max_divergences >= 0 ? max_divergences : total_draws() / 10;
    }
    void validate() const;
};

// Retained draws, one report row per (chain, draw). Columns are the natural
// parameters followed by per-term local scales, theta per cell, and
// sigma_theta_sq.
class PosteriorDraws {
  public:
    PosteriorDraws() = default;
    PosteriorDraws(std::vector<std::string> names, int n_chains, int n_draws,
                   std::uint64_t seed);

    int n_chains() const { return n_chains_; }
    int n_draws() const { return n_draws_; }  // per chain
    long total_draws() const { return static_cast<long>(n_chains_) * n_draws_; }
    int n_columns() const { return static_cast<int>(names_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    std::uint64_t seed() const { return seed_; }

    int col(const std::string& name) const;
    int require_col(const std::string& name) const;  // ContractError if absent

    double at(int chain, int draw, int column) const {
        return chains_[chain][static_cast<std::size_t>(draw) * names_.size() + column];
    }
    std::span<double> row_mut(int chain, int draw) {
        return {chains_[chain].data() + static_cast<std::size_t>(draw) * names_.size(),
                names_.size()};
    }
    std::span<const double> row(int chain, int draw) const {
        return {chains_[chain].data() + static_cast<std::size_t>(draw) * names_.size(),
                names_.size()};
    }

    // All chains concatenated, chain-major.
    std::vector<double> stacked(int column) const;
    std::vector<double> chain_series(int chain, int column) const;

    double column_mean(int column) const;
    double column_sd(int column) const;
    double column_quantile(int column, double p) const;

    void write_csv(const std::string& path) const;
    static PosteriorDraws read_csv(const std::string& path);

  private:
    std::vector<std::string> names_;
    std::vector<std::vector<double>> chains_;  // per chain, row-major draws x cols
    int n_chains_ = 0;
    int n_draws_ = 0;
    std::uint64_t seed_ = 0;
};

struct Diagnostics {
    std::vector<std::string> parameter;  // aligned with rhat/ess
    std::vector<double> rhat;
    std::vector<double> ess;
    long divergences = 0;
    long treedepth_hits = 0;
    std::vector<std::string> warnings;

    double max_rhat() const;  // over finite entries; 1 if none
    bool pass(const SamplerConfig& config) const;
    std::string to_json() const;
};

class FitQualityError : public Error {
  public:
    FitQualityError(const std::string& what, Diagnostics diag)
        : Error(what), diagnostics(std::move(diag)) {}
    Diagnostics diagnostics;
};

// Split-chain potential scale reduction. Each element of `chains` is one
// chain's series for a single parameter. Zero within-chain variance returns
// 1 (degenerate parameter).
double split_rhat(const std::vector<std::span<const double>>& chains);

// Autocorrelation-based effective sample size across chains, capped at
// cap_multiple * total draws. Constant series give 0.
double effective_sample_size(const std::vector<std::span<const double>>& chains,
                             double cap_multiple = 1.0);

// Draw from the posterior: one independent NUTS chain per config.chains with
// dual-averaged step size and diagonal mass adaptation during warmup.
// Deterministic given (frame, spec, config.seed); the thread count only
// changes scheduling. Throws FitQualityError when the R-hat gate or the
// divergence limit fails.
std::pair<PosteriorDraws, Diagnostics> sample_posterior(const CellFrame& frame,
                                                        const ModelSpec& spec,
                                                        const SamplerConfig& config);

}  // namespace mrpw

#endif  // MRPW_SAMPLER_HPP_
