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
#include "mrpw/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "mrpw/csv.hpp"
#include "mrpw/parallel.hpp"
#include "mrpw/rng.hpp"
#include "mrpw/stats.hpp"

namespace mrpw {

void SamplerConfig::validate() const {
    if (chains < 2) throw SpecError("sampler needs at least 2 chains for split R-hat");
    if (warmup < 0) throw SpecError("negative warmup");
    if (draws < 1) throw SpecError("need at least 1 kept draw per chain");
    if (!(target_accept > 0.0 && target_accept < 1.0))
        throw SpecError("target acceptance must lie in (0,1)");
    if (max_treedepth < 1 || max_treedepth > 14) throw SpecError("max_treedepth out of range");
}

PosteriorDraws::PosteriorDraws(std::vector<std::string> names, int n_chains, int n_draws,
                               std::uint64_t seed)
    : names_(std::move(names)), n_chains_(n_chains), n_draws_(n_draws), seed_(seed) {
    chains_.assign(n_chains_, std::vector<double>(static_cast<std::size_t>(n_draws_) *
                                                  names_.size()));
}

int PosteriorDraws::col(const std::string& name) const {
    for (std::size_t i = 0; i < names_.size(); ++i)
        if (names_[i] == name) return static_cast<int>(i);
    return -1;
}

int PosteriorDraws::require_col(const std::string& name) const {
    const int c = col(name);
    if (c < 0) throw ContractError("draws are missing column '" + name + "'");
    return c;
}

std::vector<double> PosteriorDraws::stacked(int column) const {
    std::vector<double> out;
    out.reserve(total_draws());
    for (int c = 0; c < n_chains_; ++c)
        for (int d = 0; d < n_draws_; ++d) out.push_back(at(c, d, column));
    return out;
}

std::vector<double> PosteriorDraws::chain_series(int chain, int column) const {
    std::vector<double> out;
    out.reserve(n_draws_);
    for (int d = 0; d < n_draws_; ++d) out.push_back(at(chain, d, column));
    return out;
}

double PosteriorDraws::column_mean(int column) const {
    double s = 0.0;
    for (int c = 0; c < n_chains_; ++c)
        for (int d = 0; d < n_draws_; ++d) s += at(c, d, column);
    return s / static_cast<double>(total_draws());
}

double PosteriorDraws::column_sd(int column) const {
    const auto x = stacked(column);
    return sd(x);
}

double PosteriorDraws::column_quantile(int column, double p) const {
    const auto x = stacked(column);
    return quantile(x, p);
}

void PosteriorDraws::write_csv(const std::string& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << "chain,draw";
    for (const auto& n : names_) out << ',' << csv_quote(n);
    out << '\n';
    for (int c = 0; c < n_chains_; ++c) {
        for (int d = 0; d < n_draws_; ++d) {
            out << c << ',' << d;
            const auto r = row(c, d);
            for (double v : r) out << ',' << fmt_double(v);
            out << '\n';
        }
    }
}

PosteriorDraws PosteriorDraws::read_csv(const std::string& path) {
    const Table t = read_csv_file(path);
    if (t.columns.size() < 3 || t.columns[0] != "chain" || t.columns[1] != "draw")
        throw SchemaError("draws csv: expected leading chain,draw columns");
    int n_chains = 0, n_draws = 0;
    for (const auto& row : t.rows) {
        n_chains = std::max(n_chains, 1 + static_cast<int>(parse_double(row[0], "draws csv")));
        n_draws = std::max(n_draws, 1 + static_cast<int>(parse_double(row[1], "draws csv")));
    }
    PosteriorDraws draws(std::vector<std::string>(t.columns.begin() + 2, t.columns.end()),
                         n_chains, n_draws, 0);
    for (const auto& row : t.rows) {
        const int c = static_cast<int>(parse_double(row[0], "draws csv"));
        const int d = static_cast<int>(parse_double(row[1], "draws csv"));
        auto dst = draws.row_mut(c, d);
        for (std::size_t i = 2; i < row.size(); ++i)
            dst[i - 2] = parse_double(row[i], "draws csv");
    }
    return draws;
}

double Diagnostics::max_rhat() const {
    double m = 1.0;
    for (double r : rhat)
        if (std::isfinite(r)) m = std::max(m, r);
    return m;
}

bool Diagnostics::pass(const SamplerConfig& config) const {
    return max_rhat() <= config.rhat_threshold && divergences <= config.divergence_limit();
}

std::string Diagnostics::to_json() const {
    nlohmann::json j;
    j["divergences"] = divergences;
    j["treedepth_hits"] = treedepth_hits;
    j["max_rhat"] = max_rhat();
    j["warnings"] = warnings;
    nlohmann::json params = nlohmann::json::array();
    for (std::size_t i = 0; i < parameter.size(); ++i) {
        params.push_back({{"name", parameter[i]}, {"rhat", rhat[i]}, {"ess", ess[i]}});
    }
    j["parameters"] = params;
    return j.dump(2);
}

double split_rhat(const std::vector<std::span<const double>>& chains) {
    if (chains.size() < 2) throw ContractError("split R-hat needs at least 2 chains");
    std::size_t n = chains[0].size();
    for (const auto& c : chains) n = std::min(n, c.size());
    if (n < 4) throw ContractError("split R-hat needs at least 4 draws per chain");
    const std::size_t half = n / 2;

    std::vector<double> means, vars;
    auto add_half = [&](std::span<const double> x) {
        const double m = mean(x);
        means.push_back(m);
        double ss = 0.0;
        for (double v : x) ss += (v - m) * (v - m);
        vars.push_back(ss / static_cast<double>(x.size() - 1));
    };
    for (const auto& c : chains) {
        add_half(c.subspan(0, half));
        add_half(c.subspan(n - half, half));
    }

    const double w = mean(vars);
    if (w <= 0.0) return 1.0;  // degenerate parameter
    const double b_over_n = variance(means);  // B/n in the usual notation
    const double var_plus =
        (static_cast<double>(half) - 1.0) / static_cast<double>(half) * w + b_over_n;
    return std::sqrt(var_plus / w);
}

double effective_sample_size(const std::vector<std::span<const double>>& chains,
                             double cap_multiple) {
    if (chains.empty()) throw ContractError("ESS needs at least one chain");
    std::size_t n = chains[0].size();
    for (const auto& c : chains) n = std::min(n, c.size());
    if (n < 4) throw ContractError("ESS needs at least 4 draws per chain");
    const std::size_t m = chains.size();
    const double total = static_cast<double>(m) * static_cast<double>(n);

    std::vector<double> means(m), vars(m);
    for (std::size_t k = 0; k < m; ++k) {
        means[k] = mean(chains[k].subspan(0, n));
        double ss = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double d = chains[k][i] - means[k];
            ss += d * d;
        }
        vars[k] = ss / static_cast<double>(n - 1);
    }
    const double w = mean(vars);
    if (w <= 0.0) return 0.0;  // constant series
    double var_plus = (static_cast<double>(n) - 1.0) / static_cast<double>(n) * w;
    if (m > 1) var_plus += variance(means);
    if (var_plus <= 0.0) return 0.0;

    // Mean autocovariance over chains at a given lag (biased, /n).
    auto acov = [&](std::size_t t) {
        double s = 0.0;
        for (std::size_t k = 0; k < m; ++k) {
            double a = 0.0;
            for (std::size_t i = 0; i + t < n; ++i)
                a += (chains[k][i] - means[k]) * (chains[k][i + t] - means[k]);
            s += a / static_cast<double>(n);
        }
        return s / static_cast<double>(m);
    };

    const double rho0 = 1.0 - (w - acov(0)) / var_plus;
    // Geyer initial monotone positive sequence over lag pairs.
    double tau = -rho0;
    double prev_pair = std::numeric_limits<double>::infinity();
    const std::size_t max_lag = n - 2;
    for (std::size_t t = 0; t + 1 <= max_lag; t += 2) {
        const double rho_even = 1.0 - (w - acov(t)) / var_plus;
        const double rho_odd = 1.0 - (w - acov(t + 1)) / var_plus;
        double pair = rho_even + rho_odd;
        if (pair <= 0.0) break;
        pair = std::min(pair, prev_pair);
        prev_pair = pair;
        tau += 2.0 * pair;
        if (t > 0 && pair < 1e-12) break;
    }
    tau = std::max(tau, 1e-8);
    const double ess = total / tau;
    return std::min(ess, cap_multiple * total);
}

namespace {

constexpr double kDeltaMax = 1000.0;  // divergence threshold on energy error
constexpr double kLogCoordCap = 50.0;

struct Phase {
    const Posterior& post;
    std::vector<double> inv_mass;  // estimated posterior variances
    double epsilon = 1.0;

    explicit Phase(const Posterior& p) : post(p), inv_mass(p.dim(), 1.0) {}

    double kinetic(std::span<const double> p) const {
        double k = 0.0;
        for (int i = 0; i < post.dim(); ++i) k += p[i] * p[i] * inv_mass[i];
        return 0.5 * k;
    }

    void sample_momentum(std::span<double> p, Rng& rng) const {
        for (int i = 0; i < post.dim(); ++i) p[i] = rng.normal() / std::sqrt(inv_mass[i]);
    }

    // One leapfrog step in place; returns the new log density. Log-scale
    // coordinates are capped at +/-50 instead of overflowing.
    double leapfrog(std::span<double> q, std::span<double> p, std::span<double> grad,
                    double step, bool* capped) const {
        const int d = post.dim();
        for (int i = 0; i < d; ++i) p[i] += 0.5 * step * grad[i];
        const auto& logc = post.log_scale_coordinate();
        for (int i = 0; i < d; ++i) {
            q[i] += step * inv_mass[i] * p[i];
            if (logc[i] && std::abs(q[i]) > kLogCoordCap) {
                q[i] = std::clamp(q[i], -kLogCoordCap, kLogCoordCap);
                *capped = true;
            }
        }
        double lp = post.log_density_grad(q, grad);
        if (std::isnan(lp)) lp = -std::numeric_limits<double>::infinity();
        for (int i = 0; i < d; ++i) p[i] += 0.5 * step * grad[i];
        return lp;
    }
};

// One edge of the trajectory: position, momentum and cached gradient.
struct Edge {
    std::vector<double> q, p, grad;
    double logp = 0.0;
};

struct TreeResult {
    std::vector<double> proposal;
    double proposal_logp = 0.0;
    std::vector<double> proposal_grad;
    double count = 0.0;    // slice-admissible states in the subtree
    bool keep_going = true;
    bool divergent = false;
    double alpha_sum = 0.0;
    int n_alpha = 0;
};

bool no_uturn(const Phase& phase, const Edge& minus, const Edge& plus) {
    double fwd = 0.0, bwd = 0.0;
    for (int i = 0; i < phase.post.dim(); ++i) {
        const double dq = plus.q[i] - minus.q[i];
        fwd += dq * phase.inv_mass[i] * plus.p[i];
        bwd += dq * phase.inv_mass[i] * minus.p[i];
    }
    return fwd >= 0.0 && bwd >= 0.0;
}

// Doubling subtree in direction dir from `edge`, which is advanced to the
// far end. Recursion depth equals the tree depth (<= max_treedepth).
TreeResult build_tree(const Phase& phase, Edge& edge, double log_u, int dir, int depth,
                      double h0, Rng& rng, bool* capped) {
    TreeResult result;
    if (depth == 0) {
        const double lp =
            phase.leapfrog(edge.q, edge.p, edge.grad, dir * phase.epsilon, capped);
        edge.logp = lp;
        const double h = -lp + phase.kinetic(edge.p);
        result.proposal = edge.q;
        result.proposal_logp = lp;
        result.proposal_grad = edge.grad;
        result.count = (log_u <= -h) ? 1.0 : 0.0;
        result.keep_going = (log_u < kDeltaMax - h);
        result.divergent = !result.keep_going;
        result.alpha_sum = std::min(1.0, std::exp(h0 - h));
        if (std::isnan(result.alpha_sum)) result.alpha_sum = 0.0;
        result.n_alpha = 1;
        return result;
    }

    result = build_tree(phase, edge, log_u, dir, depth - 1, h0, rng, capped);
    if (!result.keep_going) return result;

    const Edge inner = edge;  // near edge of the second half
    TreeResult second = build_tree(phase, edge, log_u, dir, depth - 1, h0, rng, capped);
    if (second.count > 0.0 &&
        rng.uniform01() < second.count / (result.count + second.count)) {
        result.proposal = std::move(second.proposal);
        result.proposal_logp = second.proposal_logp;
        result.proposal_grad = std::move(second.proposal_grad);
    }
    result.count += second.count;
    result.alpha_sum += second.alpha_sum;
    result.n_alpha += second.n_alpha;
    result.divergent = result.divergent || second.divergent;
    result.keep_going =
        second.keep_going && (dir > 0 ? no_uturn(phase, inner, edge) : no_uturn(phase, edge, inner));
    return result;
}

struct TransitionStats {
    double accept_mean = 0.0;
    bool divergent = false;
    bool depth_hit = false;
};

TransitionStats nuts_transition(const Phase& phase, std::vector<double>& q, double& logp,
                                std::vector<double>& grad, int max_depth, Rng& rng,
                                bool* capped) {
    const int d = phase.post.dim();
    Edge minus{q, std::vector<double>(d), grad, logp};
    phase.sample_momentum(minus.p, rng);
    Edge plus = minus;

    const double h0 = -logp + phase.kinetic(minus.p);
    const double log_u = -h0 + std::log(rng.uniform_open());

    std::vector<double> proposal = q;
    double proposal_logp = logp;
    std::vector<double> proposal_grad = grad;
    double count = 1.0;
    TransitionStats stats;
    double alpha_sum = 0.0;
    int n_alpha = 0;

    for (int depth = 0; depth < max_depth; ++depth) {
        const int dir = rng.bernoulli(0.5) ? 1 : -1;
        Edge& edge = (dir > 0) ? plus : minus;
        TreeResult t = build_tree(phase, edge, log_u, dir, depth, h0, rng, capped);
        alpha_sum += t.alpha_sum;
        n_alpha += t.n_alpha;
        stats.divergent = stats.divergent || t.divergent;
        if (t.keep_going && t.count > 0.0 && rng.uniform01() < t.count / count) {
            proposal = std::move(t.proposal);
            proposal_logp = t.proposal_logp;
            proposal_grad = std::move(t.proposal_grad);
        }
        count += t.count;
        if (!t.keep_going || !no_uturn(phase, minus, plus)) break;
        if (depth + 1 == max_depth) stats.depth_hit = true;
    }

    q = std::move(proposal);
    logp = proposal_logp;
    grad = std::move(proposal_grad);
    stats.accept_mean = (n_alpha > 0) ? alpha_sum / n_alpha : 0.0;
    return stats;
}

double find_reasonable_epsilon(const Phase& phase, std::span<const double> q0, double logp0,
                               std::span<const double> grad0, Rng& rng) {
    const int d = phase.post.dim();
    double eps = 1.0;
    std::vector<double> p(d);
    phase.sample_momentum(p, rng);
    const double h0 = -logp0 + phase.kinetic(p);

    auto energy_after_step = [&](double step) {
        std::vector<double> q(q0.begin(), q0.end());
        std::vector<double> pp(p);
        std::vector<double> g(grad0.begin(), grad0.end());
        bool capped = false;
        const double lp = phase.leapfrog(q, pp, g, step, &capped);
        return -lp + phase.kinetic(pp);
    };

    double h1 = energy_after_step(eps);
    double log_ratio = h0 - h1;
    if (std::isnan(log_ratio)) log_ratio = -std::numeric_limits<double>::infinity();
    const double a = (log_ratio > std::log(0.5)) ? 1.0 : -1.0;
    for (int iter = 0; iter < 100; ++iter) {
        if (a * log_ratio <= -a * std::log(2.0)) break;
        eps *= std::pow(2.0, a);
        if (eps < 1e-10 || eps > 1e7) break;
        h1 = energy_after_step(eps);
        log_ratio = h0 - h1;
        if (std::isnan(log_ratio)) log_ratio = -std::numeric_limits<double>::infinity();
    }
    return std::clamp(eps, 1e-10, 1e7);
}

// Nesterov dual averaging on log(epsilon).
struct DualAverage {
    double mu = 0.0, log_eps = 0.0, log_eps_bar = 0.0, h_bar = 0.0;
    int m = 0;
    static constexpr double kGamma = 0.05, kT0 = 10.0, kKappa = 0.75;

    void restart(double eps0) {
        mu = std::log(10.0 * eps0);
        log_eps = std::log(eps0);
        log_eps_bar = 0.0;
        h_bar = 0.0;
        m = 0;
    }
    double update(double accept, double target) {
        ++m;
        const double md = static_cast<double>(m);
        h_bar = (1.0 - 1.0 / (md + kT0)) * h_bar + (target - accept) / (md + kT0);
        log_eps = mu - std::sqrt(md) / kGamma * h_bar;
        const double w = std::pow(md, -kKappa);
        log_eps_bar = w * log_eps + (1.0 - w) * log_eps_bar;
        return std::exp(log_eps);
    }
    double final_eps() const { return std::exp(log_eps_bar); }
};

struct Welford {
    long n = 0;
    std::vector<double> mean, m2;

    explicit Welford(int d) : mean(d, 0.0), m2(d, 0.0) {}
    void add(std::span<const double> x) {
        ++n;
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double d1 = x[i] - mean[i];
            mean[i] += d1 / static_cast<double>(n);
            m2[i] += d1 * (x[i] - mean[i]);
        }
    }
    // Regularized variance estimate, shrunk toward a small diagonal.
    std::vector<double> regularized_variance() const {
        std::vector<double> out(mean.size(), 1e-3);
        if (n < 3) return out;
        const double nd = static_cast<double>(n);
        for (std::size_t i = 0; i < mean.size(); ++i) {
            const double var = m2[i] / (nd - 1.0);
            out[i] = var * (nd / (nd + 5.0)) + 1e-3 * (5.0 / (nd + 5.0));
            if (out[i] <= 0.0) out[i] = 1e-3;
        }
        return out;
    }
};

struct ChainResult {
    long divergences = 0;
    long depth_hits = 0;
    bool capped = false;
    bool init_failed = false;
};

ChainResult run_chain(const Posterior& post, const SamplerConfig& config, int chain,
                      PosteriorDraws* draws) {
    const int d = post.dim();
    Rng rng = Rng::stream(config.seed, static_cast<std::uint64_t>(chain));
    ChainResult result;

    Phase phase(post);
    std::vector<double> q(d), grad(d);
    double logp = -std::numeric_limits<double>::infinity();
    for (int attempt = 0; attempt < 100; ++attempt) {
        for (int i = 0; i < d; ++i) q[i] = rng.uniform(-2.0, 2.0);
        logp = post.log_density_grad(q, grad);
        if (std::isfinite(logp)) break;
    }
    if (!std::isfinite(logp)) {
        result.init_failed = true;
        return result;
    }

    DualAverage da;
    phase.epsilon = find_reasonable_epsilon(phase, q, logp, grad, rng);
    da.restart(phase.epsilon);

    // Warmup schedule: fast start (step size only), doubling slow windows
    // (mass estimation), fast tail.
    int init_buf = 75, term_buf = 50, base_window = 25;
    if (config.warmup < init_buf + base_window + term_buf) {
        init_buf = std::max(config.warmup * 15 / 100, 0);
        term_buf = std::max(config.warmup * 10 / 100, 0);
        base_window = config.warmup - init_buf - term_buf;
    }
    const int slow_end = config.warmup - term_buf;
    int window_end = std::min(init_buf + base_window, slow_end);
    int window_size = base_window;
    Welford welford(d);

    for (int it = 0; it < config.warmup; ++it) {
        const auto stats =
            nuts_transition(phase, q, logp, grad, config.max_treedepth, rng, &result.capped);
        phase.epsilon = da.update(stats.accept_mean, config.target_accept);

        const bool in_slow = (base_window > 0 && it >= init_buf && it < slow_end);
        if (in_slow) welford.add(q);
        if (in_slow && it + 1 == window_end) {
            phase.inv_mass = welford.regularized_variance();
            welford = Welford(d);
            logp = post.log_density_grad(q, grad);
            phase.epsilon = find_reasonable_epsilon(phase, q, logp, grad, rng);
            da.restart(phase.epsilon);
            window_size *= 2;
            window_end = it + 1 + window_size;
            // The last window absorbs the remainder of the slow phase.
            if (window_end + 2 * window_size > slow_end) window_end = slow_end;
            window_end = std::min(window_end, slow_end);
        }
    }
    if (config.warmup > 0) phase.epsilon = da.final_eps();

    ParameterState state;
    std::vector<double> scratch;
    for (int it = 0; it < config.draws; ++it) {
        const auto stats =
            nuts_transition(phase, q, logp, grad, config.max_treedepth, rng, &result.capped);
        if (stats.divergent) ++result.divergences;
        if (stats.depth_hit) ++result.depth_hits;
        state = post.to_state(q);
        post.report_row(state, draws->row_mut(chain, it));
    }
    return result;
}

}  // namespace

std::pair<PosteriorDraws, Diagnostics> sample_posterior(const CellFrame& frame,
                                                        const ModelSpec& spec,
                                                        const SamplerConfig& config) {
    config.validate();
    const Posterior post(frame, spec);

    PosteriorDraws draws(post.column_names(), config.chains, config.draws, config.seed);
    Diagnostics diag;

    if (post.dim() == 0) {
        // Everything held at a point mass: constant draws, nothing to check.
        ParameterState state = post.to_state({});
        for (int c = 0; c < config.chains; ++c)
            for (int d = 0; d < config.draws; ++d) post.report_row(state, draws.row_mut(c, d));
        diag.warnings.push_back("all parameters fixed; sampler is degenerate");
        return {std::move(draws), std::move(diag)};
    }

    std::vector<ChainResult> results(config.chains);
    const int threads = config.threads > 0 ? config.threads : config.chains;
    parallel_for(config.chains, threads,
                 [&](int c) { results[c] = run_chain(post, config, c, &draws); });

    bool capped = false;
    for (int c = 0; c < config.chains; ++c) {
        if (results[c].init_failed)
            throw FitQualityError("chain " + std::to_string(c) +
                                      " failed to find a finite starting point",
                                  diag);
        diag.divergences += results[c].divergences;
        diag.treedepth_hits += results[c].depth_hits;
        capped = capped || results[c].capped;
    }
    if (capped)
        diag.warnings.push_back("log-scale coordinate capped at +/-50 during sampling");
    if (diag.treedepth_hits > 0)
        diag.warnings.push_back(std::to_string(diag.treedepth_hits) +
                                " transitions hit max treedepth");

    // Convergence diagnostics on the retained draws.
    int degenerate = 0;
    for (int col = 0; col < draws.n_columns(); ++col) {
        std::vector<std::vector<double>> series;
        for (int c = 0; c < config.chains; ++c) series.push_back(draws.chain_series(c, col));
        std::vector<std::span<const double>> views(series.begin(), series.end());
        double r = split_rhat(views);
        double e = effective_sample_size(views, config.ess_cap_multiple);
        if (e == 0.0) ++degenerate;
        diag.parameter.push_back(draws.names()[col]);
        diag.rhat.push_back(r);
        diag.ess.push_back(e);
    }
    if (degenerate > 0)
        diag.warnings.push_back(std::to_string(degenerate) +
                                " parameters are constant across draws");

    if (diag.divergences > config.divergence_limit()) {
        throw FitQualityError("fit rejected: " + std::to_string(diag.divergences) +
                                  " divergent transitions (limit " +
                                  std::to_string(config.divergence_limit()) + ")",
                              diag);
    }
    if (diag.max_rhat() > config.rhat_threshold) {
        throw FitQualityError("fit rejected: max split R-hat " + fmt_double(diag.max_rhat()) +
                                  " exceeds " + fmt_double(config.rhat_threshold),
                              diag);
    }
    return {std::move(draws), std::move(diag)};
}

}  // namespace mrpw
