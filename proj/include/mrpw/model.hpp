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
#ifndef MRPW_MODEL_HPP_
#define MRPW_MODEL_HPP_

#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mrpw/cells.hpp"

namespace mrpw {

// One main effect (order 1) or interaction (order >= 2) over the frame's
// variables. Coefficients for a term occupy a contiguous block of the flat
// coefficient vector, one per level combination in row-major order (last
// member variable fastest).
struct InteractionTerm {
    std::vector<int> vars;   // ascending variable indices
    long combos = 0;         // product of member level counts
    long coef_offset = 0;    // start of this term's block

    int order() const { return static_cast<int>(vars.size()); }
    std::string label(const std::vector<VariableSpec>& all) const;
};

struct PriorConfig {
    // Structured: an interaction's local scale is delta(order) times the
    // product of its parents' main-effect scales. Independent: every term
    // carries its own free half-normal local scale.
    bool structured = true;
    double intercept_scale = 100.0;  // alpha0 ~ N(0, intercept_scale^2)
    double sigma_scale = 1.0;        // sigma ~ Cauchy+(0, sigma_scale)
    double sigma_y_scale = 5.0;      // sigma_y ~ Cauchy+(0, sigma_y_scale)

    // Point-mass settings for the hyperparameters; fixed values are excluded
    // from sampling.
    std::optional<double> fixed_intercept;
    std::optional<double> fixed_sigma;
    std::optional<double> fixed_sigma_y;
    std::optional<std::vector<double>> fixed_lambda;  // length n_lambda()
    std::optional<std::vector<double>> fixed_delta;   // length n_delta()
};

// Term structure plus the deterministic coefficient index map. Built via
// enumerate_terms(); immutable afterwards.
class ModelSpec {
  public:
    const std::vector<InteractionTerm>& terms() const { return terms_; }
    long coefficient_count() const { return P_; }
    int variable_count() const { return n_vars_; }
    const PriorConfig& prior() const { return prior_; }
    void set_prior(PriorConfig p);

    // Local-scale parameter vector layout. Structured: one lambda per main
    // effect plus one delta per interaction order present. Independent: one
    // lambda per term, no delta.
    int n_lambda() const { return n_lambda_; }
    int n_delta() const { return static_cast<int>(orders_.size()); }
    // Index of term t's own lambda (-1 for structured interactions).
    int lambda_index(int t) const { return lambda_index_[t]; }
    // Index of term t's delta (-1 for main effects or independent prior).
    int delta_index(int t) const { return delta_index_[t]; }
    // Lambda indices of term t's main-effect parents (structured
    // interactions; empty otherwise).
    std::span<const int> parent_lambdas(int t) const;
    // Interaction orders (>= 2) present, ascending; position = delta index.
    const std::vector<int>& interaction_orders() const { return orders_; }
    // Term index of a variable's main effect.
    int main_term_of(int var) const { return main_term_of_var_[var]; }

    // Label like "lambda[age]" / "delta[2]" for reporting.
    std::string lambda_name(int i, const std::vector<VariableSpec>& vars) const;
    std::string delta_name(int i) const;

    // Combo index of a level tuple for term t.
    long combo_index(int t, std::span<const int> levels) const;
    // Level labels of combo c of term t, joined with the cell-id separator.
    std::string combo_label(int t, long combo, const std::vector<VariableSpec>& vars) const;

    friend ModelSpec enumerate_terms(const std::vector<VariableSpec>& vars,
                                     const std::vector<std::vector<std::string>>& requested,
                                     PriorConfig prior);

  private:
    friend ModelSpec independent_prior_variant(const ModelSpec& spec);

    // Recompute lambda/delta/parent indices for the given prior structure.
    void rebuild_scale_layout(bool structured);

    std::vector<InteractionTerm> terms_;
    long P_ = 0;
    int n_vars_ = 0;
    int n_lambda_ = 0;
    std::vector<int> lambda_index_;
    std::vector<int> delta_index_;
    std::vector<int> parent_offset_;   // per term: start into parent_lambda_flat_
    std::vector<int> parent_count_;
    std::vector<int> parent_lambda_flat_;
    std::vector<int> orders_;
    std::vector<int> main_term_of_var_;
    std::vector<int> level_counts_cache_;  // per variable
    PriorConfig prior_;
};

// Build a spec from requested terms (each a set of variable names). Main
// effects required by hierarchy closure are added automatically. Duplicate
// requests and unknown variables are spec errors.
ModelSpec enumerate_terms(const std::vector<VariableSpec>& vars,
                          const std::vector<std::vector<std::string>>& requested,
                          PriorConfig prior = {});

// Parse term strings like "age" or "age:eth:edu" into variable-name sets.
std::vector<std::vector<std::string>> parse_term_strings(const std::vector<std::string>& terms);

// Same term structure with every term given its own free local scale.
ModelSpec independent_prior_variant(const ModelSpec& spec);

struct ParameterState {
    double intercept = 0.0;
    std::vector<double> coefficients;  // length P, natural scale
    std::vector<double> lambda;        // length spec.n_lambda(), all > 0
    std::vector<double> delta;         // length spec.n_delta(), all > 0
    double sigma = 1.0;
    double sigma_y = 1.0;
};

// delta * prod(parent main-effect scales); for a main effect just its own
// lambda (pass the single lambda and ignore delta).
double local_scale(int order, std::span<const double> parent_lambdas, double delta);

// Local scale of term t under the spec's prior structure.
double term_scale(const ModelSpec& spec, int t, std::span<const double> lambda,
                  std::span<const double> delta);

// Sum over terms of (local scale * sigma)^2: the between-cell variance of
// the exchangeable reduction used for weight derivation.
double sigma_theta_sq(const ParameterState& state, const ModelSpec& spec);

// theta_j = alpha0 + sum of the active coefficient of every term, for all J
// cells (including cells with no sample).
std::vector<double> cell_means(const ParameterState& state, const CellFrame& frame,
                               const ModelSpec& spec);

// Joint log density: normal likelihood in sufficient-statistics form plus
// coefficient priors and hyperpriors. Throws DomainError on non-positive
// scales.
double log_posterior(const ParameterState& state, const CellFrame& frame, const ModelSpec& spec);

// The posterior on the unconstrained sampling space: non-centered
// coefficients (alpha = scale * z) and log-transformed positive parameters,
// with Jacobian corrections. Pure and safe for concurrent evaluation.
class Posterior {
  public:
    Posterior(const CellFrame& frame, const ModelSpec& spec);

    int dim() const { return dim_; }
    const CellFrame& frame() const { return *frame_; }
    const ModelSpec& spec() const { return *spec_; }

    // Log density and gradient at q; grad must have size dim().
    double log_density_grad(std::span<const double> q, std::span<double> grad) const;
    double log_density(std::span<const double> q) const;

    // Map a point to the natural parametrization.
    ParameterState to_state(std::span<const double> q) const;

    // True for coordinates that live on a log scale (capped at +/-50 by the
    // sampler to avoid overflow in the heavy-tailed hyperpriors).
    const std::vector<char>& log_scale_coordinate() const { return log_scale_; }

    // Column names for reported draws: natural parameters followed by
    // derived theta[cell] and sigma_theta_sq.
    std::vector<std::string> column_names() const;
    int n_columns() const;
    // Fill one report row (size n_columns()) from a natural state.
    void report_row(const ParameterState& state, std::span<double> out) const;

  private:
    struct Layout {
        int intercept = -1;   // -1 when fixed
        int z_begin = -1;     // coefficient block start (always present)
        int lambda_begin = -1;
        int delta_begin = -1;
        int sigma = -1;
        int sigma_y = -1;
    };

    double unpack(std::span<const double> q, ParameterState* state,
                  std::vector<double>* scales) const;

    const CellFrame* frame_;
    const ModelSpec* spec_;
    Layout layout_;
    int dim_ = 0;
    std::vector<char> log_scale_;
    // combo_of_[t * n_occupied + k]: combo index of occupied cell k in term t.
    std::vector<long> combo_of_;
    std::vector<long> occ_;         // occupied cell indices
    std::vector<double> occ_n_;     // n_j
    std::vector<double> occ_mean_;  // y_bar_j
    std::vector<double> occ_ss_;    // (n_j - 1) * s_j^2
    double loglik_const_ = 0.0;     // -(n/2) log(2 pi)
};

}  // namespace mrpw

#endif  // MRPW_MODEL_HPP_
