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
#include "mrpw/cells.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "mrpw/errors.hpp"

namespace mrpw {

int VariableSpec::level_index(const std::string& label) const {
    for (std::size_t i = 0; i < levels.size(); ++i)
        if (levels[i] == label) return static_cast<int>(i);
    return -1;
}

void validate_variables(const std::vector<VariableSpec>& vars) {
    if (vars.empty()) throw SpecError("no weighting variables declared");
    std::set<std::string> names;
    for (const auto& v : vars) {
        if (v.name.empty()) throw SpecError("variable with empty name");
        if (!names.insert(v.name).second)
            throw SpecError("duplicate variable name '" + v.name + "'");
        if (v.levels.size() < 2)
            throw SpecError("variable '" + v.name + "' needs at least 2 levels, has " +
                            std::to_string(v.levels.size()));
        std::set<std::string> seen;
        for (const auto& label : v.levels) {
            if (label.empty())
                throw SpecError("variable '" + v.name + "' has an empty level label");
            if (label.find(kCellIdSep) != std::string::npos)
                throw SpecError("variable '" + v.name + "' level '" + label +
                                "' contains the reserved separator '" +
                                std::string(1, kCellIdSep) + "'");
            if (!seen.insert(label).second)
                throw SpecError("variable '" + v.name + "' has duplicate level '" + label + "'");
        }
    }
}

CellFrame::CellFrame(std::vector<VariableSpec> vars) : vars_(std::move(vars)) {
    validate_variables(vars_);
    long total = 1;
    strides_.assign(vars_.size(), 1);
    for (int v = static_cast<int>(vars_.size()) - 1; v >= 0; --v) {
        strides_[v] = total;
        total *= vars_[v].level_count();
    }
    cells_.assign(total, Cell{});
}

long CellFrame::index_of(std::span<const int> levels) const {
    long idx = 0;
    for (std::size_t v = 0; v < vars_.size(); ++v) idx += strides_[v] * levels[v];
    return idx;
}

std::vector<int> CellFrame::levels_of(long index) const {
    std::vector<int> out(vars_.size());
    for (std::size_t v = 0; v < vars_.size(); ++v) {
        out[v] = static_cast<int>((index / strides_[v]) % vars_[v].level_count());
    }
    return out;
}

int CellFrame::level_of(long index, int var) const {
    return static_cast<int>((index / strides_[var]) % vars_[var].level_count());
}

std::string CellFrame::cell_id(long index) const {
    std::string id;
    for (std::size_t v = 0; v < vars_.size(); ++v) {
        if (v) id.push_back(kCellIdSep);
        id += vars_[v].levels[level_of(index, static_cast<int>(v))];
    }
    return id;
}

long CellFrame::index_of_cell_id(const std::string& id) const {
    std::vector<int> levels(vars_.size());
    std::size_t pos = 0;
    for (std::size_t v = 0; v < vars_.size(); ++v) {
        const bool last = (v + 1 == vars_.size());
        const std::size_t next = last ? id.size() : id.find(kCellIdSep, pos);
        if (!last && next == std::string::npos)
            throw SchemaError("cell id '" + id + "' has too few fields");
        const std::string label = id.substr(pos, next - pos);
        const int li = vars_[v].level_index(label);
        if (li < 0)
            throw SchemaError("cell id '" + id + "': unknown level '" + label +
                              "' for variable '" + vars_[v].name + "'");
        levels[v] = li;
        pos = next + 1;
    }
    return index_of(levels);
}

void CellFrame::finalize() {
    pop_total_ = 0.0;
    sample_total_ = 0;
    occupied_.clear();
    flagged_.clear();
    warnings_.clear();
    long flagged_n = 0;
    for (long j = 0; j < cell_count(); ++j) {
        Cell& c = cells_[j];
        if (c.pop_count < 0.0)
            throw DomainError("cell " + cell_id(j) + " has negative population count");
        if (c.sample_count < 0)
            throw DomainError("cell " + cell_id(j) + " has negative sample count");
        if (c.sample_count > 0 && std::isnan(c.sample_mean))
            throw DomainError("cell " + cell_id(j) + " occupied but has no sample mean");
        pop_total_ += c.pop_count;
        sample_total_ += c.sample_count;
        c.sample_only = (c.sample_count > 0 && c.pop_count == 0.0);
        if (c.sample_count > 0) occupied_.push_back(j);
        if (c.sample_only) {
            flagged_.push_back(j);
            flagged_n += c.sample_count;
        }
    }
    if (flagged_n > 0) {
        warnings_.push_back("frame: " + std::to_string(flagged_.size()) +
                            " sample cells have no population counterpart (" +
                            std::to_string(flagged_n) +
                            " units); they are excluded from poststratified totals");
    }
}

namespace {

// Resolve one table row to a level tuple, naming row/column/value on failure.
std::vector<int> resolve_levels(const Table& table, std::size_t row,
                                const std::vector<VariableSpec>& vars,
                                const std::vector<int>& var_cols, const std::string& table_name) {
    std::vector<int> levels(vars.size());
    for (std::size_t v = 0; v < vars.size(); ++v) {
        const std::string& value = table.rows[row][var_cols[v]];
        const int li = vars[v].level_index(value);
        if (li < 0)
            throw SchemaError(table_name + " row " + std::to_string(row + 1) + ", column '" +
                              vars[v].name + "': unknown level '" + value + "'");
        levels[v] = li;
    }
    return levels;
}

struct Accumulator {
    long n = 0;
    double sum = 0.0;
    double sum_sq = 0.0;

    void add(double y) {
        ++n;
        sum += y;
        sum_sq += y * y;
    }
    double mean() const { return sum / static_cast<double>(n); }
    double sd() const {
        if (n <= 1) return 0.0;
        const double m = mean();
        double ss = sum_sq - static_cast<double>(n) * m * m;
        if (ss < 0.0) ss = 0.0;
        return std::sqrt(ss / static_cast<double>(n - 1));
    }
};

}  // namespace

CellFrame build_cell_frame(const Table& sample, const Table& population,
                           std::vector<VariableSpec> vars, const FrameOptions& options) {
    validate_variables(vars);
    CellFrame frame(vars);

    if (sample.rows.empty()) throw InputError("sample table has no rows");

    std::vector<int> sample_cols, pop_cols;
    for (const auto& v : frame.variables()) {
        sample_cols.push_back(sample.require_col(v.name, "sample"));
        pop_cols.push_back(population.require_col(v.name, "population"));
    }
    const int outcome_col = sample.require_col(options.outcome_column, "sample");

    std::vector<Accumulator> acc(frame.cell_count());
    for (std::size_t r = 0; r < sample.rows.size(); ++r) {
        const auto levels = resolve_levels(sample, r, frame.variables(), sample_cols, "sample");
        const double y = parse_double(sample.rows[r][outcome_col],
                                      "sample row " + std::to_string(r + 1) + ", column '" +
                                          options.outcome_column + "'");
        acc[frame.index_of(levels)].add(y);
    }

    const bool aggregated = !options.count_column.empty();
    const int count_col = aggregated ? population.require_col(options.count_column, "population") : -1;
    const int weight_col =
        (!aggregated && !options.weight_column.empty())
            ? population.require_col(options.weight_column, "population")
            : -1;

    for (std::size_t r = 0; r < population.rows.size(); ++r) {
        const auto levels =
            resolve_levels(population, r, frame.variables(), pop_cols, "population");
        double w = 1.0;
        if (aggregated) {
            w = parse_double(population.rows[r][count_col],
                             "population row " + std::to_string(r + 1) + ", column '" +
                                 options.count_column + "'");
        } else if (weight_col >= 0) {
            w = parse_double(population.rows[r][weight_col],
                             "population row " + std::to_string(r + 1) + ", column '" +
                                 options.weight_column + "'");
        }
        if (w < 0.0)
            throw DomainError("population row " + std::to_string(r + 1) +
                              ": negative count/weight " + population.rows[r][std::max(count_col, weight_col)]);
        frame.cell_mut(frame.index_of(levels)).pop_count += w;
    }

    for (long j = 0; j < frame.cell_count(); ++j) {
        if (acc[j].n == 0) continue;
        Cell& c = frame.cell_mut(j);
        c.sample_count = acc[j].n;
        c.sample_mean = acc[j].mean();
        c.sample_sd = acc[j].sd();
    }
    frame.finalize();
    return frame;
}

CellFrame build_cell_frame(const std::vector<SampleUnit>& units,
                           std::span<const double> pop_counts, std::vector<VariableSpec> vars) {
    CellFrame frame(std::move(vars));
    if (units.empty()) throw InputError("sample has no units");
    if (static_cast<long>(pop_counts.size()) != frame.cell_count())
        throw ContractError("population counts length " + std::to_string(pop_counts.size()) +
                            " != cell count " + std::to_string(frame.cell_count()));
    std::vector<Accumulator> acc(frame.cell_count());
    for (const auto& u : units) {
        if (u.cell < 0 || u.cell >= frame.cell_count())
            throw ContractError("sample unit cell index out of range");
        acc[u.cell].add(u.y);
    }
    for (long j = 0; j < frame.cell_count(); ++j) {
        Cell& c = frame.cell_mut(j);
        c.pop_count = pop_counts[j];
        if (acc[j].n == 0) continue;
        c.sample_count = acc[j].n;
        c.sample_mean = acc[j].mean();
        c.sample_sd = acc[j].sd();
    }
    frame.finalize();
    return frame;
}

DomainMask domain_mask(const CellFrame& frame, const DomainSpec& spec) {
    const auto& vars = frame.variables();
    // Per-clause allowed-level sets resolved up front.
    std::vector<int> clause_var;
    std::vector<std::vector<char>> clause_allow;
    for (const auto& clause : spec.clauses) {
        int vi = -1;
        for (std::size_t v = 0; v < vars.size(); ++v)
            if (vars[v].name == clause.variable) vi = static_cast<int>(v);
        if (vi < 0)
            throw SpecError("domain '" + spec.name + "': unknown variable '" + clause.variable +
                            "'");
        std::vector<char> allow(vars[vi].level_count(), clause.negate ? 1 : 0);
        for (const auto& label : clause.levels) {
            const int li = vars[vi].level_index(label);
            if (li < 0)
                throw SpecError("domain '" + spec.name + "': unknown level '" + label +
                                "' for variable '" + clause.variable + "'");
            allow[li] = clause.negate ? 0 : 1;
        }
        clause_var.push_back(vi);
        clause_allow.push_back(std::move(allow));
    }

    DomainMask mask;
    mask.name = spec.name;
    mask.member.assign(frame.cell_count(), 0);
    for (long j = 0; j < frame.cell_count(); ++j) {
        bool in = true;
        for (std::size_t c = 0; c < clause_var.size(); ++c) {
            if (!clause_allow[c][frame.level_of(j, clause_var[c])]) {
                in = false;
                break;
            }
        }
        if (in) {
            mask.member[j] = 1;
            mask.cells.push_back(j);
        }
    }
    if (mask.cells.empty())
        throw DomainError("domain '" + spec.name + "' resolves to no cells");
    return mask;
}

std::string frame_to_csv(const CellFrame& frame) {
    std::ostringstream out;
    out << "cell_id";
    for (const auto& v : frame.variables()) out << ',' << csv_quote(v.name);
    out << ",N,n,y_bar,s\n";
    for (long j = 0; j < frame.cell_count(); ++j) {
        const Cell& c = frame.cell(j);
        out << csv_quote(frame.cell_id(j));
        const auto levels = frame.levels_of(j);
        for (std::size_t v = 0; v < frame.variables().size(); ++v)
            out << ',' << csv_quote(frame.variables()[v].levels[levels[v]]);
        out << ',' << fmt_double(c.pop_count) << ',' << c.sample_count << ','
            << (c.sample_count > 0 ? fmt_double(c.sample_mean) : std::string())
            << ',' << fmt_double(c.sample_sd) << '\n';
    }
    return out.str();
}

CellFrame frame_from_csv(const std::string& text) {
    const Table t = read_csv_string(text);
    if (t.columns.size() < 6 || t.columns.front() != "cell_id")
        throw SchemaError("frame csv: unexpected header");
    // Variable names sit between cell_id and the N column.
    std::size_t n_vars = 0;
    while (1 + n_vars < t.columns.size() && t.columns[1 + n_vars] != "N") ++n_vars;
    if (n_vars == 0 || 1 + n_vars + 4 != t.columns.size())
        throw SchemaError("frame csv: unexpected header layout");

    // Recover the level order of each variable from first appearance; the
    // writer emits the full cross product in declared order, so the first
    // J/levels rows enumerate every level in order.
    std::vector<VariableSpec> vars(n_vars);
    for (std::size_t v = 0; v < n_vars; ++v) {
        vars[v].name = t.columns[1 + v];
        for (const auto& row : t.rows) {
            const std::string& label = row[1 + v];
            if (vars[v].level_index(label) < 0) vars[v].levels.push_back(label);
        }
    }

    CellFrame frame(vars);
    if (static_cast<long>(t.rows.size()) != frame.cell_count())
        throw SchemaError("frame csv: expected " + std::to_string(frame.cell_count()) +
                          " rows, found " + std::to_string(t.rows.size()));
    const int n_col = t.col("N");
    const int count_col = t.col("n");
    const int mean_col = t.col("y_bar");
    const int sd_col = t.col("s");
    for (std::size_t r = 0; r < t.rows.size(); ++r) {
        std::vector<int> levels(n_vars);
        for (std::size_t v = 0; v < n_vars; ++v) {
            levels[v] = vars[v].level_index(t.rows[r][1 + v]);
            if (levels[v] < 0)
                throw SchemaError("frame csv row " + std::to_string(r + 1) + ": unknown level");
        }
        Cell& c = frame.cell_mut(frame.index_of(levels));
        const std::string ctx = "frame csv row " + std::to_string(r + 1);
        c.pop_count = parse_double(t.rows[r][n_col], ctx);
        c.sample_count = static_cast<long>(parse_double(t.rows[r][count_col], ctx));
        if (!t.rows[r][mean_col].empty()) c.sample_mean = parse_double(t.rows[r][mean_col], ctx);
        c.sample_sd = parse_double(t.rows[r][sd_col], ctx);
    }
    frame.finalize();
    return frame;
}

void write_frame_csv(const std::string& path, const CellFrame& frame) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write '" + path + "'");
    out << frame_to_csv(frame);
}

CellFrame read_frame_csv(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return frame_from_csv(ss.str());
}

}  // namespace mrpw
