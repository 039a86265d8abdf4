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
#ifndef MRPW_CELLS_HPP_
#define MRPW_CELLS_HPP_

#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "mrpw/csv.hpp"

namespace mrpw {

// Level labels are joined with this separator to form cell ids, so labels
// must not contain it.
inline constexpr char kCellIdSep = ':';

struct VariableSpec {
    std::string name;
    std::vector<std::string> levels;  // ordered category labels, >= 2

    int level_count() const { return static_cast<int>(levels.size()); }
    // Index of a label, or -1.
    int level_index(const std::string& label) const;
};

void validate_variables(const std::vector<VariableSpec>& vars);

struct Cell {
    double pop_count = 0.0;   // N_j, possibly a sum of person weights
    long sample_count = 0;    // n_j
    double sample_mean = std::numeric_limits<double>::quiet_NaN();  // defined when n_j > 0
    double sample_sd = 0.0;   // 0 when n_j <= 1
    bool sample_only = false; // n_j > 0 but N_j == 0
};

// One sample unit resolved to a frame cell.
struct SampleUnit {
    long cell = 0;  // frame row index
    double y = 0.0;
};

// The joined population/sample poststratification table over the full
// cross-product of the declared variables. Immutable once finalized and safe
// to share across threads.
class CellFrame {
  public:
    explicit CellFrame(std::vector<VariableSpec> vars);

    long cell_count() const { return static_cast<long>(cells_.size()); }
    int variable_count() const { return static_cast<int>(vars_.size()); }
    const std::vector<VariableSpec>& variables() const { return vars_; }

    // Row index of a level tuple (row-major, last variable fastest).
    long index_of(std::span<const int> levels) const;
    std::vector<int> levels_of(long index) const;
    int level_of(long index, int var) const;
    std::string cell_id(long index) const;
    // Inverse of cell_id; throws SchemaError for unknown ids.
    long index_of_cell_id(const std::string& id) const;

    const Cell& cell(long index) const { return cells_[index]; }
    Cell& cell_mut(long index) { return cells_[index]; }

    double population_total() const { return pop_total_; }
    long sample_total() const { return sample_total_; }

    // Cells with n_j > 0, ascending.
    const std::vector<long>& occupied() const { return occupied_; }
    // Occupied cells flagged sample-only (N_j = 0); excluded from
    // poststratified totals.
    const std::vector<long>& flagged() const { return flagged_; }

    const std::vector<std::string>& warnings() const { return warnings_; }

    // Recompute totals, occupancy and flags after cells are filled in.
    void finalize();

  private:
    std::vector<VariableSpec> vars_;
    std::vector<long> strides_;
    std::vector<Cell> cells_;
    std::vector<long> occupied_;
    std::vector<long> flagged_;
    std::vector<std::string> warnings_;
    double pop_total_ = 0.0;
    long sample_total_ = 0;
};

struct FrameOptions {
    std::string outcome_column;           // required in the sample table
    std::string weight_column;            // optional person weight in the population table
    std::string count_column;             // set when the population table is pre-aggregated
};

// Cross-tabulate a unit-level sample against a population given either as
// unit rows (optionally person-weighted) or as pre-aggregated counts.
CellFrame build_cell_frame(const Table& sample, const Table& population,
                           std::vector<VariableSpec> vars, const FrameOptions& options);

// In-memory variant used by the simulation harness: units already resolved to
// cell indices, population given as per-cell counts.
CellFrame build_cell_frame(const std::vector<SampleUnit>& units,
                           std::span<const double> pop_counts,
                           std::vector<VariableSpec> vars);

// A domain predicate: conjunction of per-variable level clauses. An empty
// clause list selects every cell.
struct DomainClause {
    std::string variable;
    std::vector<std::string> levels;
    bool negate = false;  // true: variable's level must NOT be in `levels`
};

struct DomainSpec {
    std::string name;
    std::vector<DomainClause> clauses;
};

struct DomainMask {
    std::string name;
    std::vector<long> cells;    // ascending cell indices
    std::vector<char> member;   // size J indicator
};

DomainMask domain_mask(const CellFrame& frame, const DomainSpec& spec);

// Frame (de)serialization: one row per cell with level columns, N, n,
// y_bar, s. Round-trips exactly.
std::string frame_to_csv(const CellFrame& frame);
CellFrame frame_from_csv(const std::string& text);
void write_frame_csv(const std::string& path, const CellFrame& frame);
CellFrame read_frame_csv(const std::string& path);

}  // namespace mrpw

#endif  // MRPW_CELLS_HPP_
