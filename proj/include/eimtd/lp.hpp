#pragma once

#include <string>
#include <vector>

#include "eimtd/tensor.hpp"

namespace eimtd {

// maximize objective . x  subject to  le_rows x <= le_rhs,  eq_rows x = eq_rhs,  x >= 0.
struct LinearProgram {
    Vec objective;
    std::vector<Vec> le_rows;
    Vec le_rhs;
    std::vector<Vec> eq_rows;
    Vec eq_rhs;

    std::size_t num_vars() const { return objective.size(); }
    void add_le(Vec row, double rhs) {
        le_rows.push_back(std::move(row));
        le_rhs.push_back(rhs);
    }
    void add_eq(Vec row, double rhs) {
        eq_rows.push_back(std::move(row));
        eq_rhs.push_back(rhs);
    }
};

enum class LpStatus { optimal, infeasible, unbounded };

std::string to_string(LpStatus s);

struct LpResult {
    LpStatus status = LpStatus::infeasible;
    Vec x;
    double value = 0.0;
};

// Dense two-phase tableau simplex with Bland's anti-cycling rule. Primal
// feasibility tolerance 1e-9.
LpResult lp_solve(const LinearProgram& lp);

}  // namespace eimtd
