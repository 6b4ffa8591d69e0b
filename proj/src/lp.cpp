#include "eimtd/lp.hpp"

#include <cmath>
#include <limits>

#include "eimtd/error.hpp"

namespace eimtd {

std::string to_string(LpStatus s) {
    switch (s) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::unbounded: return "unbounded";
    }
    return "unknown";
}

namespace {

constexpr double kFeasTol = 1e-9;
constexpr double kPivotTol = 1e-12;

class Tableau {
public:
    Tableau(std::size_t rows, std::size_t cols) : a_(rows, Vec(cols + 1, 0.0)), basis_(rows, 0), cols_(cols) {}

    double& at(std::size_t r, std::size_t c) { return a_[r][c]; }
    double& rhs(std::size_t r) { return a_[r][cols_]; }
    std::size_t& basis(std::size_t r) { return basis_[r]; }
    std::size_t rows() const { return a_.size(); }
    std::size_t cols() const { return cols_; }

    void pivot(std::size_t r, std::size_t c) {
        const double p = a_[r][c];
        for (double& v : a_[r]) v /= p;
        for (std::size_t i = 0; i < a_.size(); ++i) {
            if (i == r) continue;
            const double f = a_[i][c];
            if (f == 0.0) continue;
            for (std::size_t j = 0; j <= cols_; ++j) a_[i][j] -= f * a_[r][j];
        }
        basis_[r] = c;
    }

    // Maximizes cost . x over columns where allowed[c]; returns false if unbounded.
    bool optimize(const Vec& cost, const std::vector<bool>& allowed) {
        for (;;) {
            // Reduced costs c_j - c_B B^-1 A_j; Bland: first improving column.
            std::size_t enter = cols_;
            for (std::size_t j = 0; j < cols_ && enter == cols_; ++j) {
                if (!allowed[j]) continue;
                double rc = cost[j];
                for (std::size_t r = 0; r < a_.size(); ++r) rc -= cost[basis_[r]] * a_[r][j];
                if (rc > kFeasTol) enter = j;
            }
            if (enter == cols_) return true;
            std::size_t leave = a_.size();
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < a_.size(); ++r) {
                const double coef = a_[r][enter];
                if (coef <= kPivotTol) continue;
                const double ratio = a_[r][cols_] / coef;
                if (ratio < best - 1e-15 ||
                    (std::abs(ratio - best) <= 1e-15 && leave < a_.size() && basis_[r] < basis_[leave])) {
                    best = ratio;
                    leave = r;
                }
            }
            if (leave == a_.size()) return false;
            pivot(leave, enter);
        }
    }

    void drop_row(std::size_t r) {
        a_.erase(a_.begin() + static_cast<long>(r));
        basis_.erase(basis_.begin() + static_cast<long>(r));
    }

private:
    std::vector<Vec> a_;
    std::vector<std::size_t> basis_;
    std::size_t cols_;
};

}  // namespace

LpResult lp_solve(const LinearProgram& lp) {
    const std::size_t n = lp.num_vars();
    require(n > 0, "linear program has no variables");
    require(lp.le_rows.size() == lp.le_rhs.size() && lp.eq_rows.size() == lp.eq_rhs.size(),
            "constraint rows and right-hand sides differ in count");
    for (const Vec& r : lp.le_rows) require(r.size() == n, "constraint row length mismatch");
    for (const Vec& r : lp.eq_rows) require(r.size() == n, "constraint row length mismatch");

    const std::size_t m_le = lp.le_rows.size();
    const std::size_t m = m_le + lp.eq_rows.size();

    // Columns: [x (n)] [slack per le row (m_le)] [artificial per row (m)].
    const std::size_t slack0 = n;
    const std::size_t art0 = n + m_le;
    const std::size_t cols = art0 + m;
    Tableau t(m, cols);

    std::vector<bool> needs_art(m, false);
    for (std::size_t r = 0; r < m; ++r) {
        const bool le = r < m_le;
        const Vec& row = le ? lp.le_rows[r] : lp.eq_rows[r - m_le];
        double b = le ? lp.le_rhs[r] : lp.eq_rhs[r - m_le];
        const double sgn = b < 0.0 ? -1.0 : 1.0;
        for (std::size_t j = 0; j < n; ++j) t.at(r, j) = sgn * row[j];
        if (le) t.at(r, slack0 + r) = sgn;
        t.rhs(r) = sgn * b;
        if (le && sgn > 0.0) {
            t.basis(r) = slack0 + r;
        } else {
            needs_art[r] = true;
            t.at(r, art0 + r) = 1.0;
            t.basis(r) = art0 + r;
        }
    }

    // Phase 1: maximize -sum(artificials).
    Vec phase1(cols, 0.0);
    bool any_art = false;
    for (std::size_t r = 0; r < m; ++r)
        if (needs_art[r]) {
            phase1[art0 + r] = -1.0;
            any_art = true;
        }
    std::vector<bool> allowed(cols, true);
    for (std::size_t r = 0; r < m; ++r)
        if (!needs_art[r]) allowed[art0 + r] = false;

    if (any_art) {
        t.optimize(phase1, allowed);
        double infeas = 0.0;
        for (std::size_t r = 0; r < t.rows(); ++r)
            if (t.basis(r) >= art0) infeas += t.rhs(r);
        if (infeas > kFeasTol) return {LpStatus::infeasible, {}, 0.0};
        // Drive remaining (zero-valued) artificials out of the basis.
        for (std::size_t r = 0; r < t.rows();) {
            if (t.basis(r) < art0) {
                ++r;
                continue;
            }
            std::size_t col = art0;
            for (std::size_t j = 0; j < art0; ++j)
                if (std::abs(t.at(r, j)) > 1e-9) {
                    col = j;
                    break;
                }
            if (col == art0) {
                t.drop_row(r);  // redundant constraint
            } else {
                t.pivot(r, col);
                ++r;
            }
        }
    }

    for (std::size_t j = art0; j < cols; ++j) allowed[j] = false;
    Vec cost(cols, 0.0);
    for (std::size_t j = 0; j < n; ++j) cost[j] = lp.objective[j];
    if (!t.optimize(cost, allowed)) return {LpStatus::unbounded, {}, 0.0};

    LpResult res;
    res.status = LpStatus::optimal;
    res.x.assign(n, 0.0);
    for (std::size_t r = 0; r < t.rows(); ++r)
        if (t.basis(r) < n) res.x[t.basis(r)] = std::max(0.0, t.rhs(r));
    for (std::size_t j = 0; j < n; ++j) res.value += lp.objective[j] * res.x[j];
    return res;
}

}  // namespace eimtd
