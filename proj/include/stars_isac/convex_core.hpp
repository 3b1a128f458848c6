// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").

#pragma once

#include "stars_isac/types.hpp"

#include <string>
#include <utility>
#include <vector>

namespace stars_isac {

// A declared optimization variable. Complex variables occupy 2*size real slots,
// real parts first. Matrix variables are stored column-major.
struct Var {
    int offset = -1;
    int size = 0;
    int rows = 0, cols = 0;
    bool is_complex = false;
    std::string name;

    int real_size() const { return is_complex ? 2 * size : size; }
};

// Real-valued affine expression in the realified variables.
struct LinExpr {
    std::vector<std::pair<int, double>> terms;
    double constant = 0.0;

    LinExpr() = default;
    LinExpr(double c) : constant(c) {} // NOLINT(google-explicit-constructor)

    LinExpr &operator+=(const LinExpr &o);
    LinExpr &operator-=(const LinExpr &o);
    LinExpr &operator*=(double s);
};

LinExpr operator+(LinExpr a, const LinExpr &b);
LinExpr operator-(LinExpr a, const LinExpr &b);
LinExpr operator*(double s, LinExpr a);
LinExpr operator-(LinExpr a);

LinExpr scalar(const Var &v, int i = 0); // entry i of a real variable
LinExpr re_inner(const cvec &a, const Var &x); // Re{a^H x}; x complex or real

// Complex vector affine map: sum of A_v * x_v plus an offset.
class CAffine {
  public:
    explicit CAffine(int rows);
    CAffine &add(const Var &v, const cmat &A);
    CAffine &add_offset(const cvec &b);
    int rows() const { return rows_; }

    std::vector<std::pair<Var, cmat>> terms;
    cvec offset;

  private:
    int rows_;
};

// Quadratic expression: sum of weighted squared norms and Hermitian forms plus a
// real affine part.
class QuadExpr {
  public:
    struct Piece {
        std::vector<int> idx; // realified indices
        rmat P;               // x_idx^T P x_idx
    };

    QuadExpr() = default;
    QuadExpr(const LinExpr &l) : lin(l) {} // NOLINT(google-explicit-constructor)
    QuadExpr(double c) : lin(c) {}         // NOLINT(google-explicit-constructor)

    QuadExpr &add_sq_norm(const CAffine &y, double weight = 1.0); // weight * ||y||^2
    QuadExpr &add_hermitian(const Var &x, const cmat &Q, double weight = 1.0); // weight * x^H Q x
    QuadExpr &operator+=(const QuadExpr &o);
    QuadExpr &operator-=(const QuadExpr &o);
    QuadExpr &operator*=(double s);

    std::vector<Piece> pieces;
    LinExpr lin;
};

QuadExpr operator+(QuadExpr a, const QuadExpr &b);
QuadExpr operator-(QuadExpr a, const QuadExpr &b);
QuadExpr operator*(double s, QuadExpr a);

enum class SolveStatus { optimal, infeasible, max_iters };
std::string to_string(SolveStatus s);

struct SolverOptions {
    double tol = 1e-8;
    int max_iters = 200;
};

class ConvexProblem;

struct SolveOutcome {
    SolveStatus status = SolveStatus::max_iters;
    rvec assignment;              // realified
    double objective_value = 0.0; // in the user's sense (max or min)
    double kkt_residual = 0.0;    // relative, comparable with the tolerance
    double max_violation = 0.0;   // largest constraint value at the assignment (<= 0 when satisfied)
    int iterations = 0;
    bool strictly_feasible = false; // inequalities strictly satisfied, equalities within tolerance
    std::string message;

    bool usable() const { return status == SolveStatus::optimal || strictly_feasible; }
    cvec complex_value(const Var &v) const;
    cmat matrix_value(const Var &v) const;
    rvec real_value(const Var &v) const;
    double scalar_value(const Var &v, int i = 0) const;
};

class ConvexProblem {
  public:
    Var add_complex(const std::string &name, int n);
    Var add_complex_matrix(const std::string &name, int rows, int cols);
    Var add_real(const std::string &name, int n = 1);
    int n_real() const { return n_; }

    // Throws std::invalid_argument when the objective is not concave / convex.
    void maximize(const QuadExpr &f);
    void minimize(const QuadExpr &f);

    // lhs <= rhs with lhs - rhs convex; throws std::invalid_argument otherwise.
    void add_le(const QuadExpr &lhs, const QuadExpr &rhs, const std::string &label = "");
    void add_ge(const QuadExpr &lhs, const QuadExpr &rhs, const std::string &label = "");
    // ||y|| <= t
    void add_soc(const CAffine &y, const LinExpr &t, const std::string &label = "");
    void add_eq(const LinExpr &lhs, const LinExpr &rhs, const std::string &label = "");
    void add_eq(const CAffine &y, const std::string &label = ""); // y == 0

    void set_warm_start(const Var &v, const cvec &value);
    void set_warm_start(const Var &v, const rvec &value);
    void set_warm_start(const Var &v, const cmat &value);

    // Human-readable listing of variables and constraints, evaluated at the warm start.
    std::string dump() const;

    SolveOutcome solve(const SolverOptions &opt = {}) const;

    // Compiled smooth convex function over a realified support.
    struct Fn {
        bool soc = false;
        std::vector<int> S;
        rmat P; // quadratic: x_S^T P x_S + q^T x_S + r
        rvec q;
        double r = 0.0;
        rmat F; // cone: ||F x_S + g||^2 / (c^T x_S + d) - (c^T x_S + d)
        rvec g;
        rvec c;
        double d = 0.0;
        std::string label;
    };

    int n_inequalities() const { return static_cast<int>(ineq_.size()); }
    int n_equalities() const { return static_cast<int>(eq_.size()); }

  private:
    Fn compile(const QuadExpr &f, const std::string &label) const;
    void check_var(const Var &v) const;

    int n_ = 0;
    std::vector<Var> vars_;
    Fn objective_;
    bool maximize_ = true;
    bool has_objective_ = false;
    std::vector<Fn> ineq_;
    std::vector<LinExpr> eq_;
    std::vector<std::string> eq_labels_;
    std::vector<std::pair<int, double>> warm_;
};

} // namespace stars_isac
