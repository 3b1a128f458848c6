// SPDX-License-Identifier: Apache-2.0
// stars_isac: energy-efficient STARS-assisted ISAC optimization
// Licensed under the Apache License, Version 2.0 (the "License").
//
// Primal-dual interior-point method for smooth convex problems with complex
// variables realified to [re; im]. Second-order-cone constraints enter through
// the smooth convex form ||y||^2 / t - t <= 0 on t > 0.

#include "stars_isac/convex_core.hpp"

#include "stars_isac/log.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>

namespace stars_isac {

// ---------------------------------------------------------------- expressions

LinExpr &LinExpr::operator+=(const LinExpr &o) {
    terms.insert(terms.end(), o.terms.begin(), o.terms.end());
    constant += o.constant;
    return *this;
}

LinExpr &LinExpr::operator-=(const LinExpr &o) {
    for (const auto &[i, v] : o.terms) terms.emplace_back(i, -v);
    constant -= o.constant;
    return *this;
}

LinExpr &LinExpr::operator*=(double s) {
    for (auto &t : terms) t.second *= s;
    constant *= s;
    return *this;
}

LinExpr operator+(LinExpr a, const LinExpr &b) { return a += b; }
LinExpr operator-(LinExpr a, const LinExpr &b) { return a -= b; }
LinExpr operator*(double s, LinExpr a) { return a *= s; }
LinExpr operator-(LinExpr a) { return a *= -1.0; }

LinExpr scalar(const Var &v, int i) {
    if (v.is_complex) throw std::invalid_argument("scalar(): variable '" + v.name + "' is complex");
    if (i < 0 || i >= v.size) throw std::out_of_range("scalar(): index out of range for '" + v.name + "'");
    LinExpr e;
    e.terms.emplace_back(v.offset + i, 1.0);
    return e;
}

LinExpr re_inner(const cvec &a, const Var &x) {
    if (a.size() != x.size) throw std::invalid_argument("re_inner: length mismatch for '" + x.name + "'");
    LinExpr e;
    // Re{conj(a) x} = ar xr + ai xi
    for (int i = 0; i < x.size; ++i) {
        e.terms.emplace_back(x.offset + i, a(i).real());
        if (x.is_complex) e.terms.emplace_back(x.offset + x.size + i, a(i).imag());
    }
    return e;
}

CAffine::CAffine(int rows) : offset(cvec::Zero(rows)), rows_(rows) {}

CAffine &CAffine::add(const Var &v, const cmat &A) {
    if (A.rows() != rows_ || A.cols() != v.size)
        throw std::invalid_argument("CAffine::add: coefficient shape mismatch for '" + v.name + "'");
    terms.emplace_back(v, A);
    return *this;
}

CAffine &CAffine::add_offset(const cvec &b) {
    if (b.size() != rows_) throw std::invalid_argument("CAffine::add_offset: length mismatch");
    offset += b;
    return *this;
}

namespace {

// Realified map y = F x_S + g of a complex affine expression, rows [re; im].
struct RealAffine {
    std::vector<int> S;
    rmat F;
    rvec g;
};

RealAffine realify(const CAffine &y) {
    const int m = y.rows();
    std::map<int, int> pos;
    for (const auto &[v, A] : y.terms)
        for (int j = 0; j < v.real_size(); ++j) pos.emplace(v.offset + j, 0);
    RealAffine out;
    for (auto &[idx, p] : pos) {
        p = static_cast<int>(out.S.size());
        out.S.push_back(idx);
    }
    out.F = rmat::Zero(2 * m, static_cast<Eigen::Index>(out.S.size()));
    for (const auto &[v, A] : y.terms) {
        for (int j = 0; j < v.size; ++j) {
            const int cr = pos[v.offset + j];
            out.F.col(cr).head(m) += A.col(j).real();
            out.F.col(cr).tail(m) += A.col(j).imag();
            if (v.is_complex) {
                const int ci = pos[v.offset + v.size + j];
                out.F.col(ci).head(m) -= A.col(j).imag();
                out.F.col(ci).tail(m) += A.col(j).real();
            }
        }
    }
    out.g.resize(2 * m);
    out.g.head(m) = y.offset.real();
    out.g.tail(m) = y.offset.imag();
    return out;
}

} // namespace

QuadExpr &QuadExpr::add_sq_norm(const CAffine &y, double weight) {
    const RealAffine ra = realify(y);
    if (!ra.S.empty()) {
        pieces.push_back({ra.S, weight * (ra.F.transpose() * ra.F)});
        const rvec lin_c = 2.0 * weight * (ra.F.transpose() * ra.g);
        for (std::size_t j = 0; j < ra.S.size(); ++j) lin.terms.emplace_back(ra.S[j], lin_c(static_cast<Eigen::Index>(j)));
    }
    lin.constant += weight * ra.g.squaredNorm();
    return *this;
}

QuadExpr &QuadExpr::add_hermitian(const Var &x, const cmat &Q, double weight) {
    if (Q.rows() != x.size || Q.cols() != x.size)
        throw std::invalid_argument("add_hermitian: shape mismatch for '" + x.name + "'");
    Piece pc;
    for (int j = 0; j < x.real_size(); ++j) pc.idx.push_back(x.offset + j);
    const rmat Qr = Q.real(), Qi = Q.imag();
    if (x.is_complex) {
        const int n = x.size;
        pc.P.resize(2 * n, 2 * n);
        pc.P << Qr, -Qi, Qi, Qr;
    } else {
        pc.P = Qr;
    }
    pc.P = 0.5 * weight * (pc.P + pc.P.transpose());
    pieces.push_back(std::move(pc));
    return *this;
}

QuadExpr &QuadExpr::operator+=(const QuadExpr &o) {
    pieces.insert(pieces.end(), o.pieces.begin(), o.pieces.end());
    lin += o.lin;
    return *this;
}

QuadExpr &QuadExpr::operator-=(const QuadExpr &o) {
    for (const auto &p : o.pieces) pieces.push_back({p.idx, -p.P});
    lin -= o.lin;
    return *this;
}

QuadExpr &QuadExpr::operator*=(double s) {
    for (auto &p : pieces) p.P *= s;
    lin *= s;
    return *this;
}

QuadExpr operator+(QuadExpr a, const QuadExpr &b) { return a += b; }
QuadExpr operator-(QuadExpr a, const QuadExpr &b) { return a -= b; }
QuadExpr operator*(double s, QuadExpr a) { return a *= s; }

std::string to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::optimal: return "optimal";
    case SolveStatus::infeasible: return "infeasible";
    case SolveStatus::max_iters: return "max_iters";
    }
    return "max_iters";
}

// ------------------------------------------------------------------- outcome

cvec SolveOutcome::complex_value(const Var &v) const {
    if (!v.is_complex) throw std::invalid_argument("complex_value: '" + v.name + "' is real");
    cvec out(v.size);
    for (int i = 0; i < v.size; ++i) out(i) = cplx(assignment(v.offset + i), assignment(v.offset + v.size + i));
    return out;
}

cmat SolveOutcome::matrix_value(const Var &v) const {
    const cvec flat = complex_value(v);
    return Eigen::Map<const cmat>(flat.data(), v.rows, v.cols);
}

rvec SolveOutcome::real_value(const Var &v) const {
    if (v.is_complex) throw std::invalid_argument("real_value: '" + v.name + "' is complex");
    return assignment.segment(v.offset, v.size);
}

double SolveOutcome::scalar_value(const Var &v, int i) const { return real_value(v)(i); }

// ------------------------------------------------------------------- problem

Var ConvexProblem::add_complex(const std::string &name, int n) {
    if (n <= 0) throw std::invalid_argument("variable '" + name + "' must have positive size");
    Var v{n_, n, n, 1, true, name};
    n_ += 2 * n;
    vars_.push_back(v);
    return v;
}

Var ConvexProblem::add_complex_matrix(const std::string &name, int rows, int cols) {
    Var v = add_complex(name, rows * cols);
    v.rows = rows;
    v.cols = cols;
    vars_.back() = v;
    return v;
}

Var ConvexProblem::add_real(const std::string &name, int n) {
    if (n <= 0) throw std::invalid_argument("variable '" + name + "' must have positive size");
    Var v{n_, n, n, 1, false, name};
    n_ += n;
    vars_.push_back(v);
    return v;
}

void ConvexProblem::check_var(const Var &v) const {
    if (v.offset < 0 || v.offset + v.real_size() > n_)
        throw std::invalid_argument("variable '" + v.name + "' is not declared in this problem");
}

ConvexProblem::Fn ConvexProblem::compile(const QuadExpr &f, const std::string &label) const {
    std::map<int, int> pos;
    for (const auto &pc : f.pieces)
        for (int i : pc.idx) pos.emplace(i, 0);
    for (const auto &[i, v] : f.lin.terms) pos.emplace(i, 0);
    Fn fn;
    fn.label = label;
    for (auto &[idx, p] : pos) {
        if (idx < 0 || idx >= n_) throw std::invalid_argument("expression '" + label + "' references an undeclared variable");
        p = static_cast<int>(fn.S.size());
        fn.S.push_back(idx);
    }
    const auto s = static_cast<Eigen::Index>(fn.S.size());
    fn.P = rmat::Zero(s, s);
    fn.q = rvec::Zero(s);
    for (const auto &pc : f.pieces)
        for (std::size_t a = 0; a < pc.idx.size(); ++a)
            for (std::size_t b = 0; b < pc.idx.size(); ++b)
                fn.P(pos[pc.idx[a]], pos[pc.idx[b]]) += pc.P(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
    fn.P = 0.5 * (fn.P + fn.P.transpose()).eval();
    for (const auto &[i, v] : f.lin.terms) fn.q(pos[i]) += v;
    fn.r = f.lin.constant;

    if (s > 0 && fn.P.cwiseAbs().maxCoeff() > 0.0) {
        Eigen::SelfAdjointEigenSolver<rmat> es(fn.P, Eigen::EigenvaluesOnly);
        const double lo = es.eigenvalues().minCoeff();
        const double hi = es.eigenvalues().cwiseAbs().maxCoeff();
        if (lo < -1e-8 * std::max(1.0, hi)) {
            char buf[200];
            std::snprintf(buf, sizeof buf, "'%s' is not convex: quadratic form has eigenvalue %.3g",
                          label.empty() ? "expression" : label.c_str(), lo);
            throw std::invalid_argument(buf);
        }
    }
    return fn;
}

void ConvexProblem::maximize(const QuadExpr &f) {
    try {
        objective_ = compile(-1.0 * f, "objective");
    } catch (const std::invalid_argument &) {
        throw std::invalid_argument("maximized objective is not concave");
    }
    maximize_ = true;
    has_objective_ = true;
}

void ConvexProblem::minimize(const QuadExpr &f) {
    objective_ = compile(f, "objective");
    maximize_ = false;
    has_objective_ = true;
}

void ConvexProblem::add_le(const QuadExpr &lhs, const QuadExpr &rhs, const std::string &label) {
    ineq_.push_back(compile(lhs - rhs, label.empty() ? "c" + std::to_string(ineq_.size()) : label));
}

void ConvexProblem::add_ge(const QuadExpr &lhs, const QuadExpr &rhs, const std::string &label) {
    add_le(rhs, lhs, label);
}

void ConvexProblem::add_soc(const CAffine &y, const LinExpr &t, const std::string &label) {
    const RealAffine ra = realify(y);
    std::map<int, int> pos;
    for (int i : ra.S) pos.emplace(i, 0);
    for (const auto &[i, v] : t.terms) pos.emplace(i, 0);
    Fn fn;
    fn.soc = true;
    fn.label = label.empty() ? "c" + std::to_string(ineq_.size()) : label;
    for (auto &[idx, p] : pos) {
        if (idx < 0 || idx >= n_) throw std::invalid_argument("cone '" + fn.label + "' references an undeclared variable");
        p = static_cast<int>(fn.S.size());
        fn.S.push_back(idx);
    }
    const auto s = static_cast<Eigen::Index>(fn.S.size());
    fn.F = rmat::Zero(ra.F.rows(), s);
    for (std::size_t j = 0; j < ra.S.size(); ++j) fn.F.col(pos[ra.S[j]]) += ra.F.col(static_cast<Eigen::Index>(j));
    fn.g = ra.g;
    fn.c = rvec::Zero(s);
    for (const auto &[i, v] : t.terms) fn.c(pos[i]) += v;
    fn.d = t.constant;
    ineq_.push_back(std::move(fn));
}

void ConvexProblem::add_eq(const LinExpr &lhs, const LinExpr &rhs, const std::string &label) {
    for (const auto &[i, v] : lhs.terms)
        if (i < 0 || i >= n_) throw std::invalid_argument("equality references an undeclared variable");
    for (const auto &[i, v] : rhs.terms)
        if (i < 0 || i >= n_) throw std::invalid_argument("equality references an undeclared variable");
    eq_.push_back(lhs - rhs);
    eq_labels_.push_back(label.empty() ? "e" + std::to_string(eq_.size() - 1) : label);
}

void ConvexProblem::add_eq(const CAffine &y, const std::string &label) {
    const RealAffine ra = realify(y);
    for (Eigen::Index r = 0; r < ra.F.rows(); ++r) {
        LinExpr e(ra.g(r));
        for (std::size_t j = 0; j < ra.S.size(); ++j)
            if (ra.F(r, static_cast<Eigen::Index>(j)) != 0.0) e.terms.emplace_back(ra.S[j], ra.F(r, static_cast<Eigen::Index>(j)));
        eq_.push_back(e);
        eq_labels_.push_back((label.empty() ? "e" : label) + "[" + std::to_string(r) + "]");
    }
}

void ConvexProblem::set_warm_start(const Var &v, const cvec &value) {
    check_var(v);
    if (!v.is_complex || value.size() != v.size) throw std::invalid_argument("warm start shape mismatch for '" + v.name + "'");
    for (int i = 0; i < v.size; ++i) {
        warm_.emplace_back(v.offset + i, value(i).real());
        warm_.emplace_back(v.offset + v.size + i, value(i).imag());
    }
}

void ConvexProblem::set_warm_start(const Var &v, const rvec &value) {
    check_var(v);
    if (v.is_complex || value.size() != v.size) throw std::invalid_argument("warm start shape mismatch for '" + v.name + "'");
    for (int i = 0; i < v.size; ++i) warm_.emplace_back(v.offset + i, value(i));
}

void ConvexProblem::set_warm_start(const Var &v, const cmat &value) {
    if (value.rows() != v.rows || value.cols() != v.cols)
        throw std::invalid_argument("warm start shape mismatch for '" + v.name + "'");
    set_warm_start(v, cvec(Eigen::Map<const cvec>(value.data(), value.size())));
}

// ------------------------------------------------------------------ evaluation

namespace {

using Fn = ConvexProblem::Fn;

rvec gather(const rvec &x, const std::vector<int> &S) {
    rvec out(static_cast<Eigen::Index>(S.size()));
    for (std::size_t j = 0; j < S.size(); ++j) out(static_cast<Eigen::Index>(j)) = x(S[j]);
    return out;
}

// Value only; false outside the domain.
bool fn_value(const Fn &f, const rvec &x, double &val) {
    const rvec xs = gather(x, f.S);
    if (!f.soc) {
        val = xs.dot(f.P * xs) + f.q.dot(xs) + f.r;
        return std::isfinite(val);
    }
    const double t = f.c.dot(xs) + f.d;
    if (!(t > 0.0)) return false;
    const rvec y = f.F * xs + f.g;
    val = y.squaredNorm() / t - t;
    return std::isfinite(val);
}

void fn_derivs(const Fn &f, const rvec &x, double &val, rvec &grad, rmat *hess) {
    const rvec xs = gather(x, f.S);
    if (!f.soc) {
        const rvec Px = f.P * xs;
        val = xs.dot(Px) + f.q.dot(xs) + f.r;
        grad = 2.0 * Px + f.q;
        if (hess) *hess = 2.0 * f.P;
        return;
    }
    const double t = f.c.dot(xs) + f.d;
    const rvec y = f.F * xs + f.g;
    const double yy = y.squaredNorm();
    val = yy / t - t;
    grad = (2.0 / t) * (f.F.transpose() * y) - (yy / (t * t) + 1.0) * f.c;
    if (hess) {
        const rmat Mm = f.F - (1.0 / t) * y * f.c.transpose();
        *hess = (2.0 / t) * (Mm.transpose() * Mm);
    }
}

void scatter_add(rvec &dst, const std::vector<int> &S, const rvec &src, double w = 1.0) {
    for (std::size_t j = 0; j < S.size(); ++j) dst(S[j]) += w * src(static_cast<Eigen::Index>(j));
}

void scatter_add(rmat &dst, const std::vector<int> &S, const rmat &src, double w = 1.0) {
    for (std::size_t a = 0; a < S.size(); ++a)
        for (std::size_t b = 0; b < S.size(); ++b)
            dst(S[a], S[b]) += w * src(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b));
}

void scatter_outer(rmat &dst, const std::vector<int> &S, const rvec &g, double w) {
    // Only nonzero gradient entries contribute.
    std::vector<std::size_t> nz;
    for (std::size_t j = 0; j < S.size(); ++j)
        if (g(static_cast<Eigen::Index>(j)) != 0.0) nz.push_back(j);
    for (std::size_t a : nz)
        for (std::size_t b : nz)
            dst(S[a], S[b]) += w * g(static_cast<Eigen::Index>(a)) * g(static_cast<Eigen::Index>(b));
}

struct IpmResult {
    rvec x;
    int iters = 0;
    bool converged = false;
    bool stopped_early = false;
    double kkt = std::numeric_limits<double>::infinity();
    std::string note;
};

struct Residual {
    rvec dual, cent, pri;
    double norm() const { return std::sqrt(dual.squaredNorm() + cent.squaredNorm() + pri.squaredNorm()); }
};

// Requires x strictly feasible for the inequalities. `early` may end the run
// once an iterate is good enough (used by phase I).
IpmResult run_ipm(const Fn &f0, const std::vector<Fn> &fs, const rmat &A, const rvec &b, rvec x,
                  const SolverOptions &opt, const std::function<bool(const rvec &, bool)> &early) {
    const auto n = x.size();
    const auto m = static_cast<Eigen::Index>(fs.size());
    const auto p = A.rows();
    constexpr double mu = 10.0, ls_alpha = 0.01, ls_beta = 0.5;

    rvec fv(m);
    std::vector<rvec> gs(static_cast<std::size_t>(m));
    auto values_ok = [&](const rvec &xx, rvec &vals) {
        for (Eigen::Index i = 0; i < m; ++i) {
            double v = 0.0;
            if (!fn_value(fs[static_cast<std::size_t>(i)], xx, v) || v >= 0.0) return false;
            vals(i) = v;
        }
        return true;
    };

    IpmResult res;
    if (!values_ok(x, fv)) {
        res.x = x;
        res.note = "start point not strictly feasible";
        return res;
    }
    rvec lam(m);
    for (Eigen::Index i = 0; i < m; ++i) lam(i) = std::clamp(-1.0 / fv(i), 1e-8, 1e8);
    rvec nu = rvec::Zero(p);

    auto residual = [&](const rvec &xx, const rvec &ll, const rvec &nn, double t, double &f0v, rvec &g0full,
                        rvec &fvals) {
        Residual r;
        rvec g;
        fn_derivs(f0, xx, f0v, g, nullptr);
        g0full = rvec::Zero(n);
        scatter_add(g0full, f0.S, g);
        r.dual = g0full;
        for (Eigen::Index i = 0; i < m; ++i) {
            double v = 0.0;
            fn_derivs(fs[static_cast<std::size_t>(i)], xx, v, gs[static_cast<std::size_t>(i)], nullptr);
            fvals(i) = v;
            scatter_add(r.dual, fs[static_cast<std::size_t>(i)].S, gs[static_cast<std::size_t>(i)], ll(i));
        }
        if (p > 0) r.dual += A.transpose() * nn;
        r.cent = m > 0 ? rvec(-ll.cwiseProduct(fvals).array() - 1.0 / t) : rvec();
        r.pri = p > 0 ? rvec(A * xx - b) : rvec();
        return r;
    };

    const double b_scale = 1.0 + (p > 0 ? b.cwiseAbs().maxCoeff() : 0.0);
    for (int it = 0; it < opt.max_iters; ++it) {
        res.iters = it + 1;
        const double eta = m > 0 ? -fv.dot(lam) : 0.0;
        double f0v = 0.0;
        rvec g0full;
        Residual r = residual(x, lam, nu, 1.0, f0v, g0full, fv);
        // The surrogate gap is only meaningful once the dual is nearly feasible;
        // tightening the barrier earlier stalls the dual residual.
        const double t = m > 0 ? mu * static_cast<double>(m) / std::max({eta, r.dual.norm(), 1e-300}) : 1.0;
        if (m > 0) r.cent = rvec(-lam.cwiseProduct(fv).array() - 1.0 / t);

        const double kd = r.dual.norm() / (1.0 + g0full.cwiseAbs().maxCoeff());
        const double kp = p > 0 ? r.pri.norm() / b_scale : 0.0;
        const double kg = eta / (1.0 + std::abs(f0v));
        res.kkt = std::max({kd, kp, kg});
        res.x = x;
        if (res.kkt <= opt.tol) {
            res.converged = true;
            break;
        }
        if (early && early(x, kp <= opt.tol)) {
            res.stopped_early = true;
            break;
        }

        // Reduced Newton system.
        rmat H = rmat::Zero(n, n);
        {
            double v;
            rvec g;
            rmat h;
            fn_derivs(f0, x, v, g, &h);
            scatter_add(H, f0.S, h);
        }
        rvec rhs = -r.dual;
        for (Eigen::Index i = 0; i < m; ++i) {
            const Fn &fi = fs[static_cast<std::size_t>(i)];
            double v;
            rvec g;
            rmat h;
            fn_derivs(fi, x, v, g, &h);
            scatter_add(H, fi.S, h, lam(i));
            scatter_outer(H, fi.S, g, lam(i) / -fv(i));
            scatter_add(rhs, fi.S, g, -r.cent(i) / fv(i));
        }
        const double reg = 1e-12 * (1.0 + H.diagonal().cwiseAbs().maxCoeff());
        rvec dx(n), dnu(p);
        if (p == 0) {
            H.diagonal().array() += reg;
            dx = H.ldlt().solve(rhs);
        } else {
            rmat K = rmat::Zero(n + p, n + p);
            K.topLeftCorner(n, n) = H;
            K.topLeftCorner(n, n).diagonal().array() += reg;
            K.topRightCorner(n, p) = A.transpose();
            K.bottomLeftCorner(p, n) = A;
            K.bottomRightCorner(p, p).diagonal().array() = -reg;
            rvec full_rhs(n + p);
            full_rhs << rhs, -r.pri;
            const rvec sol = K.partialPivLu().solve(full_rhs);
            dx = sol.head(n);
            dnu = sol.tail(p);
        }
        if (!dx.allFinite()) {
            res.note = "non-finite Newton step";
            break;
        }
        rvec dlam(m);
        for (Eigen::Index i = 0; i < m; ++i) {
            const Fn &fi = fs[static_cast<std::size_t>(i)];
            const double gdx = gs[static_cast<std::size_t>(i)].dot(gather(dx, fi.S));
            dlam(i) = (r.cent(i) - lam(i) * gdx) / fv(i);
        }

        double s = 1.0;
        for (Eigen::Index i = 0; i < m; ++i)
            if (dlam(i) < 0.0) s = std::min(s, -lam(i) / dlam(i));
        s *= 0.99;
        rvec trial_f(m);
        while (s > 1e-16 && !values_ok(x + s * dx, trial_f)) s *= ls_beta;
        const double r0 = r.norm();
        bool accepted = false;
        while (s > 1e-16) {
            const rvec xn = x + s * dx;
            const rvec ln = lam + s * dlam;
            const rvec nn = p > 0 ? rvec(nu + s * dnu) : nu;
            double fvn;
            rvec gfull;
            rvec fvals(m);
            const Residual rn = residual(xn, ln, nn, t, fvn, gfull, fvals);
            if (rn.norm() <= (1.0 - ls_alpha * s) * r0) {
                x = xn;
                lam = ln;
                nu = nn;
                fv = fvals;
                accepted = true;
                break;
            }
            s *= ls_beta;
        }
        if (!accepted) {
            res.note = "line search stalled";
            break;
        }
    }
    res.x = x;
    return res;
}

Fn shifted(const Fn &f, int s_index) {
    Fn out = f;
    out.S.push_back(s_index);
    const auto k = static_cast<Eigen::Index>(out.S.size());
    if (!f.soc) {
        out.P = rmat::Zero(k, k);
        out.P.topLeftCorner(k - 1, k - 1) = f.P;
        out.q.conservativeResize(k);
        out.q(k - 1) = -1.0;
    } else {
        out.F = rmat::Zero(f.F.rows(), k);
        out.F.leftCols(k - 1) = f.F;
        out.c.conservativeResize(k);
        out.c(k - 1) = 1.0;
    }
    return out;
}

// Smallest shift s that makes f strictly satisfied after `shifted`.
double needed_shift(const Fn &f, const rvec &x) {
    const rvec xs = gather(x, f.S);
    if (!f.soc) {
        double v = 0.0;
        fn_value(f, x, v);
        return v;
    }
    const double t = f.c.dot(xs) + f.d;
    return (f.F * xs + f.g).norm() - t;
}

} // namespace

SolveOutcome ConvexProblem::solve(const SolverOptions &opt) const {
    SolveOutcome out;
    const int n = n_;
    rvec x = rvec::Zero(n);
    for (const auto &[i, v] : warm_) x(i) = v;

    Fn f0 = has_objective_ ? objective_ : Fn{};
    if (!has_objective_) {
        f0.P = rmat::Zero(0, 0);
        f0.q = rvec::Zero(0);
    }
    const auto p = static_cast<Eigen::Index>(eq_.size());
    rmat A = rmat::Zero(p, n);
    rvec b = rvec::Zero(p);
    for (Eigen::Index r = 0; r < p; ++r) {
        for (const auto &[i, v] : eq_[static_cast<std::size_t>(r)].terms) A(r, i) += v;
        b(r) = -eq_[static_cast<std::size_t>(r)].constant;
    }

    auto strictly_feasible = [&](const rvec &xx) {
        for (const auto &f : ineq_) {
            double v;
            if (!fn_value(f, xx, v) || v >= 0.0) return false;
        }
        return true;
    };

    // A warm start hugging the boundary makes the barrier path crawl; recentre it.
    auto well_inside = [&](const rvec &xx) {
        for (const auto &f : ineq_) {
            double v;
            if (!fn_value(f, xx, v) || v >= -1e-7) return false;
        }
        return true;
    };

    int total_iters = 0;
    if (!ineq_.empty() && !well_inside(x)) {
        // Phase I: minimize s subject to f_i(x) <= s, s >= -1.
        double s0 = -std::numeric_limits<double>::infinity();
        for (const auto &f : ineq_) s0 = std::max(s0, needed_shift(f, x));
        s0 += std::max(1.0, 0.1 * std::abs(s0));
        const double s_floor = -1.0;
        std::vector<Fn> fs;
        fs.reserve(ineq_.size() + 1);
        for (const auto &f : ineq_) fs.push_back(shifted(f, n));
        Fn floor_fn;
        floor_fn.S = {n};
        floor_fn.P = rmat::Zero(1, 1);
        floor_fn.q = rvec::Constant(1, -1.0);
        floor_fn.r = s_floor;
        fs.push_back(floor_fn);
        Fn obj;
        obj.S = {n};
        obj.P = rmat::Zero(1, 1);
        obj.q = rvec::Constant(1, 1.0);
        rmat A1 = rmat::Zero(p, n + 1);
        A1.leftCols(n) = A;
        rvec x1(n + 1);
        x1 << x, s0;
        const IpmResult r1 = run_ipm(
            obj, fs, A1, b, x1, opt,
            [&](const rvec &xx, bool eq_ok) { return eq_ok && xx(n) <= 0.5 * s_floor; });
        total_iters += r1.iters;
        const double s_end = r1.x(n);
        const rvec x_cand = r1.x.head(n);
        const bool eq_ok = p == 0 || (A * x_cand - b).norm() <= opt.tol * (1.0 + b.cwiseAbs().maxCoeff()) * 10.0;
        if (s_end < 0.0 && eq_ok && strictly_feasible(x_cand)) {
            x = x_cand;
        } else {
            out.assignment = x_cand;
            out.iterations = total_iters;
            out.status = (r1.converged || s_end >= 0.0) ? SolveStatus::infeasible : SolveStatus::max_iters;
            out.message = "phase I ended at max violation " + std::to_string(s_end) +
                          (r1.note.empty() ? "" : " (" + r1.note + ")");
            double worst = -std::numeric_limits<double>::infinity();
            for (const auto &f : ineq_) worst = std::max(worst, needed_shift(f, x_cand));
            out.max_violation = worst;
            return out;
        }
    }

    const IpmResult r2 = run_ipm(f0, ineq_, A, b, x, opt, nullptr);
    total_iters += r2.iters;
    out.assignment = r2.x;
    out.iterations = total_iters;
    out.kkt_residual = r2.kkt;
    out.message = r2.note;
    double f0v = 0.0;
    fn_value(f0, r2.x, f0v);
    out.objective_value = maximize_ ? -f0v : f0v;
    double worst = -std::numeric_limits<double>::infinity();
    for (const auto &f : ineq_) {
        double v = 0.0;
        worst = std::max(worst, fn_value(f, r2.x, v) ? v : std::numeric_limits<double>::infinity());
    }
    out.max_violation = ineq_.empty() ? 0.0 : worst;
    const bool eq_ok = p == 0 || (A * r2.x - b).norm() <= 1e-6 * (1.0 + b.cwiseAbs().maxCoeff());
    out.strictly_feasible = strictly_feasible(r2.x) && eq_ok;
    out.status = r2.converged ? SolveStatus::optimal : SolveStatus::max_iters;
    if (!r2.converged) log::debug("convex solve stopped without convergence: kkt=" + std::to_string(r2.kkt) + " " + r2.note);
    return out;
}

std::string ConvexProblem::dump() const {
    std::ostringstream os;
    rvec x = rvec::Zero(n_);
    for (const auto &[i, v] : warm_) x(i) = v;
    os << "variables (" << n_ << " real slots)\n";
    for (const auto &v : vars_)
        os << "  " << v.name << (v.is_complex ? " complex" : " real") << " size " << v.size << " offset " << v.offset
           << "\n";
    if (has_objective_) {
        double v = 0.0;
        fn_value(objective_, x, v);
        os << (maximize_ ? "maximize" : "minimize") << " (support " << objective_.S.size()
           << "), value at start " << (maximize_ ? -v : v) << "\n";
    }
    os << "inequalities (" << ineq_.size() << ")\n";
    for (const auto &f : ineq_) {
        double v = 0.0;
        const bool ok = fn_value(f, x, v);
        os << "  " << f.label << (f.soc ? " [cone]" : " [quad]") << " support " << f.S.size() << " value at start "
           << (ok ? std::to_string(v) : std::string("outside domain")) << "\n";
    }
    os << "equalities (" << eq_.size() << ")\n";
    for (std::size_t r = 0; r < eq_.size(); ++r) {
        double v = eq_[r].constant;
        for (const auto &[i, c] : eq_[r].terms) v += c * x(i);
        os << "  " << eq_labels_[r] << " residual at start " << v << "\n";
    }
    return os.str();
}

} // namespace stars_isac
