"""Operator-splitting QP solver with active-set polishing, and the
quadratic-minus-log solver used by risk parity.

``solve_qp`` runs an ADMM splitting on

    minimize 1/2 x'Px + q'x   subject to  l <= Ax <= u

with P = 2V (the public objective is x'Vx + c'x) and A stacking the
general rows, the optional sum-cap family and the identity. The splitting
iteration has a linear rate, so certified accuracy comes from polishing:
guess the active set from (z, y), solve the reduced equality-constrained
KKT system with tiny regularization plus iterative refinement, and accept
only when the full KKT residual of the polished point meets the caller's
tolerance. The reported ``kkt_residual`` is the maximum of stationarity,
primal feasibility, dual feasibility and complementarity violations,
always evaluated on the original (unscaled) problem.

When the quadratic term is diagonal-plus-low-rank the x-update is a
Woodbury solve and the whole iteration costs O(n); that inner loop is
delegated to the selected kernel backend. Dense quadratics factor a
Cholesky once per step-size change and reuse it across iterations.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from ..errors import EngineError, NotPositiveDefiniteError, SolverError
from .backend import active_kernels
from .problem import DenseQuad, QpProblem, QpSolution, StructuredQuad, as_quad

_SIGMA = 1e-6
_ALPHA = 1.6
_RHO0 = 0.1
_RHO_EQ_FACTOR = 1e3
_CHECK_EVERY = 25
_ADAPT_EVERY = 100
_EPS_INF = 1e-10
_MAX_STRUCTURED_ROWS = 12


def _inf_norm(v) -> float:
    return float(np.abs(v).max(initial=0.0))


@dataclass
class _Candidate:
    x: np.ndarray
    dual_eq: np.ndarray
    dual_ineq: np.ndarray
    dual_cap: np.ndarray | None
    dual_box: np.ndarray
    kkt: float


def _kkt_residual(quad, c, eq, ineq, lower, upper, cap, x,
                  dual_eq, dual_ineq, dual_cap, dual_box) -> float:
    """Max violation of stationarity, feasibility, dual sign, and
    complementarity for the original problem."""
    grad = 2.0 * quad.matvec(x) + c
    prim = 0.0
    dsign = 0.0
    comp = 0.0
    for (a, rhs), lam in zip(eq, dual_eq):
        grad = grad + lam * a
        prim = max(prim, abs(float(a @ x) - rhs))
    for (g, rhs), mu in zip(ineq, dual_ineq):
        grad = grad + mu * g
        slack = float(g @ x) - rhs
        prim = max(prim, max(slack, 0.0))
        dsign = max(dsign, -mu)
        comp = max(comp, abs(mu * slack))
    if cap is not None and dual_cap is not None:
        slack = x - cap * x.sum()
        grad = grad + dual_cap - cap * dual_cap.sum()
        prim = max(prim, float(slack.max(initial=0.0)))
        dsign = max(dsign, float((-dual_cap).max(initial=0.0)))
        comp = max(comp, _inf_norm(dual_cap * slack))
    grad = grad + dual_box
    prim = max(prim, float((lower - x).max(initial=0.0)),
               float((x - upper).max(initial=0.0)))
    up_part = np.maximum(dual_box, 0.0)
    lo_part = np.maximum(-dual_box, 0.0)
    fin_up = np.isfinite(upper)
    fin_lo = np.isfinite(lower)
    dsign = max(dsign, _inf_norm(up_part[~fin_up]),
                _inf_norm(lo_part[~fin_lo]))
    comp = max(comp,
               _inf_norm(up_part[fin_up] * (upper[fin_up] - x[fin_up])),
               _inf_norm(lo_part[fin_lo] * (x[fin_lo] - lower[fin_lo])))
    return max(_inf_norm(grad), prim, dsign, comp)


def _preflight_infeasible(eq, ineq, lower, upper) -> bool:
    """Cheap interval test: each row's range over the box vs its rhs."""
    for rows, is_eq in ((eq, True), (ineq, False)):
        for a, rhs in rows:
            pos, neg = a > 0, a < 0
            lo = float(np.sum(a[pos] * lower[pos]) + np.sum(a[neg] * upper[neg]))
            hi = float(np.sum(a[pos] * upper[pos]) + np.sum(a[neg] * lower[neg]))
            tol = 1e-9 * (1.0 + abs(rhs))
            if np.isnan(lo) or np.isnan(hi):
                continue  # inf - inf: no conclusion
            if lo > rhs + tol or (is_eq and hi < rhs - tol):
                return True
    return False


class _Work:
    """Scaled problem data plus ADMM state."""

    def __init__(self, quad, c, eq, ineq, lower, upper, cap, x0,
                 kernels=None):
        self.quad = quad
        self.c = c
        self.eq = eq
        self.ineq = ineq
        self.lower = lower
        self.upper = upper
        self.cap = cap
        n = c.size
        self.n = n

        # objective scaling keeps rho heuristics problem-size free
        self.c_obj = max(quad.inf_norm_estimate() * 2.0, _inf_norm(c), 1e-8)
        if isinstance(quad, StructuredQuad):
            self.pquad = StructuredQuad(
                quad.diag * (2.0 / self.c_obj),
                tuple((cf * 2.0 / self.c_obj, v) for cf, v in quad.factors))
        else:
            self.pquad = DenseQuad(quad.matrix * (2.0 / self.c_obj))
        self.q = c / self.c_obj

        rows = [(a, rhs, True) for a, rhs in eq] + \
               [(a, rhs, False) for a, rhs in ineq]
        k = len(rows)
        self.k = k
        self.is_eq = np.array([r[2] for r in rows], dtype=bool)
        self.row_scale = np.ones(k)
        self.G = np.zeros((k, n))
        self.lg = np.zeros(k)
        self.ug = np.zeros(k)
        for i, (a, rhs, eq_row) in enumerate(rows):
            s = max(_inf_norm(a), 1e-12)
            self.row_scale[i] = s
            self.G[i] = a / s
            self.ug[i] = rhs / s
            self.lg[i] = rhs / s if eq_row else -np.inf

        self.structured = (isinstance(self.pquad, StructuredQuad)
                           and k <= _MAX_STRUCTURED_ROWS)
        self.kernels = kernels if kernels is not None else active_kernels()

        self.rho = _RHO0
        self.x = np.zeros(n) if x0 is None else np.asarray(x0, float).copy()
        ax = self._ax(self.x)
        self.zg = np.clip(ax[0], self.lg, self.ug)
        self.zc = np.minimum(ax[1], 0.0) if cap else np.zeros(0)
        self.zb = np.clip(ax[2], lower, upper)
        self.yg = np.zeros(k)
        self.yc = np.zeros(n if cap else 0)
        self.yb = np.zeros(n)
        self.dx = np.zeros(n)
        self.dyg = np.zeros(k)
        self.dyc = np.zeros(n if cap else 0)
        self.dyb = np.zeros(n)
        self.scratch = np.zeros((3, n))
        self._refresh_factor()

    # -- linear algebra helpers ------------------------------------------

    def _rho_blocks(self):
        rho_g = np.where(self.is_eq, self.rho * _RHO_EQ_FACTOR, self.rho)
        return rho_g, self.rho, self.rho

    def _ax(self, x):
        gen = self.G @ x if self.k else np.zeros(0)
        capv = (x - self.cap * x.sum()) if self.cap else np.zeros(0)
        return gen, capv, x

    def _aty(self, yg, yc, yb):
        out = yb.copy()
        if self.k:
            out += self.G.T @ yg
        if self.cap:
            out += yc - self.cap * yc.sum()
        return out

    def _refresh_factor(self):
        rho_g, rho_c, rho_b = self._rho_blocks()
        n = self.n
        if self.structured:
            diag = self.pquad.diag + _SIGMA + rho_b
            if self.cap:
                diag = diag + rho_c
            coefs = [cf for cf, _ in self.pquad.factors]
            vecs = [v for _, v in self.pquad.factors]
            for i in range(self.k):
                coefs.append(rho_g[i])
                vecs.append(self.G[i])
            if self.cap:
                coefs.append(rho_c * (n * self.cap * self.cap - 2.0 * self.cap))
                vecs.append(np.ones(n))
            keep = [i for i, cf in enumerate(coefs) if abs(cf) > 1e-300]
            coefs = np.array([coefs[i] for i in keep])
            u = np.column_stack([vecs[i] for i in keep]) if keep else \
                np.zeros((n, 0))
            self._dinv = 1.0 / diag
            self._B = self._dinv[:, None] * u
            if coefs.size:
                capmat = np.diag(1.0 / coefs) + u.T @ self._B
                self._S = np.linalg.inv(capmat)
            else:
                self._S = np.zeros((0, 0))
        else:
            m = self.pquad.materialize()
            m[np.diag_indices(n)] += _SIGMA + rho_b + (rho_c if self.cap else 0.0)
            for i in range(self.k):
                m += rho_g[i] * np.outer(self.G[i], self.G[i])
            if self.cap:
                # C'C = I + (n u^2 - 2u) 11'; the identity part is already
                # in the diagonal term above
                m += rho_c * (n * self.cap * self.cap - 2.0 * self.cap)
            self._chol = scipy.linalg.cho_factor(m, lower=True)

    # -- iteration --------------------------------------------------------

    def chunk(self, n_iter):
        rho_g, rho_c, rho_b = self._rho_blocks()
        if self.structured:
            self.kernels.admm_chunk(
                int(n_iter), _SIGMA, _ALPHA,
                self.q, self.x,
                self.G, self.lg, self.ug, self.zg, self.yg, rho_g,
                self.cap if self.cap else -1.0, self.zc, self.yc, rho_c,
                self.lower, self.upper, self.zb, self.yb, rho_b,
                self._dinv, self._B, self._S,
                self.dx, self.dyg, self.dyc, self.dyb, self.scratch)
        else:
            self._chunk_dense(n_iter, rho_g, rho_c, rho_b)

    def _chunk_dense(self, n_iter, rho_g, rho_c, rho_b):
        x, zg, zc, zb = self.x, self.zg, self.zc, self.zb
        yg, yc, yb = self.yg, self.yc, self.yb
        cap, k = self.cap, self.k
        for it in range(n_iter):
            last = it == n_iter - 1
            if last:
                self.dx[:] = x
                self.dyg[:] = yg
                self.dyb[:] = yb
                if cap:
                    self.dyc[:] = yc
            rhs = _SIGMA * x - self.q + (rho_b * zb - yb)
            if k:
                rhs += self.G.T @ (rho_g * zg - yg)
            if cap:
                tc = rho_c * zc - yc
                rhs += tc - cap * tc.sum()
            xt = scipy.linalg.cho_solve(self._chol, rhs)
            x[:] = _ALPHA * xt + (1.0 - _ALPHA) * x
            if k:
                wg = _ALPHA * (self.G @ xt) + (1.0 - _ALPHA) * zg
                zg_new = np.clip(wg + yg / rho_g, self.lg, self.ug)
                yg += rho_g * (wg - zg_new)
                zg[:] = zg_new
            if cap:
                ztc = xt - cap * xt.sum()
                wc = _ALPHA * ztc + (1.0 - _ALPHA) * zc
                zc_new = np.minimum(wc + yc / rho_c, 0.0)
                yc += rho_c * (wc - zc_new)
                zc[:] = zc_new
            wb = _ALPHA * xt + (1.0 - _ALPHA) * zb
            zb_new = np.clip(wb + yb / rho_b, self.lower, self.upper)
            yb += rho_b * (wb - zb_new)
            zb[:] = zb_new
            if last:
                self.dx[:] = x - self.dx
                self.dyg[:] = yg - self.dyg
                self.dyb[:] = yb - self.dyb
                if cap:
                    self.dyc[:] = yc - self.dyc

    # -- diagnostics ------------------------------------------------------

    def residuals(self):
        gen, capv, box = self._ax(self.x)
        r_prim = max(_inf_norm(gen - self.zg) if self.k else 0.0,
                     _inf_norm(capv - self.zc) if self.cap else 0.0,
                     _inf_norm(box - self.zb))
        px = self.pquad.matvec(self.x)
        aty = self._aty(self.yg, self.yc, self.yb)
        r_dual = _inf_norm(px + self.q + aty)
        sp = max(_inf_norm(gen), _inf_norm(capv), _inf_norm(box),
                 _inf_norm(self.zg), _inf_norm(self.zc), _inf_norm(self.zb))
        sd = max(_inf_norm(px), _inf_norm(self.q), _inf_norm(aty))
        return r_prim, r_dual, sp, sd

    def primal_infeasibility_certificate(self) -> bool:
        nrm = max(_inf_norm(self.dyg), _inf_norm(self.dyc),
                  _inf_norm(self.dyb))
        if nrm <= 1e-14:
            return False
        vg = self.dyg / nrm
        vc = self.dyc / nrm
        vb = self.dyb / nrm
        support = 0.0
        for arr, lo, up in ((vg, self.lg, self.ug),
                            (vc, np.full(vc.size, -np.inf),
                             np.zeros(vc.size)),
                            (vb, self.lower, self.upper)):
            if arr.size == 0:
                continue
            pos = np.maximum(arr, 0.0)
            neg = np.minimum(arr, 0.0)
            fin_up, fin_lo = np.isfinite(up), np.isfinite(lo)
            if np.any(pos[~fin_up] > _EPS_INF) or \
               np.any(-neg[~fin_lo] > _EPS_INF):
                return False
            support += float(np.sum(up[fin_up] * pos[fin_up]))
            support += float(np.sum(lo[fin_lo] * neg[fin_lo]))
        if support >= -_EPS_INF:
            return False
        return _inf_norm(self._aty(vg, vc, vb)) <= _EPS_INF

    def adapt_rho(self, r_prim, r_dual, sp, sd):
        ratio = (r_prim / max(sp, 1e-12)) / max(r_dual / max(sd, 1e-12),
                                                1e-16)
        new_rho = float(np.clip(self.rho * np.sqrt(ratio), 1e-6, 1e6))
        if new_rho > 5.0 * self.rho or new_rho < self.rho / 5.0:
            self.rho = new_rho
            self._refresh_factor()

    # -- candidate extraction ---------------------------------------------

    def _unscale_duals(self, yg, yc, yb):
        n_eq = len(self.eq)
        dual_rows = yg * (self.c_obj / self.row_scale) if self.k else yg
        dual_eq = dual_rows[:n_eq].copy()
        dual_ineq = np.maximum(dual_rows[n_eq:], 0.0)
        dual_cap = np.maximum(yc * self.c_obj, 0.0) if self.cap else None
        dual_box = yb * self.c_obj
        return dual_eq, dual_ineq, dual_cap, dual_box

    def raw_candidate(self) -> _Candidate:
        dual_eq, dual_ineq, dual_cap, dual_box = self._unscale_duals(
            self.yg, self.yc, self.yb)
        x = np.clip(self.x, self.lower, self.upper)
        kkt = _kkt_residual(self.quad, self.c, self.eq, self.ineq,
                            self.lower, self.upper, self.cap, x,
                            dual_eq, dual_ineq, dual_cap, dual_box)
        return _Candidate(x, dual_eq, dual_ineq, dual_cap, dual_box, kkt)

    def polish(self) -> _Candidate | None:
        n = self.n
        low = (self.zb - self.lower) < -self.yb
        upp = (self.upper - self.zb) < self.yb
        fixed = low | upp
        free = np.flatnonzero(~fixed)
        nf = free.size

        rows = []
        rhs_list = []
        n_eq = len(self.eq)
        gen_active = []
        for i in range(self.k):
            if self.is_eq[i] or (self.ug[i] - self.zg[i]) < self.yg[i]:
                gen_active.append(i)
                a, rhs = (self.eq + self.ineq)[i]
                rows.append(np.asarray(a, float))
                rhs_list.append(rhs)
        cap_active = np.flatnonzero(-self.zc < self.yc) if self.cap else \
            np.zeros(0, dtype=np.intp)
        for i in cap_active:
            row = np.full(n, -self.cap)
            row[i] += 1.0
            rows.append(row)
            rhs_list.append(0.0)
        ma = len(rows)

        x_fix = np.where(low, self.lower, np.where(upp, self.upper, 0.0))
        try:
            p_ff = 2.0 * self.quad.submatrix(free)
            delta = 1e-9 * max(1.0, float(np.abs(np.diag(p_ff)).max(
                initial=0.0)))
            g = (self.c + 2.0 * self.quad.matvec(x_fix))[free]
            if ma:
                a_full = np.vstack(rows)
                a_f = a_full[:, free]
                b_f = np.asarray(rhs_list) - a_full[:, fixed] @ x_fix[fixed]
            else:
                a_f = np.zeros((0, nf))
                b_f = np.zeros(0)
            kkt_m = np.zeros((nf + ma, nf + ma))
            kkt_m[:nf, :nf] = p_ff + delta * np.eye(nf)
            kkt_m[:nf, nf:] = a_f.T
            kkt_m[nf:, :nf] = a_f
            kkt_m[nf:, nf:] = -delta * np.eye(ma)
            rhs_k = np.concatenate([-g, b_f])
            lu = scipy.linalg.lu_factor(kkt_m)
            sol = scipy.linalg.lu_solve(lu, rhs_k)
            for _ in range(3):  # refine against the unregularized system
                res_top = -g - p_ff @ sol[:nf] - a_f.T @ sol[nf:]
                res_bot = b_f - a_f @ sol[:nf]
                sol = sol + scipy.linalg.lu_solve(
                    lu, np.concatenate([res_top, res_bot]))
        except (scipy.linalg.LinAlgError, ValueError):
            return None
        if not np.all(np.isfinite(sol)):
            return None

        x_hat = x_fix.copy()
        x_hat[free] = sol[:nf]
        nu = sol[nf:]
        dual_eq = np.zeros(len(self.eq))
        dual_ineq = np.zeros(len(self.ineq))
        for pos, i in enumerate(gen_active):
            if i < n_eq:
                dual_eq[i] = nu[pos]
            else:
                dual_ineq[i - n_eq] = max(nu[pos], 0.0)
        dual_cap = np.zeros(n) if self.cap else None
        for pos, i in enumerate(cap_active):
            dual_cap[i] = max(nu[len(gen_active) + pos], 0.0)

        grad = 2.0 * self.quad.matvec(x_hat) + self.c
        for (a, _), lam in zip(self.eq, dual_eq):
            grad = grad + lam * a
        for (gv, _), mu in zip(self.ineq, dual_ineq):
            grad = grad + mu * gv
        if self.cap:
            grad = grad + dual_cap - self.cap * dual_cap.sum()
        dual_box = np.where(fixed, -grad, 0.0)
        kkt = _kkt_residual(self.quad, self.c, self.eq, self.ineq,
                            self.lower, self.upper, self.cap, x_hat,
                            dual_eq, dual_ineq, dual_cap, dual_box)
        return _Candidate(x_hat, dual_eq, dual_ineq, dual_cap, dual_box, kkt)


def _objective(quad, c, x) -> float:
    return float(x @ quad.matvec(x) + c @ x)


def solve_qp(problem: QpProblem, tolerance: float = 1e-8,
             max_iterations: int = 50_000, x0=None,
             trace_path=None, kernels=None) -> QpSolution:
    """Solve a box/affine-constrained convex QP to a certified KKT residual.

    Returns status ``optimal`` (kkt_residual <= tolerance), ``infeasible``
    (no feasible point), or ``max_iterations`` (best iterate found, with
    its residual). Deterministic: identical inputs produce identical
    output bits. ``kernels`` overrides the import-time backend selection
    for the structured inner loop (used by tests and benchmarks).
    """
    if not tolerance > 0:
        raise EngineError("tolerance must be positive")
    quad, c, eq, ineq, lower, upper, cap = problem.normalized()
    trace = [] if trace_path is not None else None

    if _preflight_infeasible(eq, ineq, lower, upper):
        return QpSolution(x=np.clip(np.zeros(c.size), lower, upper),
                          objective=np.nan, kkt_residual=np.inf,
                          status="infeasible", iterations=0)

    work = _Work(quad, c, eq, ineq, lower, upper, cap, x0, kernels=kernels)
    eps_gate = 1e-4
    best: _Candidate | None = None
    it = 0
    status = "max_iterations"
    while it < max_iterations:
        n_iter = min(_CHECK_EVERY, max_iterations - it)
        work.chunk(n_iter)
        it += n_iter
        r_prim, r_dual, sp, sd = work.residuals()
        if trace is not None:
            trace.append((it, r_prim, r_dual,
                          _objective(quad, c, work.x)))
        if work.primal_infeasibility_certificate():
            status = "infeasible"
            break
        eps_p = eps_gate * (1.0 + sp)
        eps_d = eps_gate * (1.0 + sd)
        if r_prim <= eps_p and r_dual <= eps_d:
            for cand in (work.polish(), work.raw_candidate()):
                if cand is None:
                    continue
                if best is None or cand.kkt < best.kkt:
                    best = cand
                if cand.kkt <= tolerance:
                    status = "optimal"
                    break
            if status == "optimal":
                break
            eps_gate = max(eps_gate * 0.2, 1e-13)
        if it % _ADAPT_EVERY == 0:
            work.adapt_rho(r_prim, r_dual, sp, sd)

    if status == "max_iterations":
        for cand in (work.polish(), work.raw_candidate()):
            if cand is not None and (best is None or cand.kkt < best.kkt):
                best = cand
        if best is not None and best.kkt <= tolerance:
            status = "optimal"

    if trace is not None:
        import csv

        with open(trace_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "primal_residual", "dual_residual",
                        "objective"])
            w.writerows(trace)

    if status == "infeasible":
        return QpSolution(x=np.clip(work.x, lower, upper), objective=np.nan,
                          kkt_residual=np.inf, status="infeasible",
                          iterations=it)
    assert best is not None
    return QpSolution(x=best.x, objective=_objective(quad, c, best.x),
                      kkt_residual=best.kkt, status=status, iterations=it,
                      dual_eq=best.dual_eq, dual_ineq=best.dual_ineq,
                      dual_cap=best.dual_cap, dual_box=best.dual_box)


def solve_quad_log(quadratic, upper_bound: float, *, n: int | None = None,
                   tolerance: float = 1e-8, max_iterations: int = 200,
                   model_kind: str | None = None) -> np.ndarray:
    """Minimize 1/2 y'Vy - sum(log y) over 0 < y <= upper_bound.

    Projected Newton with an Armijo backtracking line search; the log terms
    make strict positivity intrinsic. Convergence is measured by the
    stationarity statistic max_i |y_i * (Vy)_i - 1| over unclamped
    coordinates; at coordinates clamped to the bound the multiplier
    -((Vy)_i - 1/y_i) is nonnegative by construction. A direction of
    negative curvature of V raises NotPositiveDefiniteError, which the
    backtest maps to the documented NaN outcome.
    """
    quad = as_quad(quadratic, n=n)
    d = float(upper_bound)
    if not d > 0:
        raise EngineError("upper bound must be positive")
    nn = quad.n
    diag = quad.diagonal()
    scale = max(1.0, _inf_norm(diag))
    y = np.minimum(0.9 * d, 1.0 / np.sqrt(np.maximum(diag, 1e-12)))

    for _ in range(max_iterations):
        vy = quad.matvec(y)
        g = vy - 1.0 / y
        active = (y >= d * (1.0 - 1e-12)) & (g < 0.0)
        free = np.flatnonzero(~active)
        # the stationarity statistic: |y_i (Vy)_i - 1| at free coordinates
        if free.size == 0 or _inf_norm(y[free] * g[free]) <= tolerance:
            return y

        p = np.zeros(nn)
        p[free] = _newton_direction(quad, y, free, g[free], model_kind)
        curv = float(p @ quad.matvec(p))
        if curv < -1e-10 * scale * float(p @ p):
            raise NotPositiveDefiniteError(
                "negative curvature encountered in the quadratic term",
                model_kind=model_kind)

        neg = p < 0
        t = 1.0
        if neg.any():
            t = min(t, 0.9995 * float(np.min(y[neg] / -p[neg])))
        f0 = _quad_log_value(quad, y)
        # once the predicted decrease drops below float resolution of f,
        # Armijo cannot certify progress; take the plain Newton step (we
        # are deep in the quadratic-convergence region)
        predicted = -float(g @ p)
        if predicted <= 1e3 * np.finfo(float).eps * (1.0 + abs(f0)):
            y = np.minimum(y + t * p, d)
            continue
        for _ in range(60):
            y_try = np.minimum(y + t * p, d)
            if _quad_log_value(quad, y_try) <= f0 + 1e-4 * float(
                    g @ (y_try - y)):
                break
            t *= 0.5
        else:
            raise SolverError("quad-log line search failed to make progress")
        y = y_try
    raise SolverError(f"quad-log solver did not converge in "
                      f"{max_iterations} iterations")


def _quad_log_value(quad, y) -> float:
    return float(0.5 * (y @ quad.matvec(y)) - np.log(y).sum())


def _newton_direction(quad, y, free, g_free, model_kind):
    barrier = 1.0 / (y[free] * y[free])
    if isinstance(quad, StructuredQuad):
        dd = quad.diag[free] + barrier
        dinv = 1.0 / dd
        factors = [(cf, v[free]) for cf, v in quad.factors if cf != 0.0]
        if not factors:
            return -dinv * g_free
        u = np.column_stack([v for _, v in factors])
        coefs = np.array([cf for cf, _ in factors])
        b = dinv[:, None] * u
        s = np.linalg.inv(np.diag(1.0 / coefs) + u.T @ b)
        return -(dinv * g_free - b @ (s @ (b.T @ g_free)))
    h = quad.matrix[np.ix_(free, free)] + np.diag(barrier)
    try:
        chol = scipy.linalg.cho_factor(h, lower=True)
    except scipy.linalg.LinAlgError:
        raise NotPositiveDefiniteError(
            "covariance plus barrier Hessian is not positive definite",
            model_kind=model_kind)
    return -scipy.linalg.cho_solve(chol, g_free)
