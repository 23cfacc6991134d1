"""Pure-numpy ADMM inner-loop kernel.

This is the fallback twin of the compiled kernel in ``_kernels.pyx``; both
implement the same update equations on the same memory layout so the
orchestrator can drive either. One call advances the splitting iteration
``n_iter`` times in place.

Blocks of the constraint matrix A (m = k + n_cap + n rows):

* ``G``      k dense general rows with bounds [lg, ug] (equalities have
             lg == ug) and per-row step sizes ``rho_g``;
* cap rows   x_i - u_cap * sum(x) <= 0 for every i when ``u_cap > 0``;
* box rows   the identity, bounds [lb, ub].

The x-update solves M xt = rhs with M = diag(1/dinv) + U Cu U' supplied in
factored Woodbury form: ``B = diag(dinv) @ U`` and
``S = inv(inv(Cu) + U' B)``, so M^-1 v = dinv*v - B @ (S @ (B' v)).

``dx``/``dyg``/``dyc``/``dyb`` receive the last iteration's variable
deltas, which the orchestrator feeds to the infeasibility certificates.
"""

import numpy as np

BACKEND = "python"


def admm_chunk(n_iter, sigma, alpha,
               q, x,
               G, lg, ug, zg, yg, rho_g,
               u_cap, zc, yc, rho_c,
               lb, ub, zb, yb, rho_b,
               dinv, B, S,
               dx, dyg, dyc, dyb, scratch):
    k = G.shape[0]
    has_cap = u_cap > 0.0
    for it in range(n_iter):
        last = it == n_iter - 1
        if last:
            dx[:] = x
            dyg[:] = yg
            dyb[:] = yb
            if has_cap:
                dyc[:] = yc

        tb = rho_b * zb - yb
        rhs = sigma * x - q + tb
        if k:
            tg = rho_g * zg - yg
            rhs += G.T @ tg
        if has_cap:
            tc = rho_c * zc - yc
            rhs += tc - (u_cap * tc.sum())

        xt = dinv * rhs - B @ (S @ (B.T @ rhs))
        x[:] = alpha * xt + (1.0 - alpha) * x

        if k:
            wg = alpha * (G @ xt) + (1.0 - alpha) * zg
            zg_new = np.clip(wg + yg / rho_g, lg, ug)
            yg += rho_g * (wg - zg_new)
            zg[:] = zg_new
        if has_cap:
            ztc = xt - u_cap * xt.sum()
            wc = alpha * ztc + (1.0 - alpha) * zc
            zc_new = np.minimum(wc + yc / rho_c, 0.0)
            yc += rho_c * (wc - zc_new)
            zc[:] = zc_new
        wb = alpha * xt + (1.0 - alpha) * zb
        zb_new = np.clip(wb + yb / rho_b, lb, ub)
        yb += rho_b * (wb - zb_new)
        zb[:] = zb_new

        if last:
            dx[:] = x - dx
            dyg[:] = yg - dyg
            dyb[:] = yb - dyb
            if has_cap:
                dyc[:] = yc - dyc
