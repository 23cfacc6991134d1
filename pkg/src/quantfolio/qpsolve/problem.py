"""Problem containers and quadratic-form representations for the QP layer.

The quadratic term of a problem is the matrix V in the objective
``x'Vx + c'x``. It can be supplied three ways:

* a dense symmetric ndarray,
* a ``StructuredQuad`` (diagonal plus a few symmetric rank-one terms),
  which is what the factor and constant-correlation risk models produce
  and what keeps the solver's per-iteration cost O(n), or
* a bare matvec callable, which is materialized against the basis (only
  sensible for small n).
"""

from dataclasses import dataclass, field

import numpy as np

from ..errors import EngineError

MATVEC_DENSE_CAP = 4096


@dataclass(frozen=True)
class StructuredQuad:
    """V = diag(diag) + sum_j coef_j * outer(v_j, v_j)."""

    diag: np.ndarray
    factors: tuple = ()

    def __post_init__(self):
        object.__setattr__(self, "diag",
                           np.asarray(self.diag, dtype=np.float64))
        factors = tuple((float(c), np.asarray(v, dtype=np.float64))
                        for c, v in self.factors)
        object.__setattr__(self, "factors", factors)
        for _, v in factors:
            if v.shape != self.diag.shape:
                raise EngineError("factor vector length does not match diagonal")

    @property
    def n(self) -> int:
        return self.diag.size

    def matvec(self, x) -> np.ndarray:
        out = self.diag * x
        for c, v in self.factors:
            out += (c * (v @ x)) * v
        return out

    def diagonal(self) -> np.ndarray:
        out = self.diag.copy()
        for c, v in self.factors:
            out += c * v * v
        return out

    def materialize(self) -> np.ndarray:
        out = np.diag(self.diag)
        for c, v in self.factors:
            out += c * np.outer(v, v)
        return out

    def submatrix(self, idx) -> np.ndarray:
        out = np.diag(self.diag[idx])
        for c, v in self.factors:
            out += c * np.outer(v[idx], v[idx])
        return out

    def inf_norm_estimate(self) -> float:
        est = float(np.abs(self.diag).max(initial=0.0))
        for c, v in self.factors:
            est += abs(c) * float(np.abs(v).max(initial=0.0)) * float(
                np.abs(v).sum())
        return est


@dataclass(frozen=True)
class DenseQuad:
    """Explicit symmetric matrix."""

    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise EngineError("quadratic matrix must be square")
        object.__setattr__(self, "matrix", m)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    def matvec(self, x) -> np.ndarray:
        return self.matrix @ x

    def diagonal(self) -> np.ndarray:
        return np.diag(self.matrix).copy()

    def materialize(self) -> np.ndarray:
        return self.matrix.copy()

    def submatrix(self, idx) -> np.ndarray:
        return self.matrix[np.ix_(idx, idx)].copy()

    def inf_norm_estimate(self) -> float:
        return float(np.abs(self.matrix).sum(axis=1).max(initial=0.0))


def as_quad(quadratic, n: int | None = None):
    """Coerce any accepted quadratic-term spelling into a quad object."""
    if isinstance(quadratic, (StructuredQuad, DenseQuad)):
        return quadratic
    if isinstance(quadratic, np.ndarray):
        return DenseQuad(quadratic)
    if callable(quadratic):
        if n is None:
            raise EngineError("a matvec callable needs an explicit dimension")
        if n > MATVEC_DENSE_CAP:
            raise EngineError(f"matvec oracle with n={n} exceeds the dense "
                              f"materialization cap {MATVEC_DENSE_CAP}")
        cols = [np.asarray(quadratic(e), dtype=np.float64)
                for e in np.eye(n)]
        return DenseQuad(np.column_stack(cols))
    raise EngineError(f"unsupported quadratic term of type "
                      f"{type(quadratic).__name__}")


@dataclass(frozen=True)
class QpProblem:
    """minimize x'Vx + c'x  s.t.  a'x = rhs, g'x <= rhs, lower <= x <= upper.

    ``sum_cap`` adds the structured row family ``x_i <= sum_cap * (1'x)``
    for every i without materializing n dense rows.
    """

    quadratic: object
    linear: np.ndarray
    eq: tuple = ()
    ineq: tuple = ()
    lower: np.ndarray | float = -np.inf
    upper: np.ndarray | float = np.inf
    sum_cap: float | None = None

    def normalized(self):
        """Validated (quad, c, eq, ineq, lower, upper, sum_cap) tuple."""
        c = np.asarray(self.linear, dtype=np.float64)
        n = c.size
        quad = as_quad(self.quadratic, n=n)
        if quad.n != n:
            raise EngineError(f"quadratic dimension {quad.n} != linear "
                              f"dimension {n}")

        def rows(pairs, label):
            out = []
            for a, rhs in pairs:
                a = np.asarray(a, dtype=np.float64)
                if a.shape != (n,):
                    raise EngineError(f"{label} row has wrong length")
                out.append((a, float(rhs)))
            return tuple(out)

        lower = np.broadcast_to(np.asarray(self.lower, dtype=np.float64),
                                (n,)).copy()
        upper = np.broadcast_to(np.asarray(self.upper, dtype=np.float64),
                                (n,)).copy()
        if np.any(lower > upper):
            raise EngineError("lower bound exceeds upper bound")
        cap = None if self.sum_cap is None else float(self.sum_cap)
        if cap is not None and cap <= 0:
            raise EngineError("sum_cap must be positive")
        return (quad, c, rows(self.eq, "equality"), rows(self.ineq,
                "inequality"), lower, upper, cap)


@dataclass(frozen=True)
class QpSolution:
    """Solver output with the duals needed to audit the KKT residual.

    ``dual_box`` follows the two-sided convention: positive entries push
    against the upper bound, negative against the lower.
    """

    x: np.ndarray
    objective: float
    kkt_residual: float
    status: str
    iterations: int
    dual_eq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_cap: np.ndarray | None = None
    dual_box: np.ndarray | None = None
