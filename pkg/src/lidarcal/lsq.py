"""Weighted, bounded and iterative least-squares machinery.

The unknowns here are always small (typically a 3-vector), so the bounded
problem is solved exactly by enumerating active sets instead of a projected
gradient scheme.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np

from .errors import SingularSystem

CONDITION_LIMIT = 1e12
KKT_TOL = 1e-8


@dataclass(frozen=True)
class LinearSystem:
    """Stacked system ``a @ x = b`` with block-repeated residual covariance.

    ``sigma`` is a k x k positive-definite covariance applied block-diagonally
    down the rows; k must divide the row count.
    """

    a: np.ndarray
    b: np.ndarray
    sigma: np.ndarray

    def __post_init__(self):
        a = np.atleast_2d(np.asarray(self.a, dtype=float))
        b = np.asarray(self.b, dtype=float).reshape(-1)
        sigma = np.atleast_2d(np.asarray(self.sigma, dtype=float))
        if a.shape[0] != b.shape[0]:
            raise ValueError("row counts of a and b disagree")
        k = sigma.shape[0]
        if sigma.shape != (k, k) or a.shape[0] % k != 0:
            raise ValueError("sigma block size must divide the row count")
        if np.max(np.abs(sigma - sigma.T)) > 1e-12:
            raise ValueError("sigma must be symmetric")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "sigma", sigma)

    def normal_terms(self):
        """Return (AᵀΣ⁻¹A, AᵀΣ⁻¹b) with the block weighting applied."""
        k = self.sigma.shape[0]
        w = np.linalg.inv(self.sigma)
        n = self.a.shape[1]
        ata = np.zeros((n, n))
        atb = np.zeros(n)
        for start in range(0, self.a.shape[0], k):
            a_blk = self.a[start:start + k]
            b_blk = self.b[start:start + k]
            ata += a_blk.T @ w @ a_blk
            atb += a_blk.T @ w @ b_blk
        return ata, atb

    def objective(self, x) -> float:
        k = self.sigma.shape[0]
        w = np.linalg.inv(self.sigma)
        r = self.a @ np.asarray(x, dtype=float) - self.b
        total = 0.0
        for start in range(0, r.shape[0], k):
            blk = r[start:start + k]
            total += blk @ w @ blk
        return float(total)


@dataclass(frozen=True)
class Bounds:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.asarray(self.lower, dtype=float).reshape(-1)
        upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if lower.shape != upper.shape or np.any(lower > upper):
            raise ValueError("bounds require lower <= upper componentwise")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @staticmethod
    def around(center, radius: float) -> "Bounds":
        center = np.asarray(center, dtype=float).reshape(-1)
        return Bounds(center - radius, center + radius)


def _checked_solve(normal: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if normal.size == 0:
        return np.zeros(0)
    svals = np.linalg.svd(normal, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] == 0.0 or svals[0] / svals[-1] > CONDITION_LIMIT:
        raise SingularSystem("normal matrix is numerically rank-deficient")
    return np.linalg.solve(normal, rhs)


def solve_weighted_lsq(sys: LinearSystem) -> np.ndarray:
    """Exact minimizer of the weighted quadratic via the normal equations."""
    ata, atb = sys.normal_terms()
    return _checked_solve(ata, atb)


def solve_bvls(sys: LinearSystem, bounds: Bounds) -> np.ndarray:
    """Box-constrained weighted least squares, solved exactly.

    Every assignment of each coordinate to {free, lower, upper} is tried;
    among assignments whose free subproblem is solvable, feasible, and
    KKT-consistent, the lowest objective wins. Coordinates with
    ``lower == upper`` are fixed up front.
    """
    ata, atb = sys.normal_terms()
    n = ata.shape[0]
    lower, upper = bounds.lower, bounds.upper
    if lower.shape[0] != n:
        raise ValueError("bounds dimension does not match unknowns")

    pinned = lower == upper
    open_idx = np.flatnonzero(~pinned)
    if open_idx.size == 0:
        return lower.copy()

    # singularity is judged on the subproblem over all non-pinned variables
    sub = ata[np.ix_(open_idx, open_idx)]
    svals = np.linalg.svd(sub, compute_uv=False)
    if svals[0] == 0.0 or svals[-1] == 0.0 or svals[0] / svals[-1] > CONDITION_LIMIT:
        raise SingularSystem("free-variable subproblem is rank-deficient")

    scale = max(1.0, float(np.max(np.abs(atb))), float(np.max(np.abs(ata))))
    grad_tol = KKT_TOL * scale
    best = None
    best_obj = np.inf
    for assignment in itertools.product((0, -1, 1), repeat=open_idx.size):
        x = np.where(pinned, lower, 0.0)
        free = []
        for j, code in zip(open_idx, assignment):
            if code == 0:
                free.append(j)
            else:
                x[j] = lower[j] if code == -1 else upper[j]
        free = np.array(free, dtype=int)
        clamped = np.setdiff1d(np.arange(n), free)
        if free.size:
            nff = ata[np.ix_(free, free)]
            rhs = atb[free] - ata[np.ix_(free, clamped)] @ x[clamped]
            try:
                x[free] = _checked_solve(nff, rhs)
            except SingularSystem:
                continue
        if np.any(x < lower - 1e-12) or np.any(x > upper + 1e-12):
            continue
        grad = ata @ x - atb
        ok = True
        for j, code in zip(open_idx, assignment):
            if code == 0 and abs(grad[j]) > grad_tol:
                ok = False
            elif code == -1 and grad[j] < -grad_tol:
                ok = False
            elif code == 1 and grad[j] > grad_tol:
                ok = False
        if not ok:
            continue
        obj = sys.objective(x)
        if obj < best_obj:
            best_obj = obj
            best = np.clip(x, lower, upper)
    if best is None:
        raise SingularSystem("no KKT-consistent active set found")
    return best


def gauss_newton_step(residual_fn, jacobian_fn, x_hat, sigma):
    """One exact Gauss-Newton step.

    Solves ``(JᵀΣ⁻¹J) dx = -JᵀΣ⁻¹ r(x_hat)`` and returns ``(dx, fisher)``
    where ``fisher = JᵀΣ⁻¹J`` (the observability gate consumes it).
    """
    x_hat = np.asarray(x_hat, dtype=float).reshape(-1)
    r = np.asarray(residual_fn(x_hat), dtype=float).reshape(-1)
    j = np.atleast_2d(np.asarray(jacobian_fn(x_hat), dtype=float))
    if not (np.all(np.isfinite(r)) and np.all(np.isfinite(j))):
        raise ValueError("residual/jacobian not finite at x_hat")
    sys = LinearSystem(j, -r, np.atleast_2d(np.asarray(sigma, dtype=float)))
    fisher, rhs = sys.normal_terms()
    dx = _checked_solve(fisher, rhs)
    return dx, fisher
