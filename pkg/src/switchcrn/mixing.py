"""Stationary law of the environment chain, the mixed matrix, and z-vectors.

The z-vectors solve diag(w) Q z^m = psi^m with
psi^m_i = (v (M / n - w_i M_i))_m, which is the same as

    sum_{j != i} q_ij (z^m_j - z^m_i) + (v M_i)_m = (v M)_m / (n w_i).

They are what turn the averaged drift v M into a per-environment linear
Lyapunov correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Sequence

import numpy as np

from .metzler import SingularMatrixError, solve
from .model import LinearData, ModelError, SwitchedModel, linearize

STATIONARY_TOL = 1e-10
PSI_TOL = 1e-9
RESIDUAL_TOL = 1e-8
IDENTITY_TOL = 1e-10
EXACT_MAX_N = 12


@dataclass(frozen=True, eq=False)
class MixData:
    w: np.ndarray
    mixed_matrix: np.ndarray


@dataclass(frozen=True, eq=False)
class ZVectors:
    """z[m] is the n-vector z^m; rows outside ``support`` are zero."""

    z: np.ndarray
    support: tuple[int, ...]

    def u(self, i: int) -> np.ndarray:
        """Per-environment vector u^i with u^i_m = z^m_i."""
        return self.z[:, i].copy()


def _exact_solve(a: np.ndarray, rhs: np.ndarray) -> np.ndarray | None:
    """Gaussian elimination over the rationals; floats convert to Fractions exactly."""
    n = a.shape[0]
    rows = [[Fraction(float(x)) for x in a[i]] + [Fraction(float(rhs[i]))] for i in range(n)]
    for col in range(n):
        piv = next((r for r in range(col, n) if rows[r][col] != 0), None)
        if piv is None:
            return None
        rows[col], rows[piv] = rows[piv], rows[col]
        p = rows[col][col]
        for r in range(n):
            if r != col and rows[r][col] != 0:
                f = rows[r][col] / p
                rows[r] = [x - f * y for x, y in zip(rows[r], rows[col])]
    return np.array([float(rows[i][n] / rows[i][i]) for i in range(n)])


def stationary_distribution(q) -> np.ndarray:
    """Solve w Q = 0, sum(w) = 1 by replacing the first equation with the normalization.

    Chains with at most EXACT_MAX_N states are solved in exact rational
    arithmetic and rounded once, so dyadic inputs give exact weights.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    a = q.T.copy()
    a[0, :] = 1.0
    rhs = np.zeros(n)
    rhs[0] = 1.0
    if n <= EXACT_MAX_N:
        w = _exact_solve(a, rhs)
        if w is None:
            raise ModelError("rate matrix is not irreducible (singular stationary system)")
    else:
        try:
            w = solve(a, rhs)
        except SingularMatrixError:
            raise ModelError("rate matrix is not irreducible (singular stationary system)") from None
        w = w / w.sum()
    if np.any(w <= 0):
        raise ModelError("rate matrix is not irreducible (non-positive stationary mass)")
    if n > 1 and np.abs(w @ q).max() > STATIONARY_TOL * max(1.0, np.abs(q).max()):
        raise ModelError("stationary solve did not converge")
    return w


def mixed_matrix(linear_data: Sequence[LinearData], w) -> np.ndarray:
    """sum_i w_i M_i with each entry summed by fsum."""
    w = np.asarray(w, dtype=float)
    if len(linear_data) != len(w):
        raise ValueError("one weight per environment is required")
    stack = np.stack([wi * ld.matrix for wi, ld in zip(w, linear_data)])
    d = stack.shape[1]
    return np.array([[math.fsum(stack[:, r, c]) for c in range(d)] for r in range(d)])


def mix(model: SwitchedModel) -> tuple[list[LinearData], MixData]:
    lds = [linearize(env) for env in model.environments]
    w = stationary_distribution(model.q_matrix)
    return lds, MixData(w, mixed_matrix(lds, w))


def identity_residual(q, w, matrices, v, zv: ZVectors) -> np.ndarray:
    """Left minus right side of the z-vector identity, shape (d, n); support rows only."""
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    n = len(w)
    v = np.asarray(v, dtype=float)
    vmix = v @ sum(wi * mi for wi, mi in zip(w, matrices))
    res = np.zeros((len(v), n))
    for m in zv.support:
        z = zv.z[m]
        for i in range(n):
            lhs = sum(q[i, j] * (z[j] - z[i]) for j in range(n) if j != i) + (v @ matrices[i])[m]
            res[m, i] = lhs - vmix[m] / (n * w[i])
    return res


def solve_z_system(
    q,
    w,
    matrices: Sequence[np.ndarray],
    v,
    support: Iterable[int] | None = None,
) -> ZVectors:
    """z-vectors for direction v, shifted so each has minimum entry 1.

    The rank n-1 system diag(w) Q z = psi is made square-consistent by
    appending 1 . z = 0 and solved by least squares; since the kernel is the
    constant vector this gives the least-norm solution.
    """
    q = np.asarray(q, dtype=float)
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    n = len(w)
    d = len(v)
    mats = [np.asarray(mi, dtype=float) for mi in matrices]
    if support is None:
        support = [m for m in range(d) if v[m] != 0]
    support = tuple(sorted(set(int(m) for m in support)))
    mixed = sum(wi * mi for wi, mi in zip(w, mats))
    vmix = v @ mixed
    vmi = np.array([v @ mi for mi in mats])  # (n, d)
    a = np.vstack([np.diag(w) @ q, np.ones((1, n))])
    z = np.zeros((d, n))
    for m in support:
        psi = vmix[m] / n - w * vmi[:, m]
        if abs(psi.sum()) > PSI_TOL * max(1.0, np.abs(psi).max()):
            raise ValueError("psi is not orthogonal to the ones vector; w is not stationary for Q")
        rhs = np.append(psi, 0.0)
        sol, *_ = np.linalg.lstsq(a, rhs, rcond=None)
        if np.abs(a @ sol - rhs).max() > RESIDUAL_TOL * max(1.0, np.abs(rhs).max()):
            raise ValueError("z-vector system is inconsistent; w is not stationary for Q")
        z[m] = sol - sol.min() + 1.0
    zv = ZVectors(z, support)
    res = identity_residual(q, w, mats, v, zv)
    scale = max(1.0, float(np.abs(vmi).max(initial=0.0)), float(np.abs(q).max()) * float(np.abs(z).max(initial=0.0)))
    if np.abs(res).max(initial=0.0) > IDENTITY_TOL * scale:
        raise ArithmeticError(f"z-vector identity residual {np.abs(res).max():.3g} too large")
    return zv


def solve_z(model: SwitchedModel, w, v, support=None) -> ZVectors:
    """z-vectors of ``model`` for direction v; support defaults to supp(v)."""
    lds = [linearize(env) for env in model.environments]
    return solve_z_system(model.q_matrix, w, [ld.matrix for ld in lds], v, support)


def two_state_closed_form(w, matrices, v, q12: float, q21: float) -> np.ndarray:
    """z_i = w_i (v M_i)_m / (2 w_1 w_2 (q12 + q21)) for a two-state chain, shape (d, 2).

    With q12 + q21 = 1 this is the relation 2 w_1 w_2 z_i = w_i (v M_i)_m.
    """
    w = np.asarray(w, dtype=float)
    v = np.asarray(v, dtype=float)
    cols = [w[i] * (v @ np.asarray(matrices[i], dtype=float)) for i in range(2)]
    return np.stack(cols, axis=1) / (2 * w[0] * w[1] * (q12 + q21))


__all__ = [
    "MixData", "ZVectors", "stationary_distribution", "mixed_matrix", "mix", "solve_z",
    "solve_z_system", "identity_residual", "two_state_closed_form",
]
