"""Stability certificates for Metzler matrices.

Everything here works on small dense matrices (d up to a few dozen).  The
Perron root of each irreducible diagonal block of the Frobenius form is found
by power iteration on the shifted block A + sI, which is non-negative with a
positive diagonal and therefore primitive.

Vectors are row vectors acting on the left: a certificate v is judged by the
entries of v @ M.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
import logging

import numpy as np

TOL = 1e-9
SINGULAR_RTOL = 1e-12
_RAYLEIGH_STOP = 1e-13
_MAX_ITER = 5_000
_SQUARINGS = 60

log = logging.getLogger(__name__)


class MetzlerError(ValueError):
    pass


class SingularMatrixError(ArithmeticError):
    pass


class CertificateKind(str, Enum):
    DECREASING = "Decreasing"
    INCREASING = "Increasing"
    UNSTABLE_SUPPORT = "UnstableSupport"


@dataclass(frozen=True, eq=False)
class FrobeniusForm:
    """Strongly connected blocks in an order that makes M block upper-triangular."""

    blocks: tuple[tuple[int, ...], ...]

    @property
    def permutation(self) -> list[int]:
        return [i for b in self.blocks for i in b]


@dataclass(frozen=True, eq=False)
class DirectionCertificate:
    """A direction v with its support and the verified margin of v @ M.

    ``margin`` is the smallest |(vM)_m| over the support, measured after
    construction, so re-verification by direct multiplication reproduces it.
    """

    kind: CertificateKind
    v: np.ndarray
    support: tuple[int, ...]
    margin: float

    def verify(self, m: np.ndarray) -> bool:
        return verify_certificate(self, m)

    def to_dict(self) -> dict:
        return {
            "kind": self.kind.value,
            "v": [float(x) for x in self.v],
            "support": list(self.support),
            "margin": float(self.margin),
        }


def as_matrix(m) -> np.ndarray:
    a = np.asarray(m, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise MetzlerError(f"expected a square matrix, got shape {a.shape}")
    return a


def is_metzler(m) -> bool:
    a = as_matrix(m)
    off = a[~np.eye(a.shape[0], dtype=bool)]
    return bool(np.all(off >= 0))


def _require_metzler(a: np.ndarray) -> None:
    if not is_metzler(a):
        raise MetzlerError("matrix has a negative off-diagonal entry")


def frobenius_form(m) -> FrobeniusForm:
    """Tarjan SCCs of the digraph i -> j (M[i, j] != 0), sources first."""
    a = as_matrix(m)
    d = a.shape[0]
    succ = [[j for j in range(d) if j != i and a[i, j] != 0] for i in range(d)]
    index = [-1] * d
    low = [0] * d
    on_stack = [False] * d
    stack: list[int] = []
    out: list[tuple[int, ...]] = []
    counter = 0
    for root in range(d):
        if index[root] >= 0:
            continue
        work = [(root, 0)]
        while work:
            v, k = work.pop()
            if k == 0:
                index[v] = low[v] = counter
                counter += 1
                stack.append(v)
                on_stack[v] = True
            recurse = False
            for p in range(k, len(succ[v])):
                w = succ[v][p]
                if index[w] < 0:
                    work.append((v, p + 1))
                    work.append((w, 0))
                    recurse = True
                    break
                if on_stack[w]:
                    low[v] = min(low[v], index[w])
            if recurse:
                continue
            if low[v] == index[v]:
                comp = []
                while True:
                    w = stack.pop()
                    on_stack[w] = False
                    comp.append(w)
                    if w == v:
                        break
                out.append(tuple(sorted(comp)))
            if work:
                parent = work[-1][0]
                low[parent] = min(low[parent], low[v])
    # Order the condensation topologically, smallest index first among ready blocks.
    comp_of = {i: c for c, comp in enumerate(out) for i in comp}
    indeg = [0] * len(out)
    edges: list[set[int]] = [set() for _ in out]
    for i in range(d):
        for j in succ[i]:
            ci, cj = comp_of[i], comp_of[j]
            if ci != cj and cj not in edges[ci]:
                edges[ci].add(cj)
                indeg[cj] += 1
    ready = [c for c in range(len(out)) if indeg[c] == 0]
    ordered = []
    while ready:
        ready.sort(key=lambda c: out[c][0])
        c = ready.pop(0)
        ordered.append(out[c])
        for e in edges[c]:
            indeg[e] -= 1
            if indeg[e] == 0:
                ready.append(e)
    return FrobeniusForm(tuple(ordered))


def solve_left(a: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve v @ a = rhs by partial-pivot elimination on a.T."""
    return solve(a.T, rhs)


def solve(a, b) -> np.ndarray:
    """Gaussian elimination with partial pivoting for a square system a x = b."""
    a = np.array(a, dtype=float)
    x = np.array(b, dtype=float)
    n = a.shape[0]
    scale = np.abs(a).max() if a.size else 0.0
    thresh = SINGULAR_RTOL * scale
    for k in range(n):
        p = k + int(np.argmax(np.abs(a[k:, k])))
        if abs(a[p, k]) <= thresh or a[p, k] == 0:
            raise SingularMatrixError(f"pivot {a[p, k]!r} below threshold at column {k}")
        if p != k:
            a[[k, p]] = a[[p, k]]
            x[[k, p]] = x[[p, k]]
        f = a[k + 1:, k] / a[k, k]
        a[k + 1:, k:] -= np.outer(f, a[k, k:])
        x[k + 1:] -= f * x[k]
    for k in range(n - 1, -1, -1):
        x[k] = (x[k] - a[k, k + 1:] @ x[k + 1:]) / a[k, k]
    return x


@dataclass(frozen=True, eq=False)
class PerronData:
    root: float
    left: np.ndarray
    right: np.ndarray
    iterations: int


def perron(block) -> PerronData:
    """Perron root and unit 1-norm left/right Perron vectors of an irreducible Metzler block."""
    a = as_matrix(block)
    k = a.shape[0]
    if k == 1:
        one = np.ones(1)
        return PerronData(float(a[0, 0]), one, one, 0)
    s = 1.0 + float(np.abs(np.diag(a)).max())
    b = a + s * np.eye(k)
    x = np.full(k, 1.0 / k)
    y = np.full(k, 1.0 / k)
    prev = np.inf
    lam = np.nan
    it = 0
    for it in range(1, _MAX_ITER + 1):
        bx = b @ x
        yb = y @ b
        lam = float(y @ bx) / float(y @ x)
        x = bx / bx.sum()
        y = yb / yb.sum()
        if abs(lam - prev) < _RAYLEIGH_STOP * s:
            break
        prev = lam
    else:
        # Slow convergence: raise the shifted block to the power 2**60 by squaring.
        p = b / np.abs(b).max()
        for _ in range(_SQUARINGS):
            p = p @ p
            p /= np.abs(p).max()
        x = p @ np.ones(k)
        y = np.ones(k) @ p
        x /= x.sum()
        y /= y.sum()
        lam = float(y @ b @ x) / float(y @ x)
        log.debug("power iteration fell back to repeated squaring")
    return PerronData(lam - s, y, x, it)


def block_roots(m) -> list[tuple[tuple[int, ...], PerronData]]:
    a = as_matrix(m)
    _require_metzler(a)
    form = frobenius_form(a)
    return [(blk, perron(a[np.ix_(blk, blk)])) for blk in form.blocks]


def spectral_abscissa(m) -> float:
    """Largest real eigenvalue of a Metzler matrix: the max of block Perron roots."""
    roots = block_roots(m)
    if not roots:
        return -np.inf
    return max(p.root for _, p in roots)


def _measure(kind: CertificateKind, v: np.ndarray, m: np.ndarray, support: tuple[int, ...]) -> float:
    vm = v @ m
    vals = vm[list(support)]
    if kind is CertificateKind.DECREASING:
        return float(-vals.max())
    return float(vals.min())


def verify_certificate(cert: DirectionCertificate, m) -> bool:
    """Recompute v @ M and check the kind's inequalities with the stated margin."""
    a = as_matrix(m)
    v = np.asarray(cert.v, dtype=float)
    if v.shape != (a.shape[0],) or np.any(v < 0) or not cert.margin > 0:
        return False
    vm = v @ a
    support = set(cert.support)
    if cert.kind is CertificateKind.UNSTABLE_SUPPORT:
        if not support or support != {i for i in range(len(v)) if v[i] > 0}:
            return False
        return all(vm[i] >= cert.margin for i in support)
    if not np.all(v > 0) or support != set(range(len(v))):
        return False
    if cert.kind is CertificateKind.DECREASING:
        return bool(np.all(vm <= -cert.margin))
    return bool(np.all(vm >= cert.margin))


def decreasing_direction(m) -> DirectionCertificate | None:
    """v > 0 with v M = -1 when M is Hurwitz stable, else None."""
    a = as_matrix(m)
    _require_metzler(a)
    d = a.shape[0]
    if spectral_abscissa(a) >= -TOL:
        return None
    try:
        v = solve_left(a, -np.ones(d))
    except SingularMatrixError as exc:
        log.warning("decreasing direction: %s", exc)
        return None
    support = tuple(range(d))
    if np.any(v <= 0):
        log.warning("decreasing direction: solve gave a non-positive entry")
        return None
    margin = _measure(CertificateKind.DECREASING, v, a, support)
    if margin <= 0:
        return None
    return DirectionCertificate(CertificateKind.DECREASING, v, support, margin)


def increasing_direction(m) -> DirectionCertificate | None:
    """v > 0 with v M > 0 when every Frobenius block is unstable, else None."""
    a = as_matrix(m)
    roots = block_roots(a)
    d = a.shape[0]
    if not roots or any(p.root <= TOL for _, p in roots):
        return None
    rate = 0.5 * min(p.root for _, p in roots)
    gamma = 1.0
    while gamma <= 2.0 ** 60:
        v = np.zeros(d)
        for rank, (blk, p) in enumerate(roots):
            v[list(blk)] = gamma ** rank * p.left
        vm = v @ a
        if np.all(v > 0) and np.all(vm >= rate * v):
            support = tuple(range(d))
            return DirectionCertificate(CertificateKind.INCREASING, v, support,
                                        _measure(CertificateKind.INCREASING, v, a, support))
        gamma *= 2.0
    raise ArithmeticError("no scaling of the block Perron vectors gives an increasing direction")


def unstable_support_vector(m) -> DirectionCertificate | None:
    """Left Perron vector of a block with maximal root r > tol, zero elsewhere."""
    a = as_matrix(m)
    roots = block_roots(a)
    if not roots:
        return None
    blk, p = max(roots, key=lambda bp: bp[1].root)
    if p.root <= TOL:
        return None
    v = np.zeros(a.shape[0])
    v[list(blk)] = p.left
    support = tuple(i for i in range(len(v)) if v[i] > 0)
    if set(support) != set(blk):
        log.warning("left Perron vector has a zero entry; block not irreducible?")
        return None
    margin = _measure(CertificateKind.UNSTABLE_SUPPORT, v, a, support)
    if margin <= 0:
        return None
    return DirectionCertificate(CertificateKind.UNSTABLE_SUPPORT, v, support, margin)


def principal_submatrix(m, idx) -> np.ndarray:
    a = as_matrix(m)
    idx = list(idx)
    return a[np.ix_(idx, idx)]


def embed(v_sub: np.ndarray, idx, d: int) -> np.ndarray:
    v = np.zeros(d)
    v[list(idx)] = v_sub
    return v


__all__ = [
    "TOL", "CertificateKind", "DirectionCertificate", "FrobeniusForm", "MetzlerError",
    "SingularMatrixError", "is_metzler", "frobenius_form", "spectral_abscissa", "perron",
    "block_roots", "decreasing_direction", "increasing_direction", "unstable_support_vector",
    "verify_certificate", "solve", "solve_left", "principal_submatrix", "embed",
]
