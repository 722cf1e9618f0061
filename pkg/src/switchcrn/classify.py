"""Regime verdicts for fast and slow environment switching.

Fast switching is governed by the mixed matrix M = sum_i w_i M_i: a
decreasing direction for M gives exponential ergodicity for large kappa and
an unstable support vector gives evanescence.  Slow switching is governed by
the individual M_i: decreasing directions for all of them give ergodicity for
small kappa, and increasing directions on a common support I give
evanescence.  Transience claims need at-most-monomolecular networks.

Verdicts say nothing about intermediate kappa.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from itertools import combinations
from typing import Sequence

import numpy as np

from .metzler import (
    TOL,
    CertificateKind,
    DirectionCertificate,
    decreasing_direction,
    embed,
    increasing_direction,
    principal_submatrix,
    spectral_abscissa,
    unstable_support_vector,
)
from .mixing import mix
from .model import SwitchedModel, linearize

MAX_SUPPORT_SPECIES = 20


class ConclusionKind(str, Enum):
    ERGODIC = "ErgodicEventually"
    EVANESCENT = "EvanescentEventually"
    UNKNOWN = "Unknown"


class UnknownReason(str, Enum):
    NEAR_CRITICAL = "NearCritical"
    NONLINEAR_GENERATOR = "NonlinearGenerator"
    NOT_MONOMOLECULAR = "NotMonomolecular"
    NO_COMMON_SUPPORT = "NoCommonSupport"
    MIXED_STABILITY = "MixedStability"


@dataclass(frozen=True, eq=False)
class Conclusion:
    kind: ConclusionKind
    certificates: tuple[DirectionCertificate, ...] = ()
    support: tuple[int, ...] | None = None
    reason: UnknownReason | None = None

    def to_dict(self, species: Sequence[str] | None = None) -> dict:
        out: dict = {"conclusion": self.kind.value}
        if self.support is not None:
            out["support"] = list(self.support)
            if species is not None:
                out["support_species"] = [species[k] for k in self.support]
        if self.kind is ConclusionKind.EVANESCENT:
            out["states"] = "all (x, i) with x_m > 0 for some m in support"
        out["certificates"] = [c.to_dict() for c in self.certificates]
        out["margin"] = min((c.margin for c in self.certificates), default=None)
        out["reason"] = self.reason.value if self.reason else None
        return out

    def same_as(self, other: "Conclusion") -> bool:
        return self.kind == other.kind and self.support == other.support and self.reason == other.reason


def ergodic(certs) -> Conclusion:
    return Conclusion(ConclusionKind.ERGODIC, tuple(certs))


def evanescent(support, certs) -> Conclusion:
    return Conclusion(ConclusionKind.EVANESCENT, tuple(certs), tuple(support))


def unknown(reason: UnknownReason) -> Conclusion:
    return Conclusion(ConclusionKind.UNKNOWN, reason=reason)


@dataclass(frozen=True, eq=False)
class RegimeVerdict:
    fast: Conclusion
    slow: Conclusion
    notes: tuple[str, ...] = field(default=())

    def to_dict(self, species: Sequence[str] | None = None) -> dict:
        return {"fast": self.fast.to_dict(species), "slow": self.slow.to_dict(species)}


def classify_fast(model: SwitchedModel) -> Conclusion:
    lds, md = mix(model)
    if not all(ld.is_linear_generator for ld in lds):
        return unknown(UnknownReason.NONLINEAR_GENERATOR)
    m = md.mixed_matrix
    cert = decreasing_direction(m)
    if cert is not None:
        return ergodic([cert])
    if abs(spectral_abscissa(m)) <= TOL:
        return unknown(UnknownReason.NEAR_CRITICAL)
    if not all(ld.is_at_most_monomolecular for ld in lds):
        return unknown(UnknownReason.NOT_MONOMOLECULAR)
    cert = unstable_support_vector(m)
    if cert is None:
        return unknown(UnknownReason.NEAR_CRITICAL)
    return evanescent(cert.support, [cert])


def classify_slow(model: SwitchedModel) -> Conclusion:
    lds = [linearize(env) for env in model.environments]
    if not all(ld.is_linear_generator for ld in lds):
        return unknown(UnknownReason.NONLINEAR_GENERATOR)
    certs = [decreasing_direction(ld.matrix) for ld in lds]
    if all(c is not None for c in certs):
        return ergodic(certs)
    abscissas = [spectral_abscissa(ld.matrix) for ld in lds]
    if any(a < -TOL for a in abscissas) and any(a > TOL for a in abscissas):
        # A stable environment has no unstable principal submatrix, so no common support exists.
        return unknown(UnknownReason.MIXED_STABILITY)
    if any(abs(a) <= TOL for a in abscissas):
        return unknown(UnknownReason.NEAR_CRITICAL)
    if not all(ld.is_at_most_monomolecular for ld in lds):
        return unknown(UnknownReason.NOT_MONOMOLECULAR)
    found = common_unstable_support(model)
    if found is None:
        return unknown(UnknownReason.NO_COMMON_SUPPORT)
    support, certs = found
    return evanescent(support, certs)


def classify(model: SwitchedModel) -> RegimeVerdict:
    return RegimeVerdict(classify_fast(model), classify_slow(model))


def _supports(d: int):
    for size in range(d, 0, -1):
        yield from combinations(range(d), size)


def common_unstable_support(model: SwitchedModel):
    """First support I (largest first, then lexicographic) with an increasing direction for every M_i^I.

    Returns ``(I, certificates)`` with each certificate embedded in R^d, or None.
    """
    d = model.n_species
    if d > MAX_SUPPORT_SPECIES:
        raise ValueError(f"support enumeration is limited to {MAX_SUPPORT_SPECIES} species, model has {d}")
    mats = [linearize(env).matrix for env in model.environments]
    for idx in _supports(d):
        certs = []
        for mi in mats:
            sub = increasing_direction(principal_submatrix(mi, idx))
            if sub is None:
                break
            certs.append(sub)
        else:
            return idx, [_embed_cert(c, idx, d, mi) for c, mi in zip(certs, mats)]
    return None


def _embed_cert(cert: DirectionCertificate, idx, d: int, m: np.ndarray) -> DirectionCertificate:
    v = embed(cert.v, idx, d)
    vm = v @ m
    margin = float(vm[list(idx)].min())
    kind = CertificateKind.INCREASING if len(idx) == d else CertificateKind.UNSTABLE_SUPPORT
    return DirectionCertificate(kind, v, tuple(idx), margin)


def perturb_direction(v, m, xi: Sequence, rng: np.random.Generator | None = None, retries: int = 100) -> np.ndarray:
    """Nudge v within its support so that v . xi != 0 for every xi while keeping (vM)_m > 0 on the support."""
    v = np.asarray(v, dtype=float)
    m = np.asarray(m, dtype=float)
    supp = np.flatnonzero(v > 0)
    if supp.size == 0:
        raise ValueError("v has empty support")
    if np.any(v < 0):
        raise ValueError("v must be non-negative")
    xis = [np.asarray(x, dtype=float) for x in xi]
    for x in xis:
        if not np.any(x[supp] != 0):
            raise ValueError("a vector in Xi has support disjoint from supp(v)")
    if not np.all((v @ m)[supp] > 0):
        raise ValueError("(vM)_m must be positive on supp(v)")

    def ok(u):
        return (
            np.all(u[supp] > 0)
            and np.all((u @ m)[supp] > 0)
            and all(abs(u @ x) > 0 for x in xis)
        )

    if ok(v):
        return v.copy()
    rng = rng if rng is not None else np.random.default_rng(0)
    for _ in range(retries):
        z = np.zeros_like(v)
        z[supp] = rng.uniform(-1.0, 1.0, size=supp.size)
        eps = 1.0
        while eps > 1e-300:
            u = v + eps * z
            if ok(u):
                return u
            eps /= 2
    raise ArithmeticError("could not perturb v off the given hyperplanes")


@dataclass(frozen=True, eq=False)
class EscapeWitness:
    path: tuple[tuple[int, int], ...]  # (environment, reaction index)
    states: tuple[tuple[int, ...], ...]
    final: tuple[int, ...]


def escape_witness(model: SwitchedModel, v, x0, i0: int, c: float, max_steps: int = 1_000_000) -> EscapeWitness:
    """Greedy reachable path along reactions that raise v . x until it exceeds c.

    Environments can be changed freely because Q is irreducible, so each step
    uses any environment with an admissible v-increasing reaction.
    """
    from .model import propensities

    v = np.asarray(v, dtype=float)
    x = np.asarray(x0, dtype=np.int64).copy()
    d = model.n_species
    supp = v > 0
    if not np.any(supp & (x > 0)):
        raise ValueError("supp(v) and supp(x0) do not intersect")
    if not all(linearize(e).is_at_most_monomolecular for e in model.environments):
        raise ValueError("escape witnesses need at-most-monomolecular networks")
    if not 0 <= i0 < model.n_env:
        raise ValueError("initial environment out of range")
    changes = [[r.change(d) for r in env.reactions] for env in model.environments]
    path: list[tuple[int, int]] = []
    states = [tuple(int(a) for a in x)]
    steps = 0
    while float(v @ x) <= c:
        best = None
        for j, env in enumerate(model.environments):
            lam = propensities(env, x)
            for k, ch in enumerate(changes[j]):
                gain = float(v @ ch)
                if lam[k] > 0 and gain > 0 and (best is None or gain > best[0]):
                    best = (gain, j, k)
        if best is None:
            raise ArithmeticError("witness stalled: no admissible v-increasing reaction")
        _, j, k = best
        x = x + changes[j][k]
        path.append((j, k))
        states.append(tuple(int(a) for a in x))
        steps += 1
        if steps > max_steps:
            raise ArithmeticError("witness exceeded the step budget")
    return EscapeWitness(tuple(path), tuple(states), tuple(int(a) for a in x))


__all__ = [
    "ConclusionKind", "UnknownReason", "Conclusion", "RegimeVerdict", "classify", "classify_fast",
    "classify_slow", "common_unstable_support", "perturb_direction", "escape_witness", "EscapeWitness",
]
