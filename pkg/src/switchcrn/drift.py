"""Lyapunov functions, exact generator evaluation, and drift checks.

Three function shapes are supported, each indexed by environment i:

* linear      h(x, i) = c^i . x
* reciprocal  h(x, i) = 1 - 1 / (1 + c^i . x)
* power       h(x, i) = s_i x^p        (one species only)

The generator of the switched chain at speed kappa is

    L h(x, i) = sum_{j != i} kappa q_ij (h(x, j) - h(x, i))
              + sum_r lambda_r(x) (h(x + y'_r - y_r, i) - h(x, i)).

Each difference is formed in closed form for the shape at hand instead of
subtracting two evaluations, so values far out on a shell keep their relative
accuracy.  The sign checks on leading coefficients are what certify the drift;
sampled states only look for implementation bugs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.stats import qmc

from .metzler import DirectionCertificate, decreasing_direction, increasing_direction
from .mixing import solve_z_system, stationary_distribution
from .model import SwitchedModel, linearize

KAPPA_GRID = tuple(2.0 ** k for k in range(-30, 31))
SHELL_BANDS = tuple(2.0 ** k for k in range(0, 21))
SHELL_SAMPLE_CAP = 10_000
SHELL_FLOOR = 2.0 ** 10
BOX_STATE_CAP = 1_000_000


class Form(str, Enum):
    LINEAR = "Linear"
    RECIPROCAL = "Reciprocal"
    POWER = "Power"


@dataclass(frozen=True, eq=False)
class LyapunovFn:
    """h(x, i) for one of the three shapes, plus an optional additive constant."""

    form: Form
    coeffs: np.ndarray  # (n, d) for linear/reciprocal, (n,) scales for power
    exponent: float = 1.0
    const: float = 0.0

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        object.__setattr__(self, "coeffs", c)
        if self.form is Form.POWER:
            if c.ndim != 1:
                raise ValueError("power form takes one scale per environment")
        elif c.ndim != 2:
            raise ValueError("linear and reciprocal forms take an (n, d) coefficient array")

    @classmethod
    def linear(cls, coeffs, const: float = 0.0) -> "LyapunovFn":
        return cls(Form.LINEAR, np.atleast_2d(np.asarray(coeffs, dtype=float)), const=const)

    @classmethod
    def reciprocal(cls, coeffs) -> "LyapunovFn":
        return cls(Form.RECIPROCAL, np.atleast_2d(np.asarray(coeffs, dtype=float)))

    @classmethod
    def power(cls, scales, exponent: float) -> "LyapunovFn":
        return cls(Form.POWER, np.asarray(scales, dtype=float), float(exponent))

    @property
    def n_env(self) -> int:
        return self.coeffs.shape[0]

    def values(self, xs: np.ndarray, i: int) -> np.ndarray:
        xs = np.atleast_2d(np.asarray(xs, dtype=float))
        if self.form is Form.LINEAR:
            out = xs @ self.coeffs[i]
        elif self.form is Form.RECIPROCAL:
            out = 1.0 - 1.0 / (1.0 + xs @ self.coeffs[i])
        else:
            out = self.coeffs[i] * xs[:, 0] ** self.exponent
        return out + self.const

    def value(self, x, i: int) -> float:
        return float(self.values(np.asarray(x)[None, :], i)[0])

    def jumps(self, xs: np.ndarray, i: int, j: int, dx: np.ndarray) -> np.ndarray:
        """h(x + dx, j) - h(x, i) for each row x of xs."""
        dx = np.asarray(dx, dtype=float)
        if self.form is Form.POWER:
            x = xs[:, 0]
            p = self.exponent
            si, sj = self.coeffs[i], self.coeffs[j]
            if i == j:
                if p == 1.0:
                    return np.full(len(x), si * dx[0])
                return si * ((x + dx[0]) ** p - x ** p)
            return sj * (x + dx[0]) ** p - si * x ** p
        ci, cj = self.coeffs[i], self.coeffs[j]
        delta = xs @ (cj - ci) + cj @ dx
        if self.form is Form.LINEAR:
            return delta
        s = xs @ ci
        s2 = s + delta
        with np.errstate(divide="ignore", invalid="ignore"):
            return delta / ((1.0 + s) * (1.0 + s2))

    def to_dict(self) -> dict:
        out = {"form": self.form.value, "coeffs": self.coeffs.tolist()}
        if self.form is Form.POWER:
            out["exponent"] = self.exponent
        if self.const:
            out["const"] = self.const
        return out


@dataclass(frozen=True, eq=False)
class DriftReport:
    mode: str  # "ErgodicDrift" or "TransientDrift"
    algebraic_pass: bool
    kappa: float
    leading: np.ndarray | None = None
    b: float | None = None
    c: float | None = None
    dconst: float | None = None
    sampled_violations: tuple = ()
    n_sampled: int = 0
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "algebraic_pass": bool(self.algebraic_pass),
            "kappa": self.kappa,
            "leading": None if self.leading is None else np.asarray(self.leading).tolist(),
            "b": self.b,
            "c": self.c,
            "dconst": self.dconst,
            "n_sampled": self.n_sampled,
            "sampled_violations": [{"x": list(map(int, x)), "env": int(i)} for x, i in self.sampled_violations],
            **self.details,
        }


# -- generator ---------------------------------------------------------------


def _env_tables(model: SwitchedModel):
    d = model.n_species
    out = []
    for env in model.environments:
        out.append([(r.rate, r.source.terms, r.change(d).astype(float)) for r in env.reactions])
    return out


def _propensity_columns(xs: np.ndarray, table) -> np.ndarray:
    lam = np.empty((xs.shape[0], len(table)))
    for k, (rate, terms, _) in enumerate(table):
        col = np.full(xs.shape[0], rate)
        for idx, count in terms:
            xm = xs[:, idx]
            for step in range(count):
                col = col * np.maximum(xm - step, 0.0)
        lam[:, k] = col
    return lam


def generator_terms(model: SwitchedModel, kappa: float, h: LyapunovFn, xs, i: int) -> np.ndarray:
    """Per-transition contributions to L h at each state, shape (N, transitions)."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    if xs.shape[1] != model.n_species:
        raise ValueError("state dimension does not match the species count")
    if np.any(xs < 0):
        raise ValueError("states must be non-negative")
    if h.n_env != model.n_env:
        raise ValueError("function has the wrong number of environments")
    q = model.q_matrix
    cols = []
    zero = np.zeros(model.n_species)
    for j in range(model.n_env):
        if j != i and q[i, j] != 0:
            cols.append(kappa * q[i, j] * h.jumps(xs, i, j, zero))
    table = _env_tables(model)[i]
    lam = _propensity_columns(xs, table)
    for k, (_, _, ch) in enumerate(table):
        jump = h.jumps(xs, i, i, ch)
        cols.append(np.where(lam[:, k] > 0, lam[:, k] * np.where(lam[:, k] > 0, jump, 0.0), 0.0))
    if not cols:
        return np.zeros((xs.shape[0], 0))
    return np.stack(cols, axis=1)


def generator_apply(model: SwitchedModel, kappa: float, h: LyapunovFn, x, i: int) -> float:
    """Exact L h(x, i) as a compensated sum of the finitely many transition terms."""
    terms = generator_terms(model, kappa, h, np.asarray(x)[None, :], i)[0]
    return math.fsum(terms.tolist())


def generator_values(model: SwitchedModel, kappa: float, h: LyapunovFn, xs, i: int) -> np.ndarray:
    return generator_terms(model, kappa, h, xs, i).sum(axis=1)


# -- leading coefficients ----------------------------------------------------


def _matrices(model: SwitchedModel) -> list[np.ndarray]:
    return [linearize(env).matrix for env in model.environments]


def linear_leading(model: SwitchedModel, kappa: float, coeffs) -> np.ndarray:
    """Row i is sum_{j != i} kappa q_ij (c^j - c^i) + c^i M_i, the x-coefficient of L h for linear h."""
    c = np.asarray(coeffs, dtype=float)
    q = model.q_matrix
    mats = _matrices(model)
    out = np.empty_like(c)
    for i in range(model.n_env):
        row = c[i] @ mats[i]
        for j in range(model.n_env):
            if j != i:
                row = row + kappa * q[i, j] * (c[j] - c[i])
        out[i] = row
    return out


def power_leading(model: SwitchedModel, kappa: float, scales, exponent: float) -> np.ndarray:
    """Coefficient of x^p in L h for h = s_i x^p on a one-species model."""
    if model.n_species != 1:
        raise ValueError("power functions are for one-species models")
    s = np.asarray(scales, dtype=float)
    q = model.q_matrix
    mats = _matrices(model)
    out = np.empty(model.n_env)
    for i in range(model.n_env):
        out[i] = exponent * s[i] * mats[i][0, 0] + kappa * sum(q[i, j] * (s[j] - s[i]) for j in range(model.n_env) if j != i)
    return out


def _smallest_passing(test, grid=KAPPA_GRID) -> float | None:
    """Smallest grid value from which test holds at every larger grid value."""
    best = None
    for k in reversed(grid):
        if not test(k):
            break
        best = k
    return best


def _largest_passing(test, grid=KAPPA_GRID) -> float | None:
    best = None
    for k in grid:
        if not test(k):
            break
        best = k
    return best


# -- ergodic constructions ---------------------------------------------------


def fast_ergodic_vectors(model: SwitchedModel, v) -> np.ndarray:
    """u^i as rows, from the z-vectors over all species shifted to minimum 0.

    z^m is determined up to a constant; minimum 0 keeps v + u^i / kappa
    positive and makes u vanish for one environment.
    """
    q = model.q_matrix
    w = stationary_distribution(q)
    zv = solve_z_system(q, w, _matrices(model), v, support=range(model.n_species))
    z = zv.z - zv.z.min(axis=1, keepdims=True)
    return z.T.copy()


def fast_ergodic_condition(model: SwitchedModel, v, u, kappa: float) -> np.ndarray:
    coeffs = np.asarray(v)[None, :] + np.asarray(u) / kappa
    return linear_leading(model, kappa, coeffs)


def _mixed_decreasing(model: SwitchedModel) -> DirectionCertificate:
    mixed = sum(wi * mi for wi, mi in zip(stationary_distribution(model.q_matrix), _matrices(model)))
    cert = decreasing_direction(mixed)
    if cert is None:
        raise ValueError("the mixed matrix has no decreasing direction")
    return cert


def fast_ergodic_function(model: SwitchedModel, kappa: float, cert: DirectionCertificate | None = None) -> LyapunovFn:
    """The linear function (v + u^i / kappa) . x for one switching speed."""
    v = np.asarray((cert or _mixed_decreasing(model)).v, dtype=float)
    return LyapunovFn.linear(v[None, :] + fast_ergodic_vectors(model, v) / kappa)


def build_fast_ergodic(model: SwitchedModel, cert: DirectionCertificate | None = None):
    """Linear function (v + u^i / kappa) . x and the smallest grid kappa where its drift is negative.

    Returns ``(h, kappa)``; kappa is None when no grid value works.  The
    coefficients depend on kappa, so use fast_ergodic_function for other speeds.
    """
    if cert is None:
        cert = _mixed_decreasing(model)
    v = np.asarray(cert.v, dtype=float)
    u = fast_ergodic_vectors(model, v)
    kappa = _smallest_passing(lambda k: bool(np.all(fast_ergodic_condition(model, v, u, k) < 0)))
    if kappa is None:
        return None, None
    return LyapunovFn.linear(v[None, :] + u / kappa), kappa


def slow_ergodic_condition(model: SwitchedModel, vs, kappa: float) -> np.ndarray:
    return linear_leading(model, kappa, vs)


def build_slow_ergodic(model: SwitchedModel, certs: Sequence[DirectionCertificate] | None = None):
    """Linear function v^i . x and the largest grid kappa where its drift is negative."""
    if certs is None:
        certs = [decreasing_direction(m) for m in _matrices(model)]
        if any(c is None for c in certs):
            raise ValueError("some environment matrix has no decreasing direction")
    vs = np.array([c.v for c in certs], dtype=float)
    kappa = _largest_passing(lambda k: bool(np.all(slow_ergodic_condition(model, vs, k) < 0)))
    return LyapunovFn.linear(vs), kappa


# -- transience --------------------------------------------------------------


def _ratio_bound(num: np.ndarray, den: np.ndarray, idx, diff: float) -> float:
    """The a-coefficient: min/max of 1 and the ratios num_l / den_l over idx, by the sign of diff."""
    ratios = [num[l] / den[l] for l in idx]
    if diff > 0:
        return min([1.0] + ratios)
    if diff < 0:
        return max([1.0] + ratios)
    return 1.0


def _require_monomolecular(model: SwitchedModel) -> None:
    if not all(linearize(env).is_at_most_monomolecular for env in model.environments):
        raise ValueError("transience checks need at-most-monomolecular networks")


def fast_transience_leading(model: SwitchedModel, kappa: float, v):
    """Left side of the fast-transience inequality for every environment and m in supp(v).

    Returns ``(lhs, support, phi)`` where lhs has shape (n, d) with zeros off the support.
    """
    v = np.asarray(v, dtype=float)
    if np.any(v < 0):
        raise ValueError("v must be non-negative")
    support = tuple(int(m) for m in np.flatnonzero(v > 0))
    if not support:
        raise ValueError("v has empty support")
    _require_monomolecular(model)
    q = model.q_matrix
    n = model.n_env
    w = stationary_distribution(q)
    mats = _matrices(model)
    zv = solve_z_system(q, w, mats, v, support)
    z = zv.z  # (d, n)
    phi = np.array([v + z[:, i] / kappa for i in range(n)])
    lhs = np.zeros((n, model.n_species))
    for i in range(n):
        pm = phi[i] @ mats[i]
        for m in support:
            total = pm[m]
            for j in range(n):
                if j == i or q[i, j] == 0:
                    continue
                diff = z[m, j] - z[m, i]
                total += q[i, j] * _ratio_bound(phi[i], phi[j], support, diff) * diff
            lhs[i, m] = total
    return lhs, support, phi


def _shell_states(weights: np.ndarray, d: int, per_band: int, bands=SHELL_BANDS):
    """Halton lattice points with weights . x in [b, 2b] for each band b."""
    supp = np.flatnonzero(weights > 0)
    sampler = qmc.Halton(d=d + 1, scramble=False)
    pts = sampler.random(per_band + 1)[1:]  # skip the origin
    out = []
    for b in bands:
        t = b * (1.0 + pts[:, 0])
        raw = pts[:, 1:] + 1e-3
        xs = np.zeros((len(pts), d))
        scale = t / (raw[:, supp] @ weights[supp])
        xs[:, supp] = np.floor(raw[:, supp] * scale[:, None])
        off = np.setdiff1d(np.arange(d), supp)
        if off.size:
            xs[:, off] = np.floor(raw[:, off] * t[:, None])
        val = xs @ weights
        xs = xs[(val >= b) & (val <= 2 * b)]
        out.append((b, xs))
    return out


def _shell_scan(model: SwitchedModel, kappa: float, h: LyapunovFn, weights: np.ndarray):
    n = model.n_env
    per_band = max(1, SHELL_SAMPLE_CAP // (len(SHELL_BANDS) * n))
    failing_bands = set()
    violations = []
    sampled = 0
    for band, xs in _shell_states(weights, model.n_species, per_band):
        for i in range(n):
            if len(xs) == 0:
                continue
            vals = generator_values(model, kappa, h, xs, i)
            sampled += len(xs)
            bad = np.flatnonzero(~(vals > 0))
            if bad.size:
                failing_bands.add(band)
                if band >= SHELL_FLOOR:
                    violations.extend((tuple(int(a) for a in xs[k]), i) for k in bad)
    b = None
    for band in reversed(SHELL_BANDS):
        if band in failing_bands:
            break
        b = band
    violations.sort()
    return b, tuple(violations), sampled


def check_fast_transience(model: SwitchedModel, kappa: float, v, sample: bool = True) -> DriftReport:
    lhs, support, phi = fast_transience_leading(model, kappa, v)
    ok = bool(all(lhs[i, m] > 0 for i in range(model.n_env) for m in support))
    b, viol, sampled = None, (), 0
    if ok and sample:
        h = LyapunovFn.reciprocal(phi)
        b, viol, sampled = _shell_scan(model, kappa, h, np.asarray(v, dtype=float))
    return DriftReport("TransientDrift", ok, kappa, lhs, b=b, sampled_violations=viol, n_sampled=sampled,
                       details={"support": list(support), "phi": phi.tolist()})


def fast_transience_threshold(model: SwitchedModel, v) -> float | None:
    def test(k):
        lhs, support, _ = fast_transience_leading(model, k, v)
        return all(lhs[i, m] > 0 for i in range(model.n_env) for m in support)
    return _smallest_passing(test)


def slow_transience_leading(model: SwitchedModel, kappa: float, support, vs) -> np.ndarray:
    vs = np.asarray(vs, dtype=float)
    support = tuple(sorted(int(m) for m in support))
    if not support:
        raise ValueError("empty support")
    for vi in vs:
        if np.any(vi < 0) or tuple(np.flatnonzero(vi > 0)) != support:
            raise ValueError("every v^i must have support exactly I (supports differ)")
    _require_monomolecular(model)
    q = model.q_matrix
    mats = _matrices(model)
    n = model.n_env
    lhs = np.zeros((n, model.n_species))
    for i in range(n):
        vm = vs[i] @ mats[i]
        for m in support:
            total = vm[m]
            for j in range(n):
                if j == i or q[i, j] == 0:
                    continue
                diff = vs[j, m] - vs[i, m]
                total += kappa * q[i, j] * _ratio_bound(vs[i], vs[j], support, diff) * diff
            lhs[i, m] = total
    return lhs


def check_slow_transience(model: SwitchedModel, kappa: float, support, vs, sample: bool = True) -> DriftReport:
    lhs = slow_transience_leading(model, kappa, support, vs)
    support = tuple(sorted(int(m) for m in support))
    ok = bool(all(lhs[i, m] > 0 for i in range(model.n_env) for m in support))
    b, viol, sampled = None, (), 0
    if ok and sample:
        vs = np.asarray(vs, dtype=float)
        b, viol, sampled = _shell_scan(model, kappa, LyapunovFn.reciprocal(vs), vs.mean(axis=0))
    return DriftReport("TransientDrift", ok, kappa, lhs, b=b, sampled_violations=viol, n_sampled=sampled,
                       details={"support": list(support)})


def slow_transience_threshold(model: SwitchedModel, support, vs) -> float | None:
    support = tuple(sorted(int(m) for m in support))

    def test(k):
        lhs = slow_transience_leading(model, k, support, vs)
        return all(lhs[i, m] > 0 for i in range(model.n_env) for m in support)
    return _largest_passing(test)


# -- grouped four-environment transience ---------------------------------------

PAIR_Q = np.array([[-1.0, 1.0], [1.0, -1.0]])


def is_grouped_rate_matrix(q, tol: float = 1e-12) -> bool:
    """Pairs {0,1} and {2,3} at rate 1 inside, one common rate across, rows summing to zero."""
    q = np.asarray(q, dtype=float)
    if q.shape != (4, 4):
        return False
    cross = q[0, 2]
    if cross <= 0:
        return False
    for i in range(4):
        partner = i ^ 1
        for j in range(4):
            if j == i:
                want = -(1 + 2 * cross)
            elif j == partner:
                want = 1.0
            else:
                want = cross
            if abs(q[i, j] - want) > tol * max(1.0, abs(want)):
                return False
    return True


def pair_averages(model4: SwitchedModel) -> tuple[np.ndarray, np.ndarray]:
    mats = _matrices(model4)
    return (mats[0] + mats[1]) / 2, (mats[2] + mats[3]) / 2


def grouped_leading(model4: SwitchedModel, kappa: float, eps: float, v1, v2):
    """Left side of the grouped inequality, shape (4, d), plus the phi vectors.

    The pair z-vectors come from the two-environment system of each pair with
    rate matrix [[-1, 1], [1, -1]], so that (u^partner - u^i) + v M_i = v A_pair.
    """
    if not is_grouped_rate_matrix(model4.q_matrix):
        raise ValueError("rate matrix is not of the grouped four-environment form")
    vs = [np.asarray(v1, dtype=float), np.asarray(v2, dtype=float)]
    for v in vs:
        if v.shape != (model4.n_species,) or np.any(v <= 0):
            raise ValueError("group directions must be strictly positive")
    _require_monomolecular(model4)
    mats = _matrices(model4)
    avgs = pair_averages(model4)
    for v, a in zip(vs, avgs):
        if not np.all(v @ a > 0):
            raise ValueError("v A must be strictly positive for each group")
    d = model4.n_species
    w2 = np.array([0.5, 0.5])
    u = np.zeros((4, d))
    for g in range(2):
        zv = solve_z_system(PAIR_Q, w2, mats[2 * g:2 * g + 2], vs[g], support=range(d))
        u[2 * g] = zv.u(0)
        u[2 * g + 1] = zv.u(1)
    phi = np.array([vs[i // 2] + u[i] / kappa for i in range(4)])
    every = range(d)
    lhs = np.zeros((4, d))
    for i in range(4):
        p = i ^ 1
        pm = phi[i] @ mats[i]
        for m in every:
            du = u[p, m] - u[i, m]
            total = _ratio_bound(phi[i], phi[p], every, phi[p, m] - phi[i, m]) * du + pm[m]
            for j in range(4):
                if j in (i, p):
                    continue
                diff = phi[j, m] - phi[i, m]
                total += kappa * eps * _ratio_bound(phi[i], phi[j], every, diff) * diff
            lhs[i, m] = total
    return lhs, phi


def grouped_targets(model4: SwitchedModel, v1, v2) -> np.ndarray:
    """(v^g A_g) for the group g of each environment, shape (4, d)."""
    a1, a2 = pair_averages(model4)
    t1, t2 = np.asarray(v1) @ a1, np.asarray(v2) @ a2
    return np.array([t1, t1, t2, t2])


def default_group_directions(model4: SwitchedModel) -> tuple[np.ndarray, np.ndarray]:
    out = []
    for a in pair_averages(model4):
        cert = increasing_direction(a)
        if cert is None:
            raise ValueError("a pair average has no increasing direction")
        out.append(cert.v)
    return out[0], out[1]


def check_grouped_transience(model4: SwitchedModel, kappa: float, eps: float, v1=None, v2=None) -> DriftReport:
    if not is_grouped_rate_matrix(model4.q_matrix):
        raise ValueError("rate matrix is not of the grouped four-environment form")
    if v1 is None or v2 is None:
        v1, v2 = default_group_directions(model4)
    lhs, phi = grouped_leading(model4, kappa, eps, v1, v2)
    ok = bool(np.all(lhs > 0))
    return DriftReport("TransientDrift", ok, kappa, lhs, details={"eps": eps, "phi": phi.tolist()})


def grouped_scan(model4: SwitchedModel, kappas: Iterable[float], epss: Iterable[float], v1=None, v2=None) -> list[tuple[float, float, bool]]:
    """Pass/fail of the grouped inequality over a (kappa, eps) grid, rows ordered kappa-major."""
    if not is_grouped_rate_matrix(model4.q_matrix):
        raise ValueError("rate matrix is not of the grouped four-environment form")
    if v1 is None or v2 is None:
        v1, v2 = default_group_directions(model4)
    epss = list(epss)
    out = []
    for k in kappas:
        for e in epss:
            lhs, _ = grouped_leading(model4, k, e, v1, v2)
            out.append((float(k), float(e), bool(np.all(lhs > 0))))
    return out


# -- Foster-Lyapunov box check -------------------------------------------------


def box_states(d: int, radius: int) -> np.ndarray:
    count = (radius + 1) ** d
    if count > BOX_STATE_CAP:
        raise ValueError(f"box of radius {radius} in dimension {d} has {count} states, cap is {BOX_STATE_CAP}")
    axes = [np.arange(radius + 1, dtype=float)] * d
    return np.stack([g.ravel() for g in np.meshgrid(*axes, indexing="ij")], axis=1)


def verify_foster_lyapunov(model: SwitchedModel, kappa: float, h: LyapunovFn, box_radius: int) -> DriftReport:
    """Fit L V <= -c V + d on the box [0, R]^d.

    c is half the smallest decay ratio -LV/V on the outer face (max-norm R)
    and d is the largest LV + cV on the inner half box.  Violations are box
    states where the fitted inequality fails.
    """
    if h.form is Form.RECIPROCAL:
        raise ValueError("bounded functions have no finite sublevel sets")
    if h.form is Form.POWER and not (np.all(h.coeffs > 0) and h.exponent > 0):
        raise ValueError("power functions need positive scales and exponent")
    if h.form is Form.LINEAR and not np.all(h.coeffs > 0):
        raise ValueError("linear functions need positive coefficients")
    xs = box_states(model.n_species, box_radius)
    norm = xs.max(axis=1)
    outer = norm == box_radius
    inner = norm <= box_radius / 2
    vals = [h.values(xs, i) for i in range(model.n_env)]
    lvs = [generator_values(model, kappa, h, xs, i) for i in range(model.n_env)]
    ratios = np.concatenate([-lv[outer] / v[outer] for v, lv in zip(vals, lvs)])
    c = 0.5 * float(ratios.min()) if ratios.size else 0.0
    if c > 0:
        dconst = max(0.0, max(float((lv + c * v)[inner].max()) for v, lv in zip(vals, lvs)))
    else:
        dconst = max(0.0, max(float(lv[inner].max()) for lv in lvs))
    viol = []
    for i, (v, lv) in enumerate(zip(vals, lvs)):
        bad = lv > -c * v + dconst if c > 0 else (lv >= 0) & outer
        viol.extend((tuple(int(a) for a in xs[k]), i) for k in np.flatnonzero(bad))
    viol.sort()
    if h.form is Form.LINEAR:
        lead = linear_leading(model, kappa, h.coeffs)
    else:
        lead = power_leading(model, kappa, h.coeffs, h.exponent)
    ok = bool(np.all(lead < 0))
    return DriftReport("ErgodicDrift", ok, kappa, lead, c=c, dconst=dconst, sampled_violations=tuple(viol),
                       n_sampled=int(len(xs) * model.n_env), details={"box_radius": box_radius})


def generator_table(model: SwitchedModel, kappa: float, h: LyapunovFn, xs) -> list[tuple[tuple[int, ...], int, float]]:
    """(state, environment, L h) rows in state-major order, for CSV dumps."""
    xs = np.atleast_2d(np.asarray(xs, dtype=float))
    cols = [generator_values(model, kappa, h, xs, i) for i in range(model.n_env)]
    return [(tuple(int(a) for a in xs[k]), i, float(cols[i][k])) for k in range(len(xs)) for i in range(model.n_env)]


__all__ = [
    "Form", "LyapunovFn", "DriftReport", "KAPPA_GRID", "generator_apply", "generator_values", "generator_terms",
    "linear_leading", "power_leading", "build_fast_ergodic", "fast_ergodic_function", "build_slow_ergodic", "fast_ergodic_vectors",
    "fast_ergodic_condition", "slow_ergodic_condition", "check_fast_transience", "fast_transience_leading",
    "fast_transience_threshold", "check_slow_transience", "slow_transience_leading", "slow_transience_threshold",
    "check_grouped_transience", "grouped_leading", "grouped_targets", "grouped_scan", "is_grouped_rate_matrix",
    "pair_averages", "default_group_directions", "verify_foster_lyapunov", "box_states", "generator_table",
]
