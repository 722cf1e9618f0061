"""Built-in worked examples with their expected regime verdicts.

Matrices follow the linearization convention M[m][l] = sum over reactions
with source l of rate * (y'_m - y_m), so expected counts obey dx/dt = M x.
Some published displays of these examples are the transposes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Mapping

import numpy as np

from .classify import Conclusion, ConclusionKind, RegimeVerdict, UnknownReason
from .model import SwitchedModel, build_model

SYM2 = [[-1.0, 1.0], [1.0, -1.0]]


def grouped_q(eps: float) -> list[list[float]]:
    """Two pairs of environments, rate 1 inside a pair and eps across."""
    a = -(1 + 2 * eps)
    return [[a, 1, eps, eps], [1, a, eps, eps], [eps, eps, a, 1], [eps, eps, 1, a]]


def _rx(src: Mapping[str, int] | None, prod: Mapping[str, int] | None, rate: float):
    return (dict(src or {}), dict(prod or {}), float(rate))


def _scale(env, beta: float):
    return [(s, p, r * beta) for s, p, r in env]



# -- two-species building blocks ----------------------------------------------


def _ex41_envs(eps: float, a: str = "S1", b: str = "S2"):
    r1 = [
        _rx(None, {a: 1}, 1), _rx(None, {b: 1}, 1),
        _rx({a: 1}, None, 4 - eps), _rx({a: 1}, {b: 2}, eps),
        _rx({b: 1}, {b: 2}, 2), _rx({b: 1}, None, 1 + eps), _rx({b: 1}, {a: 2}, 1 - eps),
    ]
    r2 = [
        _rx(None, {a: 1}, 1), _rx(None, {b: 1}, 1),
        _rx({b: 1}, None, 4 - eps), _rx({b: 1}, {a: 2}, eps),
        _rx({a: 1}, {a: 2}, 2), _rx({a: 1}, None, 1 + eps), _rx({a: 1}, {b: 2}, 1 - eps),
    ]
    return r1, r2


def _ex43_envs(eps: float, a: str = "S1", b: str = "S2"):
    r1 = [
        _rx({a: 1}, None, 1 - eps), _rx(None, {a: 1}, 1), _rx({a: 1}, {b: 4}, eps),
        _rx({b: 1}, None, eps), _rx(None, {b: 1}, 1), _rx({b: 1}, {a: 4}, 1 - eps),
    ]
    r2 = [
        _rx({a: 1}, None, eps), _rx(None, {a: 1}, 1), _rx({a: 1}, {b: 4}, 1 - eps),
        _rx({b: 1}, None, 1 - eps), _rx(None, {b: 1}, 1), _rx({b: 1}, {a: 4}, eps),
    ]
    return r1, r2


def _ex54_envs(a: str = "S1", b: str = "S2"):
    inflow = [_rx(None, {a: 1}, 1), _rx(None, {b: 1}, 1)]

    def env(deg_a, deg_b, from_b, from_a):
        return inflow + [
            _rx({b: 1}, None, deg_b), _rx({b: 1}, {a: 1, b: 1}, from_b),
            _rx({a: 1}, None, deg_a), _rx({a: 1}, {a: 1, b: 1}, from_a),
        ]
    return [env(15, 1, 6, 2), env(15, 1, 2, 6), env(1, 15, 6, 2), env(1, 15, 2, 6)]


def _stable_envs(name: str, n: int):
    return [[_rx(None, {name: 1}, 1), _rx({name: 1}, None, 1)] for _ in range(n)]


# -- builders ----------------------------------------------------------------


def _check_unit(eps, name="eps"):
    if not 0 < eps < 1:
        raise ValueError(f"{name} must lie in (0, 1)")


def build_ex41(eps: float = 0.5) -> SwitchedModel:
    _check_unit(eps)
    return build_model(["S1", "S2"], _ex41_envs(eps), SYM2)


def build_ex42(eps: float = 0.5) -> SwitchedModel:
    _check_unit(eps)
    r1, r2 = _ex41_envs(eps)
    r1 = r1 + [_rx({"S1": 2}, {"S1": 1}, 1), _rx({"S1": 2}, {"S1": 3}, 1)]
    r2 = r2 + [_rx({"S2": 2}, {"S2": 1}, 1), _rx({"S2": 2}, {"S2": 3}, 1)]
    return build_model(["S1", "S2"], [r1, r2], SYM2)


def build_ex43(eps: float = 0.05) -> SwitchedModel:
    _check_unit(eps)
    return build_model(["S1", "S2"], _ex43_envs(eps), SYM2)


def build_fig1(eps: float = 0.01) -> SwitchedModel:
    return build_ex43(eps)


def build_ex44(n: int = 4, alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0) -> SwitchedModel:
    """One species Y in n+1 environments; environment i holds i-1 copies of the catalyst X."""
    if int(n) != n or n < 1:
        raise ValueError("n must be a positive integer")
    if min(alpha, beta, gamma) <= 0:
        raise ValueError("alpha, beta, gamma must be positive")
    n = int(n)
    envs = []
    for i in range(1, n + 2):
        env = [_rx(None, {"Y": 1}, gamma), _rx({"Y": 1}, None, beta)]
        if i > 1:
            env.append(_rx({"Y": 1}, {"Y": 2}, (i - 1) * alpha))
        envs.append(env)
    q = np.zeros((n + 1, n + 1))
    for k in range(n + 1):  # k = i - 1
        if k < n:
            q[k, k + 1] = n - k
        if k > 0:
            q[k, k - 1] = k
        q[k, k] = -q[k].sum()
    return build_model(["Y"], envs, q.tolist())


def build_ex44_crn(alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0, switch: float = 1.0) -> SwitchedModel:
    """The three-species single-environment form with X <-> X' at rate ``switch``."""
    if min(alpha, beta, gamma, switch) <= 0:
        raise ValueError("rates must be positive")
    env = [
        _rx({"X": 1}, {"X'": 1}, switch), _rx({"X'": 1}, {"X": 1}, switch),
        _rx({"X": 1, "Y": 1}, {"X": 1, "Y": 2}, alpha),
        _rx({"Y": 1}, None, beta), _rx(None, {"Y": 1}, gamma),
    ]
    return build_model(["X", "X'", "Y"], [env], [[0.0]])


def build_ex45() -> SwitchedModel:
    env = [_rx(None, {"X": 1}, 1), _rx({"X": 1}, None, 1), _rx({"Y": 1}, {"Y": 2}, 1)]
    return build_model(["X", "Y"], [env], [[0.0]])


def build_superlinear() -> SwitchedModel:
    env = [
        _rx(None, {"S": 1}, 1), _rx({"S": 1}, {"S": 2}, 1),
        _rx({"S": 3}, {"S": 2}, 1), _rx({"S": 3}, {"S": 4}, 1),
    ]
    return build_model(["S"], [env], [[0.0]])


def build_disjoint() -> SwitchedModel:
    r1 = [_rx(None, {"B": 1}, 1), _rx({"B": 1}, {"B": 2}, 1), _rx({"A": 1}, None, 2)]
    r2 = [_rx(None, {"A": 1}, 1), _rx({"A": 1}, {"A": 2}, 1), _rx({"B": 1}, None, 2)]
    return build_model(["A", "B"], [r1, r2], SYM2)


def build_ex47() -> SwitchedModel:
    r1 = [_rx(None, {"S": 1}, 1), _rx({"S": 1}, None, 1), _rx({"S": 1}, {"S": 2}, 2)]
    r2 = [_rx(None, {"S": 1}, 1), _rx({"S": 1}, None, 3), _rx({"S": 1}, {"S": 2}, 1)]
    return build_model(["S"], [r1, r2], SYM2)


def build_ex51(eps: float = 0.05, beta: float = 1.0) -> SwitchedModel:
    _check_unit(eps)
    if beta <= 0:
        raise ValueError("beta must be positive")
    a1, a2 = _ex41_envs(eps, "S1", "S2")
    b1, b2 = _ex43_envs(eps, "S3", "S4")
    return build_model(["S1", "S2", "S3", "S4"], [a1 + _scale(b1, beta), a2 + _scale(b2, beta)], SYM2)


def build_ex54(eps: float = 1e-4) -> SwitchedModel:
    if eps <= 0:
        raise ValueError("eps must be positive")
    return build_model(["S1", "S2"], _ex54_envs(), grouped_q(eps))


def build_ex62(alpha: float = 1.0) -> SwitchedModel:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    r1 = [
        _rx({"S1": 1}, {"S1": 4, "S2": 1}, 1), _rx({"S2": 1}, {"S1": 1}, 1),
        _rx({"S3": 1}, None, alpha), _rx(None, {"S3": 1}, 1),
    ]
    r2 = [
        _rx({"S1": 1}, None, alpha), _rx(None, {"S1": 1}, 1),
        _rx({"S2": 1}, {"S3": 1}, 1), _rx({"S3": 1}, {"S3": 4, "S2": 1}, 1),
    ]
    return build_model(["S1", "S2", "S3"], [r1, r2], SYM2)


# -- many phase transitions -----------------------------------------------------


@dataclass(frozen=True)
class PhasePlan:
    """Block scale factors and the ergodic windows they were chosen from."""

    betas: tuple[float, ...]  # beta_0 .. beta_{N+1}
    kappa_min: tuple[float, ...]  # per unscaled block; ergodic above
    kappa_max: tuple[float, ...]  # per unscaled block; ergodic below


def _block_envs(kind: str, eps: float, tag: str):
    """Four environments (grouped switching) for one block, on fresh species names."""
    if kind == "stable":
        name = f"U{tag}"
        return [name], _stable_envs(name, 4)
    a, b = f"P{tag}", f"R{tag}"
    if kind == "ex41":
        r1, r2 = _ex41_envs(0.5, a, b)
        return [a, b], [r1, r1, r2, r2]
    if kind == "ex43":
        r1, r2 = _ex43_envs(0.05, a, b)
        return [a, b], [r1, r1, r2, r2]
    if kind == "ex54":
        return [a, b], _ex54_envs(a, b)
    raise ValueError(kind)


def _block_windows(kind: str, eps: float) -> tuple[float, float]:
    """(kappa_min, kappa_max) from the drift module's sufficient thresholds."""
    from . import drift

    if kind == "stable":
        return 0.0, float("inf")
    species, envs = _block_envs(kind, eps, "0")
    model = build_model(species, envs, grouped_q(eps))
    kmin, kmax = 0.0, float("inf")
    if kind in ("ex41", "ex54"):
        _, k = drift.build_fast_ergodic(model)
        kmin = float("inf") if k is None else k
    if kind in ("ex43", "ex54"):
        _, k = drift.build_slow_ergodic(model)
        kmax = 0.0 if k is None else k
    return kmin, kmax


def phase_plan(n_windows: int, eps: float, small: str, large: str, betas=None, windows=None) -> PhasePlan:
    """Scale factors beta_0..beta_{N+1} for the stacked model.

    ``windows`` optionally replaces the drift thresholds of the middle blocks
    with other estimates, one (kappa_min, kappa_max) pair per block.
    """
    kinds = _kinds(n_windows, small, large)
    bounds = [_block_windows(k, eps) for k in kinds]
    if windows is not None:
        windows = [tuple(float(a) for a in w) for w in windows]
        if len(windows) != n_windows or any(not 0 < lo < hi for hi, lo in windows):
            raise ValueError("windows needs one (kappa_min, kappa_max) pair per middle block with kappa_max < kappa_min")
        bounds[1:-1] = windows
    kmin = tuple(b[0] for b in bounds)
    kmax = tuple(b[1] for b in bounds)
    if betas is None:
        out = [1.0]
        for j in range(1, len(kinds)):
            prev = out[-1] * kmin[j - 1]
            if not np.isfinite(kmax[j]):
                out.append(out[-1])  # ergodic for every kappa, any scale works
            elif prev == 0:
                out.append(1.0)
            else:
                out.append(2.0 * prev / kmax[j])  # beta_{j-1} kmin_{j-1} < beta_j kmax_j, doubled
        betas = tuple(out)
    else:
        betas = tuple(float(b) for b in betas)
        if len(betas) != len(kinds) or min(betas) <= 0:
            raise ValueError(f"betas needs {len(kinds)} positive entries")
    return PhasePlan(betas, kmin, kmax)


def _kinds(n_windows: int, small: str, large: str) -> list[str]:
    return [("ex41" if small == "evanescent" else "stable")] + ["ex54"] * int(n_windows) + [
        ("ex43" if large == "evanescent" else "stable")]


def build_ex56(n_windows: int = 2, eps: float = 1e-4, small: str = "ergodic", large: str = "ergodic",
               betas=None, windows=None) -> SwitchedModel:
    """Block-diagonal model with one transient window per middle block.

    ``small``/``large`` pick the behaviour for extreme kappa ("ergodic" or
    "evanescent").  Without explicit ``betas`` the scale factors follow the
    recursion beta_{j-1} kappa_min^{j-1} < beta_j kappa_max^j on the drift
    module's sufficient thresholds, with a factor 2 of slack.
    """
    if int(n_windows) != n_windows or n_windows < 1:
        raise ValueError("n_windows must be a positive integer")
    for label, val in (("small", small), ("large", large)):
        if val not in ("ergodic", "evanescent"):
            raise ValueError(f"{label} must be 'ergodic' or 'evanescent'")
    if eps <= 0:
        raise ValueError("eps must be positive")
    kinds = _kinds(n_windows, small, large)
    plan = phase_plan(int(n_windows), eps, small, large, betas, windows)
    species: list[str] = []
    envs: list[list] = [[], [], [], []]
    for j, kind in enumerate(kinds):
        names, block = _block_envs(kind, eps, str(j))
        species += names
        for i in range(4):
            envs[i] += _scale(block[i], plan.betas[j])
    return build_model(species, envs, grouped_q(eps))


# -- registry ----------------------------------------------------------------


@dataclass(frozen=True)
class Expect:
    kind: ConclusionKind
    support: tuple[int, ...] | None = None
    reason: UnknownReason | None = None

    def matches(self, c: Conclusion) -> bool:
        if c.kind is not self.kind:
            return False
        if self.support is not None and c.support != self.support:
            return False
        return self.reason is None or c.reason is self.reason

    def to_dict(self) -> dict:
        return {"conclusion": self.kind.value, "support": None if self.support is None else list(self.support),
                "reason": None if self.reason is None else self.reason.value}


@dataclass(frozen=True)
class ExpectedVerdict:
    fast: Expect
    slow: Expect
    note: str = ""

    def matches(self, v: RegimeVerdict) -> bool:
        return self.fast.matches(v.fast) and self.slow.matches(v.slow)

    def to_dict(self) -> dict:
        return {"fast": self.fast.to_dict(), "slow": self.slow.to_dict(), "note": self.note}


ERG = Expect(ConclusionKind.ERGODIC)


def _ev(*support):
    return Expect(ConclusionKind.EVANESCENT, tuple(support))


def _unk(reason):
    return Expect(ConclusionKind.UNKNOWN, reason=reason)


@dataclass(frozen=True)
class SimDefaults:
    x0: tuple[int, ...]
    kappas: tuple[float, ...]
    escape_norm: int = 1000
    t_max: float = 1000.0
    n_traj: int = 200
    i0: int = 0
    max_events: int = 10_000_000
    params: Mapping[str, object] = field(default_factory=dict)  # builder arguments used for simulation


@dataclass(frozen=True)
class GalleryEntry:
    id: str
    summary: str
    builder: Callable[..., SwitchedModel]
    params: Mapping[str, str] = field(default_factory=dict)  # name -> domain
    expected: Callable[..., ExpectedVerdict] | None = None
    sim: SimDefaults | None = None

    def build(self, **params) -> SwitchedModel:
        return self.builder(**params)


def _exp44(n: int = 4, alpha: float = 1.0, beta: float = 1.0, gamma: float = 1.0) -> ExpectedVerdict:
    crit = n * alpha - 2 * beta
    fast = ERG if crit < 0 else (_ev(0) if crit > 0 else _unk(UnknownReason.NEAR_CRITICAL))
    # Environment i has scalar (i-1) alpha - beta.
    scalars = [k * alpha - beta for k in range(n + 1)]
    if all(s < 0 for s in scalars):
        slow = ERG
    elif all(s > 0 for s in scalars):
        slow = _ev(0)
    elif any(s < 0 for s in scalars) and any(s > 0 for s in scalars):
        slow = _unk(UnknownReason.MIXED_STABILITY)
    else:
        slow = _unk(UnknownReason.NEAR_CRITICAL)
    return ExpectedVerdict(fast, slow, "fast regime flips at n alpha = 2 beta")


def _exp56(n_windows: int = 2, eps: float = 1e-4, small: str = "ergodic", large: str = "ergodic", betas=None, windows=None):
    d_small = 1 if small == "ergodic" else 2
    last = d_small + 2 * int(n_windows)
    fast = ERG if large == "ergodic" else _ev(last, last + 1)
    slow = ERG if small == "ergodic" else _ev(0, 1)
    return ExpectedVerdict(fast, slow, "ergodic/evanescent windows alternate in between")


def _exp62(alpha: float = 1.0) -> ExpectedVerdict:
    # The mixed matrix is [[a, 1/2, 0], [1/2, -1, 1/2], [0, 1/2, a]] with a = (3 - alpha)/2;
    # on the symmetric vectors (x, y, x) its Perron root is positive iff a > -1/2.
    crit = 4.0 - alpha
    fast = _ev(0, 1, 2) if crit > 0 else (ERG if crit < 0 else _unk(UnknownReason.NEAR_CRITICAL))
    return ExpectedVerdict(fast, _unk(UnknownReason.NO_COMMON_SUPPORT))


def _const(v: ExpectedVerdict):
    return lambda **_: v


# (kappa_min, kappa_max) for ex5.4 at eps = 1e-4 read off simulation: no escapes to
# norm 1000 at kappa <= 10 or >= 1000 over long horizons, most runs escape near 100.
# The drift thresholds (65536, 0.5) are sound but far too wide to simulate across.
EX54_ESCAPE_WINDOW = (1000.0, 10.0)

ENTRIES: dict[str, GalleryEntry] = {}


def _register(e: GalleryEntry) -> None:
    ENTRIES[e.id] = e


_register(GalleryEntry(
    "ex4.1", "two monomolecular environments; transient when switching is slow, ergodic when fast",
    build_ex41, {"eps": "(0, 1)"},
    _const(ExpectedVerdict(ERG, _ev(0, 1))),
    SimDefaults((1, 1), tuple(10.0 ** k for k in range(-3, 4))),
))
_register(GalleryEntry(
    "ex4.2", "ex4.1 plus cancelling bimolecular reactions; transience results do not apply",
    build_ex42, {"eps": "(0, 1)"},
    _const(ExpectedVerdict(ERG, _unk(UnknownReason.NOT_MONOMOLECULAR))),
    SimDefaults((1, 1), tuple(10.0 ** k for k in range(-3, 4))),
))
_register(GalleryEntry(
    "ex4.3", "two monomolecular environments; ergodic when switching is slow, transient when fast",
    build_ex43, {"eps": "(0, 1), expected verdict needs 1 - 16 eps + 16 eps^2 > 0"},
    _const(ExpectedVerdict(_ev(0, 1), ERG)),
    SimDefaults((1, 1), tuple(10.0 ** k for k in range(-3, 4))),
))
_register(GalleryEntry(
    "ex4.4", "catalyst-driven growth seen as one species in n+1 environments",
    build_ex44, {"n": "integer >= 1", "alpha": "> 0", "beta": "> 0", "gamma": "> 0"},
    _exp44,
    SimDefaults((1,), tuple(10.0 ** k for k in range(-2, 3))),
))
_register(GalleryEntry(
    "ex4.4_crn", "catalyst network in its original three-species single-environment form",
    build_ex44_crn, {"alpha": "> 0", "beta": "> 0", "gamma": "> 0", "switch": "> 0"},
    _const(ExpectedVerdict(_unk(UnknownReason.NONLINEAR_GENERATOR), _unk(UnknownReason.NONLINEAR_GENERATOR))),
))
_register(GalleryEntry(
    "ex4.5", "one environment with no strictly positive growth direction; transient once Y > 0",
    build_ex45, {},
    _const(ExpectedVerdict(_ev(1), _ev(1))),
    SimDefaults((1, 1), (1.0,)),
))
_register(GalleryEntry(
    "ex_superlinear", "linear net drift with an unstable matrix, yet positive recurrent",
    build_superlinear, {},
    _const(ExpectedVerdict(_unk(UnknownReason.NOT_MONOMOLECULAR), _unk(UnknownReason.NOT_MONOMOLECULAR),
                           "positive recurrent by a logarithmic Lyapunov function")),
    SimDefaults((1,), (1.0,)),
))
_register(GalleryEntry(
    "ex_disjoint", "unstable directions on disjoint species; positive recurrent for every kappa",
    build_disjoint, {},
    _const(ExpectedVerdict(ERG, _unk(UnknownReason.NO_COMMON_SUPPORT),
                           "positive recurrent for any choice of kappa by a bespoke argument")),
    SimDefaults((1, 1), tuple(10.0 ** k for k in range(-3, 4))),
))
_register(GalleryEntry(
    "ex4.7", "one stable and one unstable environment; ergodic for every kappa",
    build_ex47, {},
    _const(ExpectedVerdict(ERG, _unk(UnknownReason.MIXED_STABILITY),
                           "ergodic for all kappa via h = 90 x^(kappa/3), 57 x^(kappa/3)")),
    SimDefaults((1,), tuple(10.0 ** k for k in range(-3, 4))),
))
_register(GalleryEntry(
    "ex5.1", "ex4.1 and a rescaled ex4.3 side by side; transient at both extremes",
    build_ex51, {"eps": "(0, 1)", "beta": "> 0"},
    _const(ExpectedVerdict(_ev(2, 3), _ev(0, 1))),
    SimDefaults((1, 1, 1, 1), tuple(10.0 ** k for k in range(-3, 4))),
))
_register(GalleryEntry(
    "ex5.4", "four environments in two pairs; ergodic at both extremes, transient in between",
    build_ex54, {"eps": "> 0 (cross-pair rate)"},
    _const(ExpectedVerdict(ERG, ERG, "transient window near kappa ~ 1e2 for eps = 1e-4")),
    SimDefaults((20, 80), (0.1, 1.0, 10.0, 30.0, 100.0, 300.0, 3000.0), t_max=200.0),
))
_register(GalleryEntry(
    "ex5.6", "scaled copies of ex5.4 stacked to give several phase transitions",
    build_ex56, {"n_windows": "integer >= 1", "eps": "> 0", "small": "ergodic|evanescent",
                 "large": "ergodic|evanescent", "betas": "optional N+2 positive scale factors"},
    _exp56,
    SimDefaults((1, 50, 200, 1, 1, 1), (1.0, 100.0, 2000.0, 2e4, 4e5), t_max=60.0, n_traj=20,
                max_events=100_000_000, params={"windows": (EX54_ESCAPE_WINDOW, EX54_ESCAPE_WINDOW)}),
))
_register(GalleryEntry(
    "ex6.2", "increasing directions with overlapping but unequal supports; slow regime open",
    build_ex62, {"alpha": "> 0; the fast verdict turns ergodic above alpha = 4"},
    _exp62,
    SimDefaults((1, 1, 1), tuple(10.0 ** k for k in range(-2, 3))),
))
_register(GalleryEntry(
    "fig1", "the introductory two-environment network (ex4.3 with eps = 0.01)",
    build_fig1, {"eps": "(0, 1)"},
    _const(ExpectedVerdict(_ev(0, 1), ERG)),
    SimDefaults((1, 1), tuple(10.0 ** k for k in range(-3, 4))),
))


def get(entry_id: str) -> GalleryEntry:
    try:
        return ENTRIES[entry_id]
    except KeyError:
        raise KeyError(f"unknown gallery id {entry_id!r}; known: {', '.join(ENTRIES)}") from None


def build(entry_id: str, **params) -> SwitchedModel:
    return get(entry_id).build(**params)


def expected_verdict(entry_id: str, **params) -> ExpectedVerdict:
    e = get(entry_id)
    if e.expected is None:
        raise KeyError(f"{entry_id} has no expected verdict")
    return e.expected(**params)


def entries() -> list[GalleryEntry]:
    return list(ENTRIES.values())


__all__ = [
    "GalleryEntry", "Expect", "ExpectedVerdict", "SimDefaults", "PhasePlan", "ENTRIES", "get", "build",
    "expected_verdict", "entries", "grouped_q", "phase_plan", "EX54_ESCAPE_WINDOW",
]
