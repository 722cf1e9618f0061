"""Exact simulation of the switched chain and escape-fraction sweeps.

The kernel is the direct method: at each step the total rate is the sum of
the reaction propensities in the current environment plus the environment
leaving rate kappa * sum_{j != i} q_ij, the holding time is exponential, and
one uniform picks the event.  It runs under numba with the GIL released, so
trajectories can be spread over threads.

Each trajectory gets its own PCG64 stream seeded from the integer triple
(master seed, kappa index, trajectory index) through numpy's SeedSequence,
so results do not depend on scheduling or thread count.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from statistics import NormalDist
from typing import Sequence

import numpy as np
from numba import njit

from .model import SwitchedModel

TIME, ESCAPE, CAPPED, ABSORBING, BUFFER_FULL = 0, 1, 2, 3, 4
STATUS_NAMES = {TIME: "time", ESCAPE: "escape", CAPPED: "capped", ABSORBING: "absorbing"}
WILSON_Z = NormalDist().inv_cdf(0.975)
CSV_HEADER = "kappa,escape_fraction,wilson_low,wilson_high,mean_final_l1,n_traj,n_event_capped"


@dataclass(frozen=True)
class SimConfig:
    kappa: float
    x0: tuple[int, ...]
    i0: int = 0
    t_max: float = 1000.0
    escape_norm: int = 1000
    max_events: int = 10_000_000
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "x0", tuple(int(a) for a in self.x0))
        if not self.kappa > 0:
            raise ValueError("kappa must be positive")
        if any(a < 0 for a in self.x0):
            raise ValueError("initial state must be non-negative")
        if not self.t_max > 0 or self.escape_norm <= 0 or self.max_events <= 0:
            raise ValueError("t_max, escape_norm and max_events must be positive")


@dataclass(frozen=True, eq=False)
class Trajectory:
    status: str
    final_time: float
    final_state: np.ndarray
    final_env: int
    n_events: int
    times: np.ndarray | None = None
    states: np.ndarray | None = None
    envs: np.ndarray | None = None

    def rows(self):
        """(t, x_1..x_d, env) per recorded event, environments 1-based."""
        for t, x, e in zip(self.times, self.states, self.envs):
            yield (float(t), *(int(a) for a in x), int(e) + 1)


@dataclass(frozen=True)
class SweepRow:
    kappa: float
    escape_fraction: float
    wilson_low: float
    wilson_high: float
    mean_final_l1: float
    n_traj: int
    n_event_capped: int


@dataclass(frozen=True)
class SweepResult:
    rows: tuple[SweepRow, ...]

    def to_csv(self) -> str:
        lines = [CSV_HEADER]
        for r in self.rows:
            lines.append(",".join([
                repr(float(r.kappa)), repr(float(r.escape_fraction)), repr(float(r.wilson_low)),
                repr(float(r.wilson_high)), repr(float(r.mean_final_l1)), str(r.n_traj), str(r.n_event_capped),
            ]))
        return "\n".join(lines) + "\n"


# -- compiled model ------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CompiledModel:
    rates: np.ndarray  # (n, R)
    src_idx: np.ndarray  # (n, R, K)
    src_cnt: np.ndarray  # (n, R, K)
    n_src: np.ndarray  # (n, R)
    changes: np.ndarray  # (n, R, d)
    n_rx: np.ndarray  # (n,)
    q_off: np.ndarray  # (n, n) off-diagonal base rates, zero diagonal


def compile_model(model: SwitchedModel) -> CompiledModel:
    n, d = model.n_env, model.n_species
    r_max = max(1, max(len(e.reactions) for e in model.environments))
    k_max = max(1, max((len(r.source.terms) for e in model.environments for r in e.reactions), default=1))
    rates = np.zeros((n, r_max))
    src_idx = np.zeros((n, r_max, k_max), dtype=np.int64)
    src_cnt = np.zeros((n, r_max, k_max), dtype=np.int64)
    n_src = np.zeros((n, r_max), dtype=np.int64)
    changes = np.zeros((n, r_max, d), dtype=np.int64)
    n_rx = np.zeros(n, dtype=np.int64)
    for i, env in enumerate(model.environments):
        n_rx[i] = len(env.reactions)
        for k, r in enumerate(env.reactions):
            rates[i, k] = r.rate
            n_src[i, k] = len(r.source.terms)
            for t, (idx, cnt) in enumerate(r.source.terms):
                src_idx[i, k, t] = idx
                src_cnt[i, k, t] = cnt
            changes[i, k] = r.change(d)
    q_off = model.q_matrix.copy()
    np.fill_diagonal(q_off, 0.0)
    return CompiledModel(rates, src_idx, src_cnt, n_src, changes, n_rx, q_off)


@njit(nogil=True, cache=True)
def _propensity(x, rate, idx, cnt, ns):
    lam = rate
    for t in range(ns):
        xm = x[idx[t]]
        c = cnt[t]
        if xm < c:
            return 0.0
        for s in range(c):
            lam *= xm - s
    return lam


@njit(nogil=True, cache=True)
def _ssa(rng, x, env, t, events, kappa, t_max, escape_norm, max_events,
         rates, src_idx, src_cnt, n_src, changes, n_rx, q_off,
         rec_t, rec_x, rec_e, rec_start):
    """Advance (x, env, t) in place until a stopping rule fires.

    Returns (status, env, t, events, n_recorded).  With a non-empty record
    buffer the state after each event is written; BUFFER_FULL hands control
    back so the caller can drain the buffer and resume.
    """
    d = x.shape[0]
    n = q_off.shape[0]
    cap = rec_t.shape[0]
    nrec = rec_start
    lam = np.empty(rates.shape[1])
    while True:
        norm = 0
        for m in range(d):
            norm += x[m]
        if norm >= escape_norm:
            return ESCAPE, env, t, events, nrec
        if events >= max_events:
            return CAPPED, env, t, events, nrec
        if cap > 0 and nrec >= cap:
            return BUFFER_FULL, env, t, events, nrec
        total = 0.0
        r = n_rx[env]
        for k in range(r):
            a = _propensity(x, rates[env, k], src_idx[env, k], src_cnt[env, k], n_src[env, k])
            lam[k] = a
            total += a
        leave = 0.0
        for j in range(n):
            leave += q_off[env, j]
        leave *= kappa
        total += leave
        if total <= 0.0:
            return ABSORBING, env, t, events, nrec
        tau = -math.log(1.0 - rng.random()) / total
        if t + tau >= t_max:
            return TIME, env, t_max, events, nrec
        t += tau
        u = rng.random() * total
        acc = 0.0
        chosen = -1
        for k in range(r):
            acc += lam[k]
            if u < acc:
                chosen = k
                break
        if chosen >= 0:
            for m in range(d):
                x[m] += changes[env, chosen, m]
        else:
            # environment jump, chosen proportionally to kappa q_ij
            u2 = u - acc
            acc2 = 0.0
            nxt = -1
            for j in range(n):
                w = kappa * q_off[env, j]
                if w > 0.0:
                    nxt = j
                    acc2 += w
                    if u2 < acc2:
                        break
            env = nxt
        events += 1
        if cap > 0:
            rec_t[nrec] = t
            for m in range(d):
                rec_x[nrec, m] = x[m]
            rec_e[nrec] = env
            nrec += 1


def make_rng(seed: int, kappa_index: int = 0, traj_index: int = 0) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([int(seed) & (2**64 - 1), kappa_index, traj_index])))


def _run(cm: CompiledModel, cfg: SimConfig, rng, record: bool, chunk: int = 65536) -> Trajectory:
    x = np.array(cfg.x0, dtype=np.int64)
    d = x.shape[0]
    if d != cm.changes.shape[2]:
        raise ValueError("initial state has the wrong dimension")
    if not 0 <= cfg.i0 < cm.n_rx.shape[0]:
        raise ValueError("initial environment out of range")
    env, t, events = cfg.i0, 0.0, 0
    args = (cfg.kappa, cfg.t_max, cfg.escape_norm, cfg.max_events, cm.rates, cm.src_idx, cm.src_cnt, cm.n_src,
            cm.changes, cm.n_rx, cm.q_off)
    if not record:
        empty_t = np.empty(0)
        empty_x = np.empty((0, d), dtype=np.int64)
        empty_e = np.empty(0, dtype=np.int64)
        status, env, t, events, _ = _ssa(rng, x, env, t, events, *args, empty_t, empty_x, empty_e, 0)
        return Trajectory(STATUS_NAMES[status], t, x, env, events)
    parts_t, parts_x, parts_e = [np.array([0.0])], [x.copy()[None, :]], [np.array([env], dtype=np.int64)]
    while True:
        rec_t = np.empty(chunk)
        rec_x = np.empty((chunk, d), dtype=np.int64)
        rec_e = np.empty(chunk, dtype=np.int64)
        status, env, t, events, nrec = _ssa(rng, x, env, t, events, *args, rec_t, rec_x, rec_e, 0)
        parts_t.append(rec_t[:nrec])
        parts_x.append(rec_x[:nrec])
        parts_e.append(rec_e[:nrec])
        if status != BUFFER_FULL:
            break
    return Trajectory(STATUS_NAMES[status], t, x, env, events,
                      np.concatenate(parts_t), np.concatenate(parts_x), np.concatenate(parts_e))


def simulate(model: SwitchedModel, config: SimConfig, record: bool = True, traj_index: int = 0,
             kappa_index: int = 0) -> Trajectory:
    """One trajectory; the stream is make_rng(config.seed, kappa_index, traj_index)."""
    return _run(compile_model(model), config, make_rng(config.seed, kappa_index, traj_index), record)


# -- escape statistics ---------------------------------------------------------


def wilson_interval(k: int, n: int, z: float = WILSON_Z) -> tuple[float, float]:
    if n == 0:
        return 0.0, 1.0
    p = k / n
    den = 1 + z * z / n
    centre = (p + z * z / (2 * n)) / den
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / den
    lo = 0.0 if k == 0 else max(0.0, centre - half)
    hi = 1.0 if k == n else min(1.0, centre + half)
    return lo, hi


def _default_threads(threads: int | None) -> int:
    if threads is None:
        return max(1, os.cpu_count() or 1)
    if threads < 1:
        raise ValueError("threads must be at least 1")
    return threads


def _run_cells(cm: CompiledModel, configs: Sequence[SimConfig], n_traj: int, threads: int):
    """Final (status, l1 norm) for every (config index, trajectory index), in order."""
    def job(cell):
        ci, tj = cell
        cfg = configs[ci]
        tr = _run(cm, cfg, make_rng(cfg.seed, ci, tj), record=False)
        return tr.status, int(tr.final_state.sum())

    cells = [(ci, tj) for ci in range(len(configs)) for tj in range(n_traj)]
    if threads == 1 or len(cells) <= 1:
        results = [job(c) for c in cells]
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, cells, chunksize=max(1, len(cells) // (8 * threads))))
    return [results[ci * n_traj:(ci + 1) * n_traj] for ci in range(len(configs))]


def _row(kappa: float, outcomes) -> SweepRow:
    n = len(outcomes)
    capped = sum(1 for s, _ in outcomes if s == "capped")
    esc = sum(1 for s, _ in outcomes if s == "escape")
    denom = n - capped
    frac = esc / denom if denom else float("nan")
    lo, hi = wilson_interval(esc, denom)
    mean_l1 = sum(l1 for _, l1 in outcomes) / n if n else float("nan")
    return SweepRow(float(kappa), frac, lo, hi, mean_l1, n, capped)


def escape_fraction(model: SwitchedModel, config: SimConfig, n_traj: int = 200, threads: int | None = None):
    """(fraction, (low, high)) over n_traj trajectories; event-capped runs leave the denominator."""
    if n_traj < 1:
        raise ValueError("n_traj must be positive")
    outcomes = _run_cells(compile_model(model), [config], n_traj, _default_threads(threads))[0]
    row = _row(config.kappa, outcomes)
    return row.escape_fraction, (row.wilson_low, row.wilson_high)


def sweep_kappa(model: SwitchedModel, kappa_grid: Sequence[float], base_config: SimConfig, n_traj: int = 200,
                threads: int | None = None) -> SweepResult:
    """Escape fraction per kappa; trajectory t at grid index k uses stream (seed, k, t)."""
    grid = [float(k) for k in kappa_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise ValueError("kappa grid must be sorted ascending")
    if not grid:
        return SweepResult(())
    configs = [replace(base_config, kappa=k) for k in grid]
    per = _run_cells(compile_model(model), configs, n_traj, _default_threads(threads))
    return SweepResult(tuple(_row(k, out) for k, out in zip(grid, per)))


def parse_grid(spec: str) -> list[float]:
    """'log:lo:hi:count', 'lin:lo:hi:count', or a comma-separated list."""
    if spec.startswith(("log:", "lin:")):
        kind, lo, hi, count = spec.split(":")
        lo, hi, count = float(lo), float(hi), int(count)
        if count < 1 or lo <= 0 and kind == "log" or hi < lo:
            raise ValueError(f"bad grid {spec!r}")
        if count == 1:
            return [lo]
        if kind == "log":
            return [float(v) for v in np.logspace(math.log10(lo), math.log10(hi), count)]
        return [float(v) for v in np.linspace(lo, hi, count)]
    if not spec.strip():
        return []
    return sorted(float(v) for v in spec.split(","))


__all__ = [
    "SimConfig", "Trajectory", "SweepRow", "SweepResult", "simulate", "escape_fraction", "sweep_kappa",
    "wilson_interval", "make_rng", "compile_model", "parse_grid", "CSV_HEADER",
]
