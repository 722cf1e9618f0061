"""End-to-end acceptance checks, one marker per criterion.

The terminal summary prints a PASS or FAIL line for every criterion; a
criterion with several parts passes only if all of them do.
"""

import math
import time
from fractions import Fraction
from math import comb

import numpy as np
import pytest

from switchcrn import gallery
from switchcrn import drift
from switchcrn.classify import ConclusionKind, UnknownReason, classify, classify_fast, common_unstable_support
from switchcrn.drift import LyapunovFn
from switchcrn.metzler import (
    TOL,
    block_roots,
    decreasing_direction,
    increasing_direction,
    principal_submatrix,
    spectral_abscissa,
    unstable_support_vector,
    verify_certificate,
)
from switchcrn.mixing import identity_residual, mix, solve_z_system, stationary_distribution
from switchcrn.sim import SimConfig, sweep_kappa

ERG, EVA, UNK = ConclusionKind.ERGODIC, ConclusionKind.EVANESCENT, ConclusionKind.UNKNOWN


def criterion(num, label):
    return pytest.mark.criterion(num, label)


def random_q(rng, n):
    q = rng.uniform(0.1, 3, size=(n, n)) * (rng.random((n, n)) < 0.7)
    for i in range(n):
        q[i, (i + 1) % n] = max(q[i, (i + 1) % n], 0.2)
    np.fill_diagonal(q, 0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return q


def random_metzler(rng, d, density=1.0):
    a = rng.uniform(-3, 3, size=(d, d))
    off = ~np.eye(d, dtype=bool)
    a[off] = np.abs(a[off]) * (rng.random((d, d))[off] < density)
    return a


# -- 1 ------------------------------------------------------------------------


@criterion(1, "gallery verdict table")
def test_gallery_verdict_table():
    start = time.perf_counter()
    for eps in (0.1, 0.5, 0.9):
        v = classify(gallery.build("ex4.1", eps=eps))
        assert v.fast.kind is ERG
        assert v.slow.kind is EVA and v.slow.support == (0, 1)

    m42 = gallery.build("ex4.2", eps=0.5)
    v = classify(m42)
    assert v.fast.kind is ERG
    assert v.slow.kind is UNK and v.slow.reason is UnknownReason.NOT_MONOMOLECULAR
    with pytest.raises(ValueError, match="monomolecular"):
        drift.check_fast_transience(m42, 1.0, [1.0, 1.0], sample=False)
    with pytest.raises(ValueError, match="monomolecular"):
        drift.check_slow_transience(m42, 1.0, (0, 1), [[1.0, 1.0], [1.0, 1.0]], sample=False)

    v = classify(gallery.build("ex4.3", eps=0.05))
    assert v.slow.kind is ERG
    assert v.fast.kind is EVA and v.fast.support == (0, 1)

    # species order (X, Y): evanescent states are those with Y > 0
    v = classify(gallery.build("ex4.5"))
    assert v.fast.kind is EVA and v.fast.support == (1,)
    assert v.slow.kind is EVA and v.slow.support == (1,)

    v = classify(gallery.build("ex_disjoint"))
    assert v.slow.kind is UNK and v.slow.reason is UnknownReason.NO_COMMON_SUPPORT

    v = classify(gallery.build("ex4.7"))
    assert v.fast.kind is ERG
    assert v.slow.kind is UNK and v.slow.reason is UnknownReason.MIXED_STABILITY

    v = classify(gallery.build("ex6.2"))
    assert v.slow.kind is UNK and v.slow.reason is UnknownReason.NO_COMMON_SUPPORT
    assert time.perf_counter() - start < 1.0


# -- 2 ------------------------------------------------------------------------


@criterion(2, "spectral arithmetic")
def test_spectral_ex41():
    for eps in (0.1, 0.25, 0.5, 0.9):
        lds, _ = mix(gallery.build("ex4.1", eps=eps))
        want = -2 + 2 * math.sqrt(1 + eps - eps * eps)
        assert abs(spectral_abscissa(lds[0].matrix) - want) <= 1e-9


@criterion(2, "spectral arithmetic")
def test_spectral_ex43_mixed():
    _, md = mix(gallery.build("ex4.3", eps=0.05))
    assert abs(spectral_abscissa(md.mixed_matrix) - 1) <= 1e-9
    cert = unstable_support_vector(md.mixed_matrix)
    v = cert.v / np.linalg.norm(cert.v)
    assert np.abs(v - np.array([1, 1]) / math.sqrt(2)).max() <= 1e-9


# -- 3 ------------------------------------------------------------------------


@criterion(3, "mixing of the catalyst example")
def test_binomial_weights():
    for n in range(1, 11):
        w = stationary_distribution(gallery.build("ex4.4", n=n).q_matrix)
        want = np.array([comb(n, i) for i in range(n + 1)]) / 2**n
        assert np.abs(w - want).max() <= 1e-12


@criterion(3, "mixing of the catalyst example")
def test_mixed_scalar_exact():
    # dyadic inputs are exact binary floats, so exact equality is meaningful
    for n in range(1, 11):
        for alpha, beta in ((Fraction(3, 4), Fraction(5, 8)), (Fraction(1, 16), Fraction(9, 2)), (Fraction(7, 2), Fraction(1, 1))):
            _, md = mix(gallery.build("ex4.4", n=n, alpha=float(alpha), beta=float(beta)))
            assert Fraction(md.mixed_matrix[0, 0]) == n * alpha / 2 - beta


@criterion(3, "mixing of the catalyst example")
def test_fast_verdict_flips_at_critical_ratio():
    for n in range(1, 11):
        beta = Fraction(n, 8)  # critical alpha = 2 beta / n = 1/4
        for delta in (Fraction(-1, 8), Fraction(-1, 64), Fraction(-1, 4096), Fraction(0), Fraction(1, 4096),
                      Fraction(1, 64), Fraction(1, 8)):
            alpha = Fraction(1, 4) + delta
            v = classify_fast(gallery.build("ex4.4", n=n, alpha=float(alpha), beta=float(beta)))
            sign = n * alpha - 2 * beta
            if sign < 0:
                assert v.kind is ERG
            elif sign > 0:
                assert v.kind is EVA and v.support == (0,)
            else:
                assert v.kind is UNK and v.reason is UnknownReason.NEAR_CRITICAL


# -- 4 ------------------------------------------------------------------------


@criterion(4, "z-vector identity")
def test_z_identity_residual():
    rng = np.random.default_rng(404)
    for _ in range(100):
        n, d = int(rng.integers(2, 7)), int(rng.integers(1, 5))
        q = random_q(rng, n)
        w = stationary_distribution(q)
        mats = [random_metzler(rng, d) for _ in range(n)]
        v = rng.uniform(0.1, 2, size=d)
        zv = solve_z_system(q, w, mats, v)
        assert np.abs(identity_residual(q, w, mats, v, zv)).max() <= 1e-10


@criterion(4, "z-vector identity")
def test_two_state_literal_closed_form():
    # 2 w1 w2 z^m_i = w_i (v M_i)_m up to a shift in i, on random two-state Q
    rng = np.random.default_rng(405)
    worst = 0.0
    for _ in range(100):
        q = random_q(rng, 2)
        w = stationary_distribution(q)
        d = int(rng.integers(1, 5))
        mats = [random_metzler(rng, d) for _ in range(2)]
        v = rng.uniform(0.1, 2, size=d)
        zv = solve_z_system(q, w, mats, v)
        lit = np.stack([w[i] * (v @ mats[i]) for i in range(2)], axis=1)
        diff = 2 * w[0] * w[1] * zv.z - lit
        worst = max(worst, float(np.abs(diff - diff[:, :1]).max()))
    assert worst <= 1e-10, f"largest deviation from the shifted relation: {worst:.3g}"


# -- 5 ------------------------------------------------------------------------


def _disjoint_h(kappa):
    k = 1 + 2 / kappa
    return LyapunovFn.linear([[1, k], [k, 1]])


@criterion(5, "exact generator formulas")
def test_disjoint_displayed_formula():
    m = gallery.build("ex_disjoint")
    bad = []
    for kappa in (0.1, 1.0, 10.0):
        h = _disjoint_h(kappa)
        for a in range(51):
            for b in range(51):
                want = -4 / kappa * a - b + 1
                got = drift.generator_apply(m, kappa, h, [a, b], 0)
                if abs(got - want) > 1e-12 * max(1.0, abs(want)):
                    bad.append((kappa, a, b, got, want))
    assert not bad, f"{len(bad)} of {3 * 51 * 51} states differ, first {bad[0]}"


@criterion(5, "exact generator formulas")
def test_reciprocal_negative_for_large_x1():
    m = gallery.build("ex6.2")
    h = LyapunovFn.reciprocal([[2, 1, 0], [0, 1, 2]])
    xs = np.zeros((100_000, 3))
    xs[:, 0] = np.arange(1, 100_001)
    for kappa in (0.1, 1.0, 10.0):
        vals = drift.generator_values(m, kappa, h, xs, 0)
        neg = np.flatnonzero(vals < 0)
        assert neg.size > 0
        # and it stays negative from there on
        assert np.all(vals[neg[0]:] < 0)


# -- 6 ------------------------------------------------------------------------


@criterion(6, "Metzler equivalence property suite")
def test_metzler_equivalences():
    start = time.perf_counter()
    rng = np.random.default_rng(606)
    for _ in range(1000):
        d = int(rng.integers(1, 6))
        a = random_metzler(rng, d, density=0.6)
        r = spectral_abscissa(a)
        dec, inc, uns = decreasing_direction(a), increasing_direction(a), unstable_support_vector(a)
        assert (dec is not None) == (r < -TOL)
        assert (uns is not None) == (r > TOL)
        assert (inc is not None) == all(p.root > TOL for _, p in block_roots(a))
        for c in (dec, inc, uns):
            if c is not None:
                assert verify_certificate(c, a) and c.margin > 0
        for mask in range(1, 2**d - 1):
            idx = [k for k in range(d) if mask >> k & 1]
            assert spectral_abscissa(principal_submatrix(a, idx)) <= r + 1e-9
    assert time.perf_counter() - start < 30


# -- 7 ------------------------------------------------------------------------

SPAN = 2.0**10


@criterion(7, "drift thresholds")
def test_fast_ergodic_threshold():
    m = gallery.build("ex4.1", eps=0.25)
    h, k = drift.build_fast_ergodic(m)
    assert k is not None and 0 < k < np.inf
    v = decreasing_direction(mix(m)[1].mixed_matrix).v
    u = drift.fast_ergodic_vectors(m, v)
    assert np.all(drift.fast_ergodic_condition(m, v, u, k) < 0)
    assert not np.all(drift.fast_ergodic_condition(m, v, u, k / SPAN) < 0)


@criterion(7, "drift thresholds")
def test_slow_ergodic_threshold():
    m = gallery.build("ex4.3", eps=0.05)
    h, k = drift.build_slow_ergodic(m)
    assert k is not None and 0 < k < np.inf
    assert np.all(drift.slow_ergodic_condition(m, h.coeffs, k) < 0)
    assert not np.all(drift.slow_ergodic_condition(m, h.coeffs, k * SPAN) < 0)


@criterion(7, "drift thresholds")
def test_fast_transience_threshold():
    m = gallery.build("ex4.3", eps=0.05)
    v = classify_fast(m).certificates[0].v
    k = drift.fast_transience_threshold(m, v)
    assert k is not None and 0 < k < np.inf
    assert drift.check_fast_transience(m, k, v, sample=False).algebraic_pass
    assert not drift.check_fast_transience(m, k / SPAN, v, sample=False).algebraic_pass


@criterion(7, "drift thresholds")
def test_slow_transience_threshold():
    m = gallery.build("ex4.1", eps=0.25)
    support, certs = common_unstable_support(m)
    vs = np.array([c.v for c in certs])
    k = drift.slow_transience_threshold(m, support, vs)
    assert k is not None and 0 < k < np.inf
    assert drift.check_slow_transience(m, k, support, vs, sample=False).algebraic_pass
    assert not drift.check_slow_transience(m, k * SPAN, support, vs, sample=False).algebraic_pass


# -- 8 ------------------------------------------------------------------------


def _fractions(model, kappas, cfg, n_traj):
    res = sweep_kappa(model, kappas, cfg, n_traj=n_traj)
    assert all(r.n_event_capped == 0 for r in res.rows)
    return [r.escape_fraction for r in res.rows]


def _entry_sweep(entry_id):
    e = gallery.get(entry_id)
    sd = e.sim
    cfg = SimConfig(1.0, sd.x0, sd.i0, sd.t_max, sd.escape_norm, sd.max_events, seed=0)
    return list(sd.kappas), _fractions(e.build(**sd.params), sd.kappas, cfg, sd.n_traj)


@criterion(8, "empirical phase transitions")
def test_ex43_escape_profile():
    lo, hi = _fractions(gallery.build("ex4.3", eps=0.05), [1e-2, 1e3], SimConfig(1.0, (1, 1), escape_norm=1000), 200)
    assert lo <= 0.05 and hi >= 0.95


@criterion(8, "empirical phase transitions")
def test_ex41_mirror_profile():
    lo, hi = _fractions(gallery.build("ex4.1", eps=0.5), [1e-2, 1e3], SimConfig(1.0, (1, 1), escape_norm=1000), 200)
    assert lo >= 0.95 and hi <= 0.05


@criterion(8, "empirical phase transitions")
def test_ex54_low_high_low():
    kappas, fr = _entry_sweep("ex5.4")
    assert fr[0] <= 0.1 and fr[-1] <= 0.1
    assert max(fr[1:-1]) >= 0.5


def _high_windows(fr, high=0.5):
    runs, inside = 0, False
    for f in fr[1:-1]:
        if f >= high and not inside:
            runs += 1
        inside = f >= high
    return runs


@criterion(8, "empirical phase transitions")
def test_ex56_two_windows():
    kappas, fr = _entry_sweep("ex5.6")
    assert gallery.get("ex5.6").sim.params["windows"] and len(kappas) >= 5
    assert fr[0] <= 0.1 and fr[-1] <= 0.1
    assert _high_windows(fr) >= 2, f"fractions {fr}"


# -- 9 ------------------------------------------------------------------------


@criterion(9, "grouped transience certificate")
def test_grouped_scan_region():
    m = gallery.build("ex5.4")
    scan = drift.grouped_scan(m, [2.0**k for k in range(21)], [2.0**-k for k in range(21)])
    assert any(ok for _, _, ok in scan)


@criterion(9, "grouped transience certificate")
def test_grouped_eps_zero_limit():
    m = gallery.build("ex5.4")
    a1, a2 = drift.pair_averages(m)
    assert np.linalg.det(a1) < 0 and np.linalg.det(a2) < 0
    v1, v2 = drift.default_group_directions(m)
    target = drift.grouped_targets(m, v1, v2)
    errs = [np.abs(drift.grouped_leading(m, 2.0**k, 0.0, v1, v2)[0] - target).max() for k in (10, 20, 30, 40)]
    assert all(b < a for a, b in zip(errs, errs[1:]))
    assert errs[-1] <= 1e-6 * np.abs(target).max()
