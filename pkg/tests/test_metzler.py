import math
from itertools import combinations

import numpy as np
import pytest

from switchcrn.metzler import (
    TOL,
    CertificateKind,
    MetzlerError,
    block_roots,
    decreasing_direction,
    frobenius_form,
    increasing_direction,
    is_metzler,
    principal_submatrix,
    spectral_abscissa,
    unstable_support_vector,
    verify_certificate,
)


def charpoly(a):
    """Faddeev-LeVerrier coefficients c_0..c_d of det(tI - A), c_0 = 1."""
    d = a.shape[0]
    c = [1.0]
    mk = np.zeros_like(a)
    for k in range(1, d + 1):
        mk = a @ mk + c[-1] * np.eye(d)
        c.append(-np.trace(a @ mk) / k)
    return c


def largest_real_root(a, steps=20000):
    c = charpoly(a)
    p = lambda t: np.polyval(c, t)  # Horner evaluation
    bound = 1 + max(abs(x) for x in c[1:])
    ts = np.linspace(bound, -bound, steps)
    signs = np.sign(p(ts))
    k = int(np.flatnonzero(signs != signs[0])[0])
    hi, lo = ts[k - 1], ts[k]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if np.sign(p(mid)) == signs[0]:
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def random_metzler(rng, d, density=0.6):
    a = rng.uniform(-3, 3, size=(d, d))
    off = ~np.eye(d, dtype=bool)
    a[off] = np.maximum(a[off], 0)
    a[off & (rng.random((d, d)) > density)] = 0
    return a


def test_is_metzler():
    assert is_metzler([[-2, 1], [1, -2]])
    assert is_metzler(np.eye(3))
    assert not is_metzler([[0, -1], [0, 0]])


def test_frobenius_examples():
    assert frobenius_form([[-1, 1], [2, -1]]).blocks == ((0, 1),)
    assert sorted(frobenius_form(np.diag([-1.0, 1.0])).blocks) == [(0,), (1,)]
    m = np.array([[-1, 1, 0, 0], [1, -1, 0, 0], [0, 0, -1, 2], [0, 0, 2, -1]], dtype=float)
    assert sorted(frobenius_form(m).blocks) == [(0, 1), (2, 3)]


def _scc_oracle(a):
    d = a.shape[0]
    reach = (a != 0) | np.eye(d, dtype=bool)
    for k in range(d):
        reach = reach | (reach[:, [k]] & reach[[k], :])
    return {frozenset(int(j) for j in np.flatnonzero(reach[i] & reach[:, i])) for i in range(d)}


def test_frobenius_properties():
    rng = np.random.default_rng(11)
    for _ in range(300):
        d = int(rng.integers(1, 7))
        a = random_metzler(rng, d, density=0.3)
        form = frobenius_form(a)
        assert {frozenset(b) for b in form.blocks} == _scc_oracle(a)
        perm = form.permutation
        assert sorted(perm) == list(range(d))
        p = a[np.ix_(perm, perm)]
        pos = 0
        for b in form.blocks:
            # nothing below the diagonal block band
            assert not np.any(p[pos + len(b):, pos:pos + len(b)])
            pos += len(b)


def test_abscissa_examples():
    eps = 0.5
    m1 = np.array([[-4, 2 * (1 - eps)], [2 * eps, 0]])
    assert abs(spectral_abscissa(m1) - (-2 + 2 * math.sqrt(1.25))) < 1e-9
    assert abs(spectral_abscissa([[-1, 2], [2, -1]]) - 1) < 1e-12
    assert spectral_abscissa([[-3.0]]) == -3.0


def test_non_metzler_rejected():
    with pytest.raises(MetzlerError):
        spectral_abscissa([[0, -1], [0, 0]])


def test_abscissa_matches_two_oracles():
    rng = np.random.default_rng(5)
    for _ in range(300):
        d = int(rng.integers(1, 5))
        a = random_metzler(rng, d)
        r = spectral_abscissa(a)
        assert abs(r - largest_real_root(a)) < 1e-6 * max(1, abs(r))
        assert abs(r - max(np.linalg.eigvals(a).real)) < 1e-8 * max(1, abs(r))


def test_permutation_invariance():
    rng = np.random.default_rng(8)
    for _ in range(100):
        d = int(rng.integers(2, 6))
        a = random_metzler(rng, d)
        p = rng.permutation(d)
        assert abs(spectral_abscissa(a) - spectral_abscissa(a[np.ix_(p, p)])) < 1e-9


def test_decreasing_direction_examples():
    c = decreasing_direction([[-2, 1], [1, -2]])
    assert np.allclose(c.v, [1, 1]) and c.margin == pytest.approx(1)
    assert np.allclose(decreasing_direction([[-1.0]]).v, [1])
    assert decreasing_direction([[-1, 2], [2, -1]]) is None


def test_increasing_direction_examples():
    eps = 0.5
    m1 = np.array([[-4, 2 * (1 - eps)], [2 * eps, 0]])
    c = increasing_direction(m1)
    r = -2 + 2 * math.sqrt(1.25)
    assert np.allclose(c.v @ m1, r * c.v, atol=1e-10)
    c = increasing_direction([[2.0]])
    assert c.v.tolist() == [1.0] and c.margin == 2.0
    assert increasing_direction(np.diag([-1.0, 1.0])) is None


def test_unstable_support_examples():
    c = unstable_support_vector(np.diag([-1.0, 1.0]))
    assert c.support == (1,) and np.allclose(c.v, [0, 1])
    c = unstable_support_vector([[-1, 2], [2, -1]])
    assert c.support == (0, 1) and np.allclose(c.v, [0.5, 0.5])
    assert np.allclose(c.v @ np.array([[-1, 2], [2, -1]]), c.v)
    assert unstable_support_vector([[-2, 1], [1, -2]]) is None


def test_equivalence_suite():
    rng = np.random.default_rng(2024)
    for _ in range(1000):
        d = int(rng.integers(1, 6))
        a = random_metzler(rng, d)
        r = spectral_abscissa(a)
        dec, inc, uns = decreasing_direction(a), increasing_direction(a), unstable_support_vector(a)
        assert (dec is not None) == (r < -TOL)
        assert (uns is not None) == (r > TOL)
        assert (inc is not None) == all(p.root > TOL for _, p in block_roots(a))
        for c in (dec, inc, uns):
            if c is not None:
                assert verify_certificate(c, a) and c.margin > 0
        for size in range(1, d):
            for idx in combinations(range(d), size):
                assert spectral_abscissa(principal_submatrix(a, idx)) <= r + 1e-9


def test_certificate_kinds():
    assert decreasing_direction([[-1.0]]).kind is CertificateKind.DECREASING
    assert increasing_direction([[1.0]]).kind is CertificateKind.INCREASING
    assert unstable_support_vector([[1.0]]).kind is CertificateKind.UNSTABLE_SUPPORT
