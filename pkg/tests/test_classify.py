import numpy as np
import pytest

from switchcrn import gallery
from switchcrn.classify import (
    ConclusionKind,
    UnknownReason,
    classify,
    classify_fast,
    classify_slow,
    common_unstable_support,
    escape_witness,
    perturb_direction,
)
from switchcrn.metzler import verify_certificate
from switchcrn.mixing import mix
from switchcrn.model import build_model, propensities

ERG = ConclusionKind.ERGODIC
EVA = ConclusionKind.EVANESCENT
UNK = ConclusionKind.UNKNOWN


def test_ex41():
    for eps in (0.1, 0.5, 0.9):
        v = classify(gallery.build("ex4.1", eps=eps))
        assert v.fast.kind is ERG
        assert np.allclose(v.fast.certificates[0].v, [1, 1])
        assert v.slow.kind is EVA and v.slow.support == (0, 1)


def test_ex43():
    v = classify(gallery.build("ex4.3", eps=0.05))
    assert v.fast.kind is EVA and v.fast.support == (0, 1)
    assert v.slow.kind is ERG


def test_ex42_refuses_transience():
    v = classify(gallery.build("ex4.2", eps=0.5))
    assert v.fast.kind is ERG
    assert v.slow.kind is UNK and v.slow.reason is UnknownReason.NOT_MONOMOLECULAR


def test_ex47():
    v = classify(gallery.build("ex4.7"))
    assert v.fast.kind is ERG
    assert np.allclose(mix(gallery.build("ex4.7"))[1].mixed_matrix, [[-0.5]])
    assert v.slow.reason is UnknownReason.MIXED_STABILITY


def test_disjoint_no_common_support():
    m = gallery.build("ex_disjoint")
    assert common_unstable_support(m) is None
    assert classify_slow(m).reason is UnknownReason.NO_COMMON_SUPPORT


def test_ex62():
    v = classify(gallery.build("ex6.2"))
    assert v.slow.reason is UnknownReason.NO_COMMON_SUPPORT
    assert v.fast.kind is EVA and v.fast.support == (0, 1, 2)


def test_nonlinear_generator():
    m = build_model(["S"], [[({"S": 2}, {"S": 3}, 1.0)]])
    assert classify_fast(m).reason is UnknownReason.NONLINEAR_GENERATOR
    assert classify_slow(m).reason is UnknownReason.NONLINEAR_GENERATOR


def test_near_critical():
    m = build_model(["S"], [[({"S": 1}, {"S": 2}, 1.0), ({"S": 1}, {}, 1.0)]])
    assert classify_fast(m).reason is UnknownReason.NEAR_CRITICAL
    assert classify_slow(m).reason is UnknownReason.NEAR_CRITICAL


def test_single_environment_support():
    m = gallery.build("ex4.5")
    v = classify(m)
    assert v.fast.kind is EVA and v.fast.support == (1,)
    assert v.slow.kind is EVA and v.slow.support == (1,)


def _random_model(rng):
    d, n = int(rng.integers(1, 4)), int(rng.integers(1, 4))
    names = [f"X{k}" for k in range(d)]
    envs = []
    for _ in range(n):
        rx = [({}, {names[k]: 1}, 1.0) for k in range(d)]
        for k in range(d):
            rx.append(({names[k]: 1}, {}, float(rng.uniform(0.1, 3))))
            tgt = names[int(rng.integers(d))]
            rx.append(({names[k]: 1}, {tgt: 2}, float(rng.uniform(0.1, 3))))
        envs.append(rx)
    q = rng.uniform(0.5, 2, size=(n, n))
    np.fill_diagonal(q, 0)
    np.fill_diagonal(q, -q.sum(axis=1))
    return build_model(names, envs, q.tolist() if n > 1 else None)


def test_certificates_reverify_and_scale_invariance():
    rng = np.random.default_rng(21)
    for _ in range(80):
        m = _random_model(rng)
        v = classify(m)
        lds, md = mix(m)
        if v.fast.kind is not UNK:
            assert all(verify_certificate(c, md.mixed_matrix) for c in v.fast.certificates)
        if v.slow.kind is not UNK:
            for c, ld in zip(v.slow.certificates, lds):
                assert verify_certificate(c, ld.matrix)
        c = float(rng.uniform(0.01, 100))
        w = classify(m.scaled(c))
        assert w.fast.same_as(v.fast) and w.slow.same_as(v.slow)
        if m.n_env == 1:
            # slow may certify a larger support than the top Perron block
            assert v.fast.kind is v.slow.kind
            if v.fast.kind is EVA:
                assert set(v.fast.support) <= set(v.slow.support)


def test_perturb_direction():
    m = np.array([[-1.0, 2.0], [2.0, -1.0]])
    v = np.array([1.0, 1.0])
    assert np.array_equal(perturb_direction(v, m, []), v)
    out = perturb_direction(v, m, [np.array([1.0, -1.0])])
    assert abs(out @ np.array([1.0, -1.0])) > 0
    assert np.all(out @ m > 0) and np.all(out > 0)
    with pytest.raises(ValueError):
        perturb_direction(np.array([0.0, 1.0]), np.diag([-1.0, 1.0]), [np.array([1.0, 0.0])])


def test_escape_witness_ex43():
    m = gallery.build("ex4.3", eps=0.05)
    v = np.array([1.0, 1.0])
    wit = escape_witness(m, v, (1, 0), 0, 10.0)
    assert v @ np.array(wit.final) > 10
    x = np.array([1, 0])
    for (j, k), nxt in zip(wit.path, wit.states[1:]):
        env = m.environments[j]
        assert propensities(env, x)[k] > 0
        step = env.reactions[k].change(2)
        assert v @ step > 0
        x = x + step
        assert tuple(x) == nxt
    assert len(wit.path) <= int(np.ceil((10 - 1) / 1.0)) + 1


def test_escape_witness_trivial_and_errors():
    m = gallery.build("ex4.3", eps=0.05)
    wit = escape_witness(m, [1.0, 1.0], (5, 5), 0, 3.0)
    assert wit.path == () and wit.final == (5, 5)
    with pytest.raises(ValueError):
        escape_witness(m, [1.0, 1.0], (0, 0), 0, 3.0)


def test_unknown_is_json_clean():
    m = gallery.build("ex4.7")
    d = classify(m).to_dict(m.species)
    assert d["slow"]["conclusion"] == "Unknown" and d["slow"]["reason"] == "MixedStability"
    assert d["fast"]["certificates"][0]["kind"] == "Decreasing"
