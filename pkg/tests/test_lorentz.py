import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wintgen_kit import lorentz
from wintgen_kit.errors import DimensionMismatchError, DomainError, SignatureError


def test_inner_timelike_unit():
    v = np.array([1.0, 0.0, 0.0, 0.0])
    assert lorentz.inner(v, v) == -1.0


def test_inner_lightlike():
    v = np.array([1.0, 1.0, 0.0, 0.0])
    assert lorentz.inner(v, v) == 0.0


def test_inner_lift_identity():
    rng = np.random.default_rng(0)
    for _ in range(20):
        f = rng.normal(size=5)
        g = rng.normal(size=5)
        f /= np.linalg.norm(f)
        g /= np.linalg.norm(g)
        lhs = lorentz.inner(lorentz.lift_to_light_cone(f),
                            lorentz.lift_to_light_cone(g))
        assert lhs == pytest.approx(float(f @ g) - 1.0, abs=1e-14)
        assert lhs == pytest.approx(-np.linalg.norm(f - g) ** 2 / 2, abs=1e-14)


def test_inner_dimension_mismatch():
    with pytest.raises(DimensionMismatchError):
        lorentz.inner(np.zeros(3), np.zeros(4))


@given(st.integers(2, 6), st.integers(0, 10_000))
@settings(max_examples=40, deadline=None)
def test_inner_symmetric_bilinear(n, seed):
    rng = np.random.default_rng(seed)
    a, b, c = rng.normal(size=(3, n))
    s, t = rng.normal(size=2)
    assert lorentz.inner(a, b) == pytest.approx(lorentz.inner(b, a), rel=1e-12)
    assert lorentz.inner(s * a + t * b, c) == pytest.approx(
        s * lorentz.inner(a, c) + t * lorentz.inner(b, c), rel=1e-10, abs=1e-10)


def test_lift_examples():
    f = np.zeros(4)
    f[0] = 1.0
    np.testing.assert_allclose(lorentz.lift_to_light_cone(f),
                               [1.0, 1.0, 0.0, 0.0, 0.0])
    g = np.zeros(4)
    g[-1] = 1.0
    np.testing.assert_allclose(lorentz.lift_to_light_cone(g),
                               [1.0, 0.0, 0.0, 0.0, 1.0])


def test_lift_rejects_non_unit():
    with pytest.raises(DomainError) as err:
        lorentz.lift_to_light_cone(np.array([1.1, 0.0]))
    assert err.value.defect == pytest.approx(0.1, abs=1e-12)


def test_lift_null_for_random_units():
    rng = np.random.default_rng(1)
    for _ in range(50):
        f = rng.normal(size=6)
        f /= np.linalg.norm(f)
        Y = lorentz.lift_to_light_cone(f)
        assert abs(lorentz.inner(Y, Y)) <= lorentz.TOL_NULL * 4


def test_orthonormalize_trivial():
    basis = lorentz.orthonormalize(
        [np.array([1.0, 0, 0]), np.array([0.0, 2.0, 0])],
        expected_signature=(1, 1))
    np.testing.assert_allclose(basis.gram, np.diag([-1.0, 1.0]), atol=1e-12)
    np.testing.assert_allclose(np.abs(basis.vectors),
                               [[1, 0, 0], [0, 1, 0]], atol=1e-12)


def test_orthonormalize_null_inputs():
    # two null vectors spanning a Lorentz 2-plane
    vs = [np.array([1.0, 1.0, 0.0]), np.array([1.0, -1.0, 0.0])]
    basis = lorentz.orthonormalize(vs, expected_signature=(1, 1))
    np.testing.assert_allclose(basis.gram, np.diag([-1.0, 1.0]), atol=1e-10)
    # span preserved: both inputs decompose exactly in the new basis
    for v in vs:
        coef = np.linalg.lstsq(basis.vectors.T, v, rcond=None)[0]
        np.testing.assert_allclose(coef @ basis.vectors, v, atol=1e-10)


def test_orthonormalize_signature_mismatch():
    vs = [np.array([1.0, 0.2, 0.0]), np.array([0.0, 0.0, 1.0])]
    with pytest.raises(SignatureError):
        lorentz.orthonormalize(vs, expected_signature=(0, 2))


def test_orthonormalize_random_batch():
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        n = rng.integers(3, 7)
        k = rng.integers(2, n + 1)
        V = rng.normal(size=(k, n))
        sv = np.linalg.svd(V, compute_uv=False)
        if sv[-1] < 1e-3 * sv[0]:
            continue
        g = lorentz.gram(V)
        evals = np.linalg.eigvalsh(g)
        n_time = int(np.sum(evals < -1e-9))
        n_space = int(np.sum(evals > 1e-9))
        if n_time + n_space != k:
            continue
        basis = lorentz.orthonormalize(V, expected_signature=(n_time, n_space))
        target = np.diag([-1.0] * n_time + [1.0] * n_space)
        worst = max(worst, np.abs(basis.gram - target).max())
    assert worst <= lorentz.TOL_FRAME


def test_null_directions_s0():
    basis = lorentz.orthonormalize(
        [np.array([1.0, 0, 0]), np.array([0.0, 1.0, 0])],
        expected_signature=(1, 1))
    rays = lorentz.null_directions(basis, 4)
    assert len(rays) == 2
    for ray in rays:
        assert abs(lorentz.inner(ray, ray)) < 1e-12


def test_null_directions_s1_pairwise():
    basis = lorentz.LorentzBasis(np.eye(3))
    rays = lorentz.null_directions(basis, 4)
    assert len(rays) == 4
    for i, a in enumerate(rays):
        for j, b in enumerate(rays):
            th = 2 * np.pi * (i - j) / 4
            assert lorentz.inner(a, b) == pytest.approx(np.cos(th) - 1.0,
                                                        abs=1e-12)


def test_null_directions_empty():
    basis = lorentz.LorentzBasis(np.eye(3))
    assert lorentz.null_directions(basis, 0) == []


def test_null_directions_wrong_signature():
    basis = lorentz.LorentzBasis(np.eye(4)[1:])  # all spacelike
    with pytest.raises(SignatureError):
        lorentz.null_directions(basis, 3)


def test_random_transform_preserves_inner():
    rng = np.random.default_rng(3)
    for _ in range(25):
        n = int(rng.integers(3, 8))
        T = lorentz.random_lorentz_transform(rng, n)
        a, b = rng.normal(size=(2, n))
        before = lorentz.inner(a, b)
        after = lorentz.inner(T @ a, T @ b)
        assert after == pytest.approx(before, rel=1e-10, abs=1e-10)


def test_classify():
    assert lorentz.classify([1.0, 0.0]) == "timelike"
    assert lorentz.classify([1.0, 1.0]) == "lightlike"
    assert lorentz.classify([0.0, 1.0]) == "spacelike"
