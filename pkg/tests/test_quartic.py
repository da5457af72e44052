import numpy as np
import pytest
from hypothesis import given, strategies as st

from framefield import _poly, quartic, so3, varieties
from framefield.exceptions import AxesNotOrthonormal, NotOdeco, NotOnVariety

seeds = st.integers(0, 2**32 - 1)


def sphere_points(n, rng):
    x = rng.normal(size=(n, 3))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


def test_change_of_basis_inverse():
    A = quartic.sh_to_monomial_matrix() @ quartic.monomial_to_sh_matrix()
    assert np.abs(A - np.eye(15)).max() < 1e-12


def test_basis_orthonormal_on_sphere():
    Y = quartic.sh_to_monomial_matrix()
    assert np.abs(Y.T @ _poly.sphere_gram(4) @ Y - np.eye(15)).max() < 1e-12


def test_band2_quadratics_harmonic():
    B = quartic.band2_quadratics()
    assert np.abs(_poly.laplacian(2) @ B).max() < 1e-12


def test_q0_is_cubic_quartic():
    probe = quartic._monomial_vector({(4, 0, 0): 1.0, (0, 4, 0): 1.0, (0, 0, 4): 1.0}, 4)
    q = quartic.monomial_to_sh(probe)
    assert np.abs(q[quartic.BAND2]).max() < 1e-12
    assert np.allclose(q[quartic.BAND4] / np.linalg.norm(q[quartic.BAND4]), so3.Q0, atol=1e-12)


@given(seeds)
def test_sh_evaluation_matches_monomials(seed):
    rng = np.random.default_rng(seed)
    q = rng.normal(size=15)
    x = sphere_points(5, rng)
    via_mono = _poly.evaluate(quartic.sh_to_monomial(q), x, 4)
    again = _poly.evaluate(quartic.sh_to_monomial(quartic.monomial_to_sh(quartic.sh_to_monomial(q))), x, 4)
    assert np.allclose(via_mono, again, atol=1e-12)


@given(seeds)
def test_decomposition_round_trip(seed):
    rng = np.random.default_rng(seed)
    lam = np.sort(rng.uniform(0.2, 2.0, size=3))[::-1]
    if np.min(np.diff(lam[::-1])) < 0.05:
        lam = np.array([2.0, 1.0, 0.4])
    axes = varieties.random_rotations(1, rng)[0].T
    q = quartic.odeco_from_decomposition(lam, axes)
    dec = quartic.tensor_decompose(q)
    assert np.allclose(dec.lambdas, lam, atol=1e-8)
    assert np.allclose(np.abs(dec.axes @ axes.T), np.eye(3), atol=1e-6)
    assert np.abs(quartic.odeco_from_decomposition(dec) - q).max() < 1e-8
    assert not dec.has_negative_weight


def test_odeco_evaluates_to_weighted_powers(rng):
    lam = np.array([1.5, -0.3, 0.7])
    axes = varieties.random_rotations(1, rng)[0].T
    q = quartic.odeco_from_decomposition(lam, axes)
    x = sphere_points(10, rng)
    expected = ((x @ axes.T) ** 4) @ lam
    assert np.allclose(_poly.evaluate(quartic.sh_to_monomial(q), x, 4), expected, atol=1e-12)


def test_equal_weights_have_no_band2(rng):
    axes = varieties.random_rotations(1, rng)[0]
    q = quartic.odeco_from_decomposition(np.ones(3), axes)
    assert np.abs(q[quartic.BAND2]).max() < 1e-12


def test_octa_odeco_round_trip(rng):
    R = varieties.random_rotations(20, rng)
    q = so3.wigner_from_rotation(4, R) @ so3.Q0
    full = quartic.octa_to_odeco(q)
    assert varieties.odeco_residual(full / np.linalg.norm(full, axis=1, keepdims=True)).max() < 1e-10
    assert np.allclose(quartic.odeco_to_octa(full), q)
    assert np.allclose(full[:, 0], quartic.octa_band0_constant())


def test_octa_to_odeco_rejects_off_variety():
    with pytest.raises(NotOnVariety):
        quartic.octa_to_odeco(np.ones(9) / 3.0)


def test_tensor_decompose_rejects_non_odeco(rng):
    with pytest.raises(NotOdeco):
        quartic.tensor_decompose(rng.normal(size=15))


def test_tensor_decompose_zero():
    assert quartic.tensor_decompose(np.zeros(15)).degenerate


def test_axes_must_be_orthonormal():
    with pytest.raises(AxesNotOrthonormal):
        quartic.odeco_from_decomposition(np.ones(3), np.ones((3, 3)))


def test_sum_of_squares_nonnegative(rng):
    q = quartic.sum_of_squares_quartics(50, rng)
    assert np.allclose(np.linalg.norm(q, axis=1), 1.0)
    vals = _poly.evaluate(quartic.sh_to_monomial(q), sphere_points(500, rng), 4)
    assert vals.min() >= -1e-12


def test_radial_quartic_is_pure_band0():
    r4 = quartic._monomial_vector({(4, 0, 0): 1, (0, 4, 0): 1, (0, 0, 4): 1,
                                   (2, 2, 0): 2, (2, 0, 2): 2, (0, 2, 2): 2}, 4)
    q = quartic.monomial_to_sh(r4)
    assert np.abs(q[1:]).max() < 1e-12


def test_rank_one_frame_is_x4():
    q = quartic.odeco_from_decomposition([1.0, 0.0, 0.0], np.eye(3))
    assert np.allclose(quartic.sh_to_monomial(q), quartic._monomial_vector({(4, 0, 0): 1.0}, 4), atol=1e-12)


def test_band2_norm_law(rng):
    lam = np.array([2.0, 1.0, 1.0])
    base = quartic.odeco_from_decomposition(lam, np.eye(3))
    form = lambda l: np.sum(l ** 2) - (l[0] * l[1] + l[0] * l[2] + l[1] * l[2])
    C2 = np.sum(base[quartic.BAND2] ** 2) / form(lam)
    for R in varieties.random_rotations(100, rng):
        l = rng.normal(size=3)
        q = quartic.odeco_from_decomposition(l, R.T)
        assert abs(np.sum(q[quartic.BAND2] ** 2) - C2 * form(l)) < 1e-10
        if np.ptp(l) > 1e-3:
            assert np.linalg.norm(q[quartic.BAND2]) > 1e-6


def test_rotation_equivariance(rng):
    for R in varieties.random_rotations(20, rng):
        lam = rng.normal(size=3)
        axes = varieties.random_rotations(1, rng)[0].T
        lhs = quartic.odeco_from_decomposition(lam, axes @ R.T)
        rhs = so3.odeco_wigner(R=R) @ quartic.odeco_from_decomposition(lam, axes)
        assert np.abs(lhs - rhs).max() < 1e-10


def test_octa_embedding_is_equal_weight_frame():
    full = quartic.octa_to_odeco(so3.Q0)
    equal = quartic.odeco_from_decomposition(np.ones(3), np.eye(3))
    s = 1.0 / np.linalg.norm(equal[quartic.BAND4])
    assert np.abs(full - s * equal).max() < 1e-12
    dec = quartic.tensor_decompose(full)
    assert np.allclose(dec.lambdas, s, atol=1e-8)
    assert np.allclose(np.abs(dec.axes) @ np.ones(3), 1.0, atol=1e-6)


def test_decompose_axis_aligned_example():
    dec = quartic.tensor_decompose(quartic.odeco_from_decomposition([3.0, 2.0, 1.0], np.eye(3)))
    assert np.allclose(dec.lambdas, [3, 2, 1], atol=1e-8)
    assert np.allclose(np.abs(dec.axes), np.eye(3), atol=1e-6)


def test_decomposition_round_trip_bulk(rng):
    worst = 0.0
    for _ in range(1000):
        lam = np.sort(rng.uniform(-2, 2, size=3))[::-1]
        if np.min(-np.diff(lam)) < 0.05 or np.min(np.abs(lam)) < 0.05:
            continue
        axes = varieties.random_rotations(1, rng)[0].T
        dec = quartic.tensor_decompose(quartic.odeco_from_decomposition(lam, axes))
        worst = max(worst, np.abs(dec.lambdas - lam).max(),
                    np.abs(np.abs(dec.axes @ axes.T) - np.eye(3)).max())
    assert worst < 1e-7
