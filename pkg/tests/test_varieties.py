import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import subspace_angles

from framefield import so3, varieties
from framefield.exceptions import (DimensionMismatch, InputError, NotTangent, ParseError,
                                   SingularPoint)


@pytest.fixture(scope="module")
def derived():
    return {seed: (varieties.derive_octa_quadrics(seed=seed), varieties.derive_odeco_quadrics(seed=seed))
            for seed in (0, 1)}


def unit_odeco(n, rng):
    q = varieties.random_odeco(n, rng)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def test_counts_and_gap(derived):
    octa, odeco = derived[0]
    assert octa.count == varieties.OCTA_COUNT == 15
    assert odeco.count == varieties.ODECO_COUNT == 27
    assert octa.gap_ratio >= 1e4 and odeco.gap_ratio >= 1e4
    assert octa.matrices.shape == (15, 10, 10) and not octa.homogeneous
    assert odeco.matrices.shape == (27, 15, 15) and odeco.homogeneous


def test_seeds_agree_in_span(derived):
    for a, b in zip(derived[0], derived[1]):
        angles = subspace_angles(a.matrices.reshape(a.count, -1).T, b.matrices.reshape(b.count, -1).T)
        assert angles.max() < 1e-8


def test_packaged_quadrics_match_derivation(derived):
    for packaged, fresh in zip(varieties.default_quadrics(), derived[0]):
        angles = subspace_angles(packaged.matrices.reshape(packaged.count, -1).T,
                                 fresh.matrices.reshape(fresh.count, -1).T)
        assert angles.max() < 1e-8


def test_too_few_samples():
    with pytest.raises(InputError):
        varieties.derive_octa_quadrics(samples=10)


def test_residuals_vanish_on_varieties(rng):
    R = varieties.random_rotations(200, rng)
    assert varieties.octa_residual(so3.wigner_from_rotation(4, R) @ so3.Q0).max() < 1e-10
    assert varieties.odeco_residual(unit_odeco(200, rng)).max() < 1e-10


def test_residuals_detect_generic_points(rng):
    y = rng.normal(size=(50, 9))
    assert varieties.octa_residual(y / np.linalg.norm(y, axis=1, keepdims=True)).min() > 1e-4
    z = rng.normal(size=(50, 15))
    assert varieties.odeco_residual(z / np.linalg.norm(z, axis=1, keepdims=True)).min() > 1e-4


def test_residual_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        varieties.octa_residual(np.zeros(15))


def test_zaligned_quadrics_vanish_on_chart():
    from framefield.projection import chart_coordinates

    Q = varieties.zaligned_odeco_quadrics()
    rng = np.random.default_rng(3)
    for _ in range(20):
        s = chart_coordinates(rng.normal(size=2), rng.uniform(0, np.pi))
        assert varieties.residual(s, Q) < 1e-12


def test_file_round_trip(tmp_path, derived):
    octa, odeco = derived[0]
    path = tmp_path / "q.txt"
    digest = varieties.save_quadrics(path, octa, odeco, seed=0, samples=2000)
    o2, d2, header = varieties.load_quadrics(path)
    assert header["content_hash"] == digest == varieties.content_hash([o2, d2])
    assert np.array_equal(o2.matrices, octa.matrices)
    assert np.array_equal(d2.matrices, odeco.matrices)


def test_tampered_file_rejected(tmp_path, derived):
    path = tmp_path / "q.txt"
    varieties.save_quadrics(path, *derived[0])
    lines = path.read_text().splitlines()
    lines[-1] = lines[-1].replace("0", "1", 1)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(ParseError):
        varieties.load_quadrics(path)


def test_use_quadrics_switches_source(tmp_path, derived):
    path = tmp_path / "q.txt"
    varieties.save_quadrics(path, *derived[1])
    try:
        varieties.use_quadrics(path)
        assert np.array_equal(varieties.octa_quadrics().matrices, derived[1][0].matrices)
    finally:
        varieties.use_quadrics(None)


def test_normal_space_rank(rng):
    for q in unit_odeco(20, rng):
        N = varieties.odeco_normal_space(q)
        assert N.shape == (15, varieties.GENERIC_NORMAL_RANK)
        split = varieties.odeco_tangent_split(q)
        assert split.rotational.shape[1] == 3 and split.scaling.shape[1] == 3
        assert np.abs(N.T @ split.tangent).max() < 1e-8


def test_origin_is_singular():
    with pytest.raises(SingularPoint):
        varieties.odeco_normal_space(np.zeros(15))


def test_retraction_feasibility_and_first_order(rng):
    for q in unit_odeco(50, rng):
        T = varieties.odeco_tangent_split(q).tangent
        v = T @ rng.normal(size=T.shape[1])
        v /= np.linalg.norm(v)
        out = varieties.odeco_retract(q, v)
        assert varieties.odeco_residual(out / np.linalg.norm(out)) < 1e-8
        errs = [np.linalg.norm(varieties.odeco_retract(q, t * v) - (q + t * v)) / t for t in (1e-2, 1e-3)]
        assert errs[0] <= 10.0 * 1e-2
        assert errs[1] <= 10.0 * 1e-3
        assert errs[1] < 0.2 * errs[0]


def test_retraction_rejects_normal_steps(rng):
    q = unit_odeco(1, rng)[0]
    N = varieties.odeco_normal_space(q)
    with pytest.raises(NotTangent):
        varieties.odeco_retract(q, N[:, 0])


@given(st.integers(0, 10**6))
def test_retraction_property(seed):
    rng = np.random.default_rng(seed)
    q = unit_odeco(1, rng)[0]
    T = varieties.odeco_tangent_split(q).tangent
    v = T @ rng.normal(size=T.shape[1]) * rng.uniform(0, 1)
    out = varieties.odeco_retract(q, v)
    assert varieties.odeco_residual(out / max(np.linalg.norm(out), 1e-12)) < 1e-8


def test_examples_from_known_points():
    assert varieties.octa_residual(so3.Q0) < 1e-10
    e1 = np.zeros(9)
    e1[0] = 1.0
    assert varieties.octa_residual(e1) > 1e-3
    assert varieties.odeco_residual(np.zeros(15)) == 0.0


def test_homogeneous_scaling_law(rng):
    z = rng.normal(size=15)
    assert abs(varieties.odeco_residual(2 * z) - 4 * varieties.odeco_residual(z)) < 1e-12


def test_zaligned_entries():
    A1, A2, A3 = varieties.zaligned_odeco_quadrics().matrices
    r = 3 * np.sqrt(2)
    assert A1[0, 0] == -4 and abs(A1[0, 2] + r) < 1e-15
    assert abs(A2[0, 1] - 2 * r) < 1e-15 and A2[2, 3] == -36
    for A in (A1, A2, A3):
        assert np.array_equal(A, A.T)


def test_quadrics_independent_and_orthonormal():
    for qs in varieties.default_quadrics():
        flat = qs.matrices.reshape(qs.count, -1)
        assert np.abs(flat @ flat.T - np.eye(qs.count)).max() < 1e-10
        assert np.linalg.svd(flat, compute_uv=False).min() > 1e-8
        assert np.array_equal(qs.matrices, np.swapaxes(qs.matrices, 1, 2))


def test_bulk_membership(rng):
    R = varieties.random_rotations(1000, rng)
    assert varieties.octa_residual(so3.wigner_from_rotation(4, R) @ so3.Q0).max() < 1e-9
    assert varieties.odeco_residual(unit_odeco(1000, rng)).max() < 1e-9


def test_embedded_octa_is_smooth_point():
    from framefield import quartic

    q = quartic.octa_to_odeco(so3.Q0)
    N = varieties.odeco_normal_space(q)
    assert N.shape[1] == 9
    assert np.abs(N.T @ (so3.odeco_generators() @ q).T).max() < 1e-9
    split = varieties.odeco_tangent_split(q)
    assert split.rotational.shape[1] == 3 and split.scaling.shape[1] == 3
    e0 = np.zeros(15)
    e0[0] = 1.0
    assert np.linalg.norm(split.scaling.T @ e0) > 1e-3


def test_rank_one_frame_is_singular():
    from framefield import quartic

    q = quartic.odeco_from_decomposition([1.0, 0.0, 0.0], np.eye(3))
    with pytest.raises(SingularPoint):
        varieties.odeco_normal_space(q / np.linalg.norm(q))


def test_split_equivariance(rng):
    q = unit_odeco(1, rng)[0]
    R = varieties.random_rotations(1, rng)[0]
    W = so3.odeco_wigner(R=R)
    a = varieties.odeco_tangent_split(q)
    b = varieties.odeco_tangent_split(W @ q)
    assert subspace_angles(W @ a.rotational, b.rotational).max() < 1e-8
    assert subspace_angles(W @ a.tangent, b.tangent).max() < 1e-8


def test_retraction_examples(rng):
    from framefield import quartic

    q = unit_odeco(1, rng)[0]
    assert np.allclose(varieties.odeco_retract(q, np.zeros(15)), q)
    c = np.array([0.2, -0.1, 0.3])
    v = (so3.odeco_generators() @ q).T @ c
    assert np.abs(varieties.odeco_retract(q, v) - so3.odeco_wigner(v=c) @ q).max() < 1e-10
    p = quartic.octa_to_odeco(so3.Q0)
    step = quartic.odeco_from_decomposition(0.1 * np.ones(3), np.eye(3))
    dec = quartic.tensor_decompose(varieties.odeco_retract(p, step))
    assert np.allclose(dec.lambdas, quartic.tensor_decompose(p).lambdas + 0.1, atol=1e-8)
    assert np.allclose(np.abs(dec.axes) @ np.ones(3), 1.0, atol=1e-6)
    for t in (0.01, 0.1, 0.5, 1.0):
        T = varieties.odeco_tangent_split(q).tangent
        v = T @ rng.normal(size=6)
        v /= np.linalg.norm(v)
        assert varieties.odeco_residual(varieties.odeco_retract(q, t * v)) < 1e-8
