import numpy as np
import pytest
from sklearn.base import clone

from framefield import varieties
from framefield.estimators import FrameFieldOptimizer, OctahedralProjector, OdecoProjector
from framefield.exceptions import InputError
from framefield.mesh import generate_cube_mesh


def test_projectors(rng):
    y = rng.normal(size=(10, 9))
    proj = OctahedralProjector().fit(y)
    q = proj.transform(y)
    assert varieties.octa_residual(q).max() < 1e-7
    assert proj.ratios_.shape == (10,)
    z = rng.normal(size=(4, 15))
    q = OdecoProjector().fit_transform(z)
    assert q.shape == (4, 15)
    with pytest.raises(InputError):
        proj.transform(z)
    with pytest.raises(InputError):
        OctahedralProjector(workers=0).fit(y)


def test_params_and_clone():
    est = FrameFieldOptimizer(rep="odeco", solver="mmbo", seed=3)
    assert clone(est).get_params()["solver"] == "mmbo"


def test_optimizer_fit():
    m = generate_cube_mesh(2)
    est = FrameFieldOptimizer(solver="rtr", seed=1).fit(m)
    assert est.energy_ < 1e-6 and est.n_features_in_ == 9
    assert est.transform().shape == (m.n_vertices, 9)
    with pytest.raises(InputError):
        FrameFieldOptimizer().fit(np.zeros((3, 3)))
    with pytest.raises(InputError):
        FrameFieldOptimizer(rep="tetra").fit(m)
