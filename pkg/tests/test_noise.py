import numpy as np
import pytest

from src.noise import mesh_steps, refine, refine_to, restrict, sample_path, standard_normals


def test_path_is_a_function_of_seed_and_index():
    a = sample_path(20240601, 3, 0.01, 1.0)
    b = sample_path(20240601, 3, 0.01, 1.0)
    np.testing.assert_array_equal(a.increments, b.increments)
    assert a.n_steps == 100
    assert not np.array_equal(a.increments, sample_path(20240601, 4, 0.01, 1.0).increments)
    assert not np.array_equal(a.increments, sample_path(20240602, 3, 0.01, 1.0).increments)


def test_longer_horizon_extends_the_same_path():
    short = sample_path(7, 0, 0.05, 1.0)
    long = sample_path(7, 0, 0.05, 2.0)
    np.testing.assert_array_equal(long.increments[: short.n_steps], short.increments)


def test_standard_normals_statistics():
    draws = standard_normals(11, 0, 0, 20001)
    assert draws.size == 20001
    assert abs(draws.mean()) < 0.05
    assert draws.std() == pytest.approx(1.0, abs=0.05)
    assert standard_normals(11, 0, 0, 0).size == 0


def test_increment_variance_matches_dt():
    dt = 0.02
    increments = np.concatenate([sample_path(5, i, dt, 2.0).increments for i in range(100)])
    assert increments.var() == pytest.approx(dt, rel=0.05)


def test_values_and_times():
    path = sample_path(1, 0, 0.1, 1.0)
    assert path.values()[0] == 0.0
    assert path.values()[-1] == pytest.approx(path.terminal)
    np.testing.assert_allclose(path.times(), np.linspace(0.0, 1.0, 11))
    assert path.step_index(0.3) == 3
    with pytest.raises(ValueError):
        path.step_index(0.35)
    with pytest.raises(ValueError):
        path.step_index(1.1)


@pytest.mark.parametrize("dt,T", [(0.0, 1.0), (-0.1, 1.0), (0.1, -1.0), (0.3, 1.0)])
def test_mesh_steps_rejects_bad_meshes(dt, T):
    with pytest.raises(ValueError):
        mesh_steps(dt, T)


def test_zero_horizon_has_no_steps():
    path = sample_path(1, 0, 0.1, 0.0)
    assert path.n_steps == 0
    assert path.terminal == 0.0


def test_refinement_preserves_pair_sums():
    path = sample_path(42, 2, 0.1, 3.0)
    fine = refine(path)
    assert fine.dt == pytest.approx(0.05)
    assert fine.n_steps == 2 * path.n_steps
    assert fine.level == 1
    np.testing.assert_allclose(fine.increments[0::2] + fine.increments[1::2], path.increments, rtol=0, atol=1e-15)
    np.testing.assert_allclose(fine.values()[::2], path.values(), atol=1e-14)


def test_refinement_is_reproducible_and_has_bridge_variance():
    paths = [sample_path(9, i, 0.04, 4.0) for i in range(50)]
    fine = [refine(path) for path in paths]
    np.testing.assert_array_equal(refine(paths[0]).increments, fine[0].increments)
    halves = np.concatenate([p.increments for p in fine])
    assert halves.var() == pytest.approx(0.02, rel=0.05)


def test_refine_to_and_restrict():
    path = sample_path(3, 1, 0.1, 2.0)
    deep = refine_to(path, 3)
    assert deep.level == 3
    assert deep.dt == pytest.approx(0.0125)
    assert deep.terminal == pytest.approx(path.terminal, abs=1e-13)
    cut = restrict(path, 1.0)
    assert cut.n_steps == 10
    assert cut.T == pytest.approx(1.0)
    np.testing.assert_array_equal(cut.increments, path.increments[:10])
