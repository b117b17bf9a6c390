import numpy as np
import pytest

from src.errors import NonFiniteFieldError
from src.grid_spectral import ComplexField, free_propagate, make_grid, gaussian_field, mass
from src.integrator import (
    SplitStepPropagator,
    evolve,
    final_state,
    noise_phase_step,
    strang_step,
    strong_error,
    strong_order,
)
from src.noise import sample_path
from src.potential import PotentialSpec, sample_real


def test_zero_coupling_is_the_free_flow(gaussian_1d, bump):
    path = sample_path(1, 0, 0.05, 2.0)
    trajectory = evolve(gaussian_1d, bump.with_delta(0.0), path, [0.0, 1.0, 2.0])
    assert trajectory.fields[0] is gaussian_1d
    for t, psi in zip(trajectory.times, trajectory.fields):
        np.testing.assert_allclose(psi.values, free_propagate(gaussian_1d, t).values, atol=1e-12)


def test_constant_potential_oracle(gaussian_1d):
    spec = PotentialSpec(shape="constant", amplitude=0.7, delta=0.3)
    path = sample_path(20240601, 0, 0.01, 1.0)
    psi = final_state(gaussian_1d, spec, path)
    exact = free_propagate(gaussian_1d, 1.0) * np.exp(-1j * 0.3 * 0.7 * path.terminal)
    assert np.max(np.abs(psi.values - exact.values)) < 1e-10


def test_mass_is_conserved_pathwise(gaussian_1d, bump):
    path = sample_path(3, 5, 0.005, 2.0)
    trajectory = evolve(gaussian_1d, bump, path, [0.0, 0.5, 1.0, 1.5, 2.0])
    assert trajectory.mass_drift() < 1e-11
    assert trajectory.masses()[0] == pytest.approx(mass(gaussian_1d))


def test_fused_loop_matches_composed_strang_steps(gaussian_1d, bump):
    path = sample_path(8, 0, 0.05, 1.0)
    V = sample_real(bump, gaussian_1d.grid)
    psi = gaussian_1d
    for dB in path.increments:
        psi = strang_step(psi, path.dt, dB, V, bump.delta)
    fused = final_state(gaussian_1d, bump, path)
    np.testing.assert_allclose(fused.values, psi.values, atol=1e-12)


def test_noise_phase_step_is_unimodular(gaussian_1d, bump):
    V = sample_real(bump, gaussian_1d.grid)
    stepped = noise_phase_step(gaussian_1d, V, bump.delta, 0.3)
    np.testing.assert_allclose(np.abs(stepped.values), np.abs(gaussian_1d.values))
    assert noise_phase_step(gaussian_1d, V, 0.0, 0.3) is gaussian_1d
    with pytest.raises(ValueError):
        noise_phase_step(gaussian_1d, V, bump.delta, np.inf)
    with pytest.raises(ValueError):
        noise_phase_step(gaussian_1d, V.astype(complex) + 1j, bump.delta, 0.3)


def test_strang_step_rejects_nonpositive_dt(gaussian_1d, bump):
    V = sample_real(bump, gaussian_1d.grid)
    with pytest.raises(ValueError):
        strang_step(gaussian_1d, 0.0, 0.1, V, bump.delta)


def test_trajectory_lookup(gaussian_1d, bump):
    path = sample_path(2, 0, 0.1, 1.0)
    trajectory = evolve(gaussian_1d, bump, path, [0.3, 0.7])
    assert trajectory.times == pytest.approx((0.3, 0.7))
    assert trajectory.at(0.7) is trajectory.fields[1]
    with pytest.raises(KeyError):
        trajectory.at(0.5)
    assert trajectory.index == 0 and trajectory.master_seed == 2


@pytest.mark.parametrize("times", [[], [0.5, 0.5], [0.6, 0.2], [0.25], [2.0]])
def test_record_times_must_be_increasing_mesh_points(gaussian_1d, bump, times):
    path = sample_path(2, 0, 0.1, 1.0)
    with pytest.raises(ValueError):
        evolve(gaussian_1d, bump, path, times)


def test_blowup_is_reported_with_its_step(gaussian_1d):
    propagator = SplitStepPropagator(gaussian_1d.grid, np.full(gaussian_1d.grid.shape, 1e308), 1e10, 0.1)
    with pytest.raises(NonFiniteFieldError, match="step 1"):
        propagator.run(gaussian_1d.values, np.array([1.0, 1.0]), [2])


def test_iterate_yields_every_step(gaussian_1d, bump):
    path = sample_path(4, 0, 0.1, 0.5)
    propagator = SplitStepPropagator(gaussian_1d.grid, sample_real(bump, gaussian_1d.grid), bump.delta, path.dt)
    states = dict(propagator.iterate(gaussian_1d.values, path.increments))
    assert sorted(states) == list(range(6))
    expected = evolve(gaussian_1d, bump, path, [0.3]).fields[-1]
    np.testing.assert_allclose(states[3], expected.values, atol=1e-13)


def test_strong_error_shrinks_under_refinement():
    grid = make_grid(1, 64, 20.0)
    f = gaussian_field(grid, 0.5)
    spec = PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, delta=0.5)
    path = sample_path(20240601, 0, 0.05, 1.0)
    coarse = strong_error(f, spec, path)
    fine = strong_error(f, spec, path, dt=0.0125)
    assert fine < coarse
    with pytest.raises(ValueError):
        strong_error(f, spec, path, dt=0.03)


def test_strong_order_is_about_one():
    grid = make_grid(1, 64, 20.0)
    f = gaussian_field(grid, 0.5)
    spec = PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, delta=0.5)
    paths = [sample_path(20240601, i, 0.05, 1.0) for i in range(8)]
    convergence = strong_order(f, spec, paths, levels=4)
    assert convergence.dts == pytest.approx((0.05, 0.025, 0.0125, 0.00625))
    assert 0.75 < convergence.order < 1.5


def test_strong_order_without_noise_has_no_fit(gaussian_1d, bump):
    paths = [sample_path(1, i, 0.1, 0.5) for i in range(2)]
    convergence = strong_order(gaussian_1d, bump.with_delta(0.0), paths, levels=2)
    assert convergence.fit is None
    assert np.isnan(convergence.order)


@pytest.mark.slow
def test_mass_conservation_in_three_dimensions():
    grid = make_grid(3, 48, 48.0)
    f = gaussian_field(grid, 0.05)
    spec = PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, delta=0.1)
    path = sample_path(20240601, 0, 0.01, 10.0)
    trajectory = evolve(f, spec, path, [0.0, 5.0, 10.0])
    assert path.n_steps == 1000
    assert trajectory.mass_drift() < 1e-11
