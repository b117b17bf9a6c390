import numpy as np
import pytest

from src.grid_spectral import make_grid
from src.potential import (
    GaussianComponent,
    PotentialSpec,
    fourier_l1_norm,
    holder_exponent,
    l1_norm,
    lr_norm,
    quadrature_fourier_l1_norm,
    quadrature_l1_norm,
    quadrature_lr_norm,
    sample,
    sample_real,
    smallness,
)


@pytest.fixture
def grid():
    return make_grid(1, 256, 32.0)


def test_gaussian_norms_match_quadrature(grid):
    spec = PotentialSpec(shape="gaussian", amplitude=2.0, sigma=1.0)
    assert l1_norm(spec) == pytest.approx(2.0 * np.sqrt(2 * np.pi), rel=1e-12)
    assert l1_norm(spec, grid) == pytest.approx(quadrature_l1_norm(spec, grid), rel=1e-10)
    assert lr_norm(spec, 3.0, grid) == pytest.approx(quadrature_lr_norm(spec, grid, 3.0), rel=1e-10)
    assert lr_norm(spec, np.inf) == 2.0


def test_fourier_norm_of_gaussian_is_amplitude(grid):
    spec = PotentialSpec(shape="gaussian", amplitude=-1.5, sigma=1.5)
    assert fourier_l1_norm(spec) == 1.5
    assert quadrature_fourier_l1_norm(spec, grid) == pytest.approx(1.5, rel=1e-8)


def test_three_dimensional_closed_form_uses_sigma_per_axis():
    spec = PotentialSpec(shape="gaussian", amplitude=1.0, sigma=[1.0, 2.0, 0.5])
    expected = (2 * np.pi) ** 1.5 * 1.0 * 2.0 * 0.5
    assert l1_norm(spec) == pytest.approx(expected)


def test_constant_potential_is_torus_only(grid):
    spec = PotentialSpec(shape="constant", amplitude=0.7)
    np.testing.assert_allclose(sample_real(spec, grid), 0.7)
    assert fourier_l1_norm(spec) == 0.7
    assert lr_norm(spec, np.inf) == 0.7
    with pytest.raises(ValueError):
        l1_norm(spec)
    assert l1_norm(spec, grid) == pytest.approx(0.7 * 32.0)


def test_sum_of_gaussians(grid):
    spec = PotentialSpec(
        shape="sum-of-gaussians",
        components=[
            GaussianComponent(amplitude=1.0, sigma=1.0),
            GaussianComponent(amplitude=0.5, sigma=2.0),
        ],
    )
    assert fourier_l1_norm(spec) == pytest.approx(1.5)
    assert l1_norm(spec, grid) == pytest.approx(np.sqrt(2 * np.pi) * (1.0 + 0.5 * 2.0))
    assert l1_norm(spec, grid) == pytest.approx(quadrature_l1_norm(spec, grid), rel=1e-9)


def test_mixed_sign_sum_needs_a_grid(grid):
    spec = PotentialSpec(
        shape="sum-of-gaussians",
        components=[
            GaussianComponent(amplitude=1.0, sigma=1.0, center=[-3.0]),
            GaussianComponent(amplitude=-1.0, sigma=1.0, center=[3.0]),
        ],
    )
    with pytest.raises(ValueError):
        fourier_l1_norm(spec)
    assert fourier_l1_norm(spec, grid) == pytest.approx(quadrature_fourier_l1_norm(spec, grid))
    assert l1_norm(spec, grid) == pytest.approx(2 * np.sqrt(2 * np.pi), rel=1e-2)


def test_sample_is_real_and_centered(grid):
    spec = PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, center=[2.0])
    field = sample(spec, grid)
    assert np.all(field.values.imag == 0)
    x = grid.axes[0]
    assert x[np.argmax(field.values.real)] == pytest.approx(2.0)


def test_under_resolved_or_uncontained_potential_is_rejected():
    coarse = make_grid(1, 16, 32.0)
    with pytest.raises(ValueError):
        sample(PotentialSpec(shape="gaussian", sigma=1.0), coarse)
    small = make_grid(1, 64, 8.0)
    with pytest.raises(ValueError):
        sample(PotentialSpec(shape="gaussian", sigma=2.0), small)


def test_smallness():
    spec = PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, delta=0.1)
    assert smallness(spec) == pytest.approx(0.1 * ((2 * np.pi) ** 1.5 + 1.0))
    assert smallness(spec.with_delta(0.0)) == 0.0


def test_holder_exponent():
    assert holder_exponent(4 / 3, 4.0) == pytest.approx(2.0)
    assert holder_exponent(1.0, np.inf) == 1.0
    assert holder_exponent(2.0, 2.0) == np.inf
