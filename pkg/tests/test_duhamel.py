import json

import numpy as np
import pandas as pd
import pytest

from src.duhamel import (
    CHECK_COLUMNS,
    apply_baselines,
    calibrate_baselines,
    chain_bound_check,
    duhamel_terms,
    ito_isometry_check,
    load_baselines,
    modulated_check,
    modulated_sweep,
    check_sweep,
    refinement_change,
    remainder_scaling,
    sample_chain_times,
    save_baselines,
    term_consistency,
)
from src.errors import ConfigError, ValidityWindowError
from src.grid_spectral import free_propagate, gaussian_field, make_grid, mass
from src.noise import sample_path
from src.potential import PotentialSpec


@pytest.fixture
def grid():
    return make_grid(1, 64, 20.0)


@pytest.fixture
def f(grid):
    return gaussian_field(grid, 0.5)


@pytest.fixture
def spec():
    return PotentialSpec(shape="gaussian", amplitude=1.0, sigma=1.0, delta=0.1)


@pytest.fixture
def paths():
    return [sample_path(20240601, i, 0.01, 3.0) for i in range(4)]


def norm(field):
    return np.sqrt(mass(field))


def test_terms_add_up_to_the_solution(f, spec, paths):
    terms = duhamel_terms(f, spec, paths[0], 1.0)
    total = terms.free + terms.stochastic + terms.drift + terms.remainder
    np.testing.assert_allclose(total.values, terms.psi.values, atol=1e-13)
    np.testing.assert_allclose(terms.free.values, free_propagate(f, 1.0).values)
    assert norm(terms.remainder) < norm(terms.stochastic)
    assert norm(terms.drift) < norm(terms.stochastic)


def test_terms_vanish_without_noise(f, spec, paths):
    terms = duhamel_terms(f, spec.with_delta(0.0), paths[0], 1.0)
    assert norm(terms.stochastic) == 0.0
    assert norm(terms.drift) == 0.0
    assert norm(terms.remainder) < 1e-12


def test_explicit_orders(f, spec, paths):
    terms = duhamel_terms(f, spec, paths[0], 0.5)
    assert terms.explicit(0) is terms.free
    np.testing.assert_allclose(terms.remainder_at(1).values, (terms.remainder + terms.drift).values, atol=1e-14)
    with pytest.raises(ValueError):
        terms.explicit(3)
    with pytest.raises(ValueError):
        duhamel_terms(f, spec, paths[0], 0.505)
    with pytest.raises(ValueError):
        duhamel_terms(f, spec, paths[0], 0.5, drift_rule="simpson")


def test_second_quadrature_agrees(f, spec, paths):
    changes = term_consistency(f, spec, paths[0], 1.0)
    assert set(changes) == {"drift", "stochastic"}
    assert changes["drift"] < 0.05
    assert changes["stochastic"] < 0.25


def test_remainder_scales_quadratically(f, spec):
    paths = [sample_path(7, i, 0.0025, 1.0) for i in range(4)]
    result = remainder_scaling(f, spec, paths, 1.0, deltas=[0.2, 0.1, 0.05], order=2)
    assert result.first_fit.slope == pytest.approx(1.0, abs=1e-9)
    assert result.remainder_fit.slope > 1.6
    assert result.expected == 2.0
    report = result.to_dict()
    assert report["order"] == 2 and len(report["remainder"]) == 3


def test_zeroth_order_remainder_is_linear(f, spec):
    paths = [sample_path(7, i, 0.01, 1.0) for i in range(4)]
    result = remainder_scaling(f, spec, paths, 1.0, deltas=[0.2, 0.1, 0.05], order=0)
    assert result.remainder_fit.slope == pytest.approx(1.0, abs=0.15)
    with pytest.raises(ValueError):
        remainder_scaling(f, spec, paths, 1.0, deltas=[0.1], order=2)
    with pytest.raises(ValueError):
        remainder_scaling(f, spec, paths, 1.0, deltas=[0.1, 0.05], order=3)


def test_ito_isometry(f, spec):
    check = ito_isometry_check(f, spec, 1.0, 500, 0.02, master_seed=11)
    assert check.n_paths == 500
    assert check.rhs > 0
    assert check.within <= 4.0
    assert check.rel_error < 0.3
    with pytest.raises(ValueError):
        ito_isometry_check(f, spec, 1.0, 50, 0.02)


def test_isometry_with_constant_potential_is_closed_form(f):
    c, t = 0.7, 1.0
    constant = PotentialSpec(shape="constant", amplitude=c, delta=0.3)
    check = ito_isometry_check(f, constant, t, 400, 0.02, master_seed=3)
    assert check.rhs == pytest.approx(c**2 * t * mass(f), rel=1e-10)
    # cada trayectoria aporta c²‖f‖² B_t²
    terminal = np.array([sample_path(3, i, 0.02, t).terminal for i in range(400)])
    assert check.lhs == pytest.approx(c**2 * mass(f) * np.mean(terminal**2), rel=1e-9)
    assert check.within <= 4.0


def test_isometry_with_zero_potential(f):
    flat = PotentialSpec(shape="constant", amplitude=0.0)
    check = ito_isometry_check(f, flat, 0.5, 100, 0.05)
    assert check.rhs == 0.0 and check.lhs == 0.0
    assert check.within == 0.0


def test_modulated_check_rows_per_frequency(f, spec, paths):
    results = modulated_check(f, spec, paths, 2.0, 0.5, [[0.0], [1.0], [2.5]], 8.0)
    assert [r.check for r in results] == ["modulated"] * 3
    assert all(np.isfinite(r.ratio) and r.ratio > 0 for r in results)
    assert results[1].params["xi"][0] == pytest.approx(2 * np.pi * 3 / 20.0)
    assert len({r.bound for r in results}) == 1
    with pytest.raises(ValueError):
        modulated_check(f, spec, paths, 1.0, 2.0, [[0.0]], 8.0)
    with pytest.raises(ValidityWindowError):
        modulated_check(f, spec, paths, 2.0, 0.5, [[0.0]], 8.0, validity_threshold=1e-300)


def test_modulated_sweep_frame(f, spec, paths):
    frame = modulated_sweep(f, spec, paths, [(0.0, 1.0), (0.5, 2.0)], [[0.0], [1.0]], 4.0)
    assert list(frame.columns) == CHECK_COLUMNS
    assert len(frame) == 4
    params = json.loads(frame.iloc[3]["params"])
    assert params["s"] == 0.5 and params["t"] == 2.0


def test_chain_check_domains(f, spec, paths):
    assert chain_bound_check([0.5, 1.0], 2, f, spec, 8.0, "exchange").ratio > 0
    assert chain_bound_check([0.5, 1.0, 0.7], 3, f, spec, 8.0, "strong").ratio > 0
    assert chain_bound_check([0.5, 2.0], 2, f, spec, 8.0, "variable_small", paths=paths).ratio > 0
    with pytest.raises(ValueError):
        chain_bound_check([0.0, 0.0], 2, f, spec, 8.0, "exchange")
    with pytest.raises(ValueError):
        chain_bound_check([0.3, 0.5], 2, f, spec, 8.0, "strong")
    with pytest.raises(ValueError):
        chain_bound_check([1.5, 2.0], 2, f, spec, 8.0, "variable_small", paths=paths)
    with pytest.raises(ValueError):
        chain_bound_check([0.5, 1.0], 3, f, spec, 8.0, "exchange")
    with pytest.raises(ValueError):
        chain_bound_check([0.5, 1.0], 2, f, spec, 8.0, "bogus")
    with pytest.raises(ValueError):
        chain_bound_check([0.5, 2.0], 2, f, spec, 8.0, "variable_small")


def test_chain_times_are_seeded_and_in_domain():
    exchange = sample_chain_times("exchange", 2, 100, seed=7)
    assert exchange == sample_chain_times("exchange", 2, 100, seed=7)
    assert exchange != sample_chain_times("exchange", 2, 100, seed=8)
    strong = sample_chain_times("strong", 3, 100, seed=7)
    assert all(sum(u) > 1 for u in strong)
    small = sample_chain_times("variable_small", 2, 100, seed=7, dt=0.01)
    assert all(u[0] < 1 and sum(u) > 2 for u in small)
    assert all(abs(u[0] / 0.01 - round(u[0] / 0.01)) < 1e-9 for u in small)
    with pytest.raises(ValueError):
        sample_chain_times("variable_small", 2, 10, seed=7)


def test_check_sweeps(f, spec, paths):
    for kind in ("exchange", "strong"):
        frame = check_sweep(kind, f, spec, 8.0, n_tuples=100, seed=3)
        assert list(frame.columns) == CHECK_COLUMNS
        assert len(frame) == 100
        assert (frame["check"] == kind).all()
        assert np.isfinite(frame["ratio"]).all()
    small = check_sweep("variable_small", f, spec, 8.0, n_tuples=100, seed=3, paths=paths)
    assert len(small) == 100
    with pytest.raises(ValueError):
        check_sweep("variable_small", f, spec, 8.0, n_tuples=10)
    with pytest.raises(ValueError):
        check_sweep("modulated", f, spec, 8.0)


def test_check_ratios_are_stable_under_grid_refinement(spec):
    coarse_grid = make_grid(1, 64, 32.0)
    fine_grid = make_grid(1, 96, 32.0)
    for kind in ("exchange", "strong"):
        coarse = check_sweep(kind, gaussian_field(coarse_grid, 0.5), spec, 8.0, n_tuples=100, seed=5)
        fine = check_sweep(kind, gaussian_field(fine_grid, 0.5), spec, 8.0, n_tuples=100, seed=5)
        assert refinement_change(coarse, fine) < 0.10
    with pytest.raises(ValueError):
        refinement_change(coarse, fine.iloc[:10])


def test_baselines_freeze_and_gate(f, spec, paths, tmp_path):
    calibration = {"exchange": check_sweep("exchange", f, spec.with_delta(0.0), 8.0, n_tuples=100)}
    baselines = calibrate_baselines(calibration)
    assert baselines["exchange"] == calibration["exchange"]["ratio"].max()
    path = save_baselines(tmp_path / "baselines.json", baselines)
    assert load_baselines(path) == baselines

    measured = check_sweep("exchange", f, spec, 8.0, n_tuples=100)
    gated = apply_baselines(measured, baselines)
    assert list(gated.columns) == ["check", "params", "ratio", "baseline", "passed"]
    assert gated["passed"].all()
    strict = apply_baselines(measured, {"exchange": 1e-9})
    assert not strict["passed"].any()
    missing = apply_baselines(measured, {})
    assert missing["baseline"].isna().all() and missing["passed"].all()


def test_bad_baseline_files(tmp_path):
    with pytest.raises(ConfigError):
        load_baselines(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"exchange": "high"}))
    with pytest.raises(ConfigError):
        load_baselines(bad)
    frame = pd.DataFrame({"check": ["strong"], "params": ["{}"], "ratio": [np.inf], "bound": [1.0]})
    assert not apply_baselines(frame, {"strong": 1.0})["passed"].iloc[0]
