"""Flow stepping: monotonicity, guards, equivariance, De Turck machinery."""

import numpy as np
import pytest

from spinflow.clifford import build_clifford
from spinflow.flow import (
    FlowConfig,
    FlowError,
    check_cfl,
    fourier_sample,
    integrate_diffeo,
    perturbed_flat_section,
    run_flow,
    symbol_eigenvalue_estimate,
)
from spinflow.lattice import LatticeTorus, SectionField


def flat_constant_section(n, N):
    torus = LatticeTorus(n, N)
    alg = build_clifford(n)
    g = np.tile(np.eye(n), torus.shape + (1, 1))
    v = np.zeros(torus.shape + (alg.dim_spinor,))
    v[..., 0] = 1.0
    return SectionField(torus, g, v, alg)


def test_config_validation():
    with pytest.raises(ValueError):
        FlowConfig(dt=-1.0, steps=1)
    with pytest.raises(ValueError):
        FlowConfig(dt=1.0, steps=1, integrator="verlet")


def test_critical_point_is_fixed():
    s = flat_constant_section(3, 8)
    res = run_flow(s, FlowConfig(dt=1e-3, steps=3))
    np.testing.assert_array_equal(res.final.metric, s.metric)
    np.testing.assert_array_equal(res.final.spinor, s.spinor)
    assert res.rows[-1]["E_n-1"] == 0.0 and res.rows[-1]["E_n"] == 0.0


def test_cfl_guard_rejects_large_step():
    s = perturbed_flat_section(3, 8, 1e-2, seed=1)
    with pytest.raises(FlowError):
        check_cfl(s, FlowConfig(dt=1.0, steps=1))
    # and a sane step passes
    assert check_cfl(s, FlowConfig(dt=1e-3, steps=1)) <= 0.25


def test_norm_drift_guard():
    s = perturbed_flat_section(3, 8, 1e-1, seed=2)
    cfg = FlowConfig(dt=2e-3, steps=3, check_stability=False, norm_drift_limit=1e-18)
    with pytest.raises(FlowError):
        run_flow(s, cfg)


def test_energy_monotone_and_unit_norm():
    for seed in range(5):
        s = perturbed_flat_section(3, 8, 1e-2, seed=seed)
        res = run_flow(s, FlowConfig(dt=1e-3, steps=25))
        E = [r["E_n-1"] + r["E_n"] for r in res.rows]
        assert max(E[k + 1] - E[k] for k in range(len(E) - 1)) < 1e-12
        assert max(abs(r["max_psi"] - 1) for r in res.rows) <= 1e-15
        assert max(abs(r["min_psi"] - 1) for r in res.rows) <= 1e-15


def test_translation_equivariance():
    s = perturbed_flat_section(3, 8, 1e-2, seed=4)
    rolled = SectionField(
        s.torus, np.roll(s.metric, 3, axis=1), np.roll(s.spinor, 3, axis=1), s.clifford
    )
    cfg = FlowConfig(dt=1e-3, steps=3)
    a = run_flow(s, cfg).final
    b = run_flow(rolled, cfg).final
    np.testing.assert_array_equal(np.roll(a.metric, 3, axis=1), b.metric)
    np.testing.assert_array_equal(np.roll(a.spinor, 3, axis=1), b.spinor)


def test_rk4_more_accurate_than_euler():
    s = perturbed_flat_section(3, 8, 1e-2, seed=5)
    ref = run_flow(s, FlowConfig(dt=1.25e-4, steps=32, integrator="rk4")).final
    eul = run_flow(s, FlowConfig(dt=1e-3, steps=4)).final
    rk4 = run_flow(s, FlowConfig(dt=1e-3, steps=4, integrator="rk4")).final
    err_eul = np.abs(eul.metric - ref.metric).max()
    err_rk4 = np.abs(rk4.metric - ref.metric).max()
    assert err_rk4 < 0.1 * err_eul


def test_deturck_energy_series_matches_plain():
    s = perturbed_flat_section(3, 8, 1e-2, seed=6)
    bg = np.tile(np.eye(3), s.torus.shape + (1, 1))
    dt, steps = 2e-4, 12
    plain = run_flow(s, FlowConfig(dt=dt, steps=steps))
    plain2 = run_flow(s, FlowConfig(dt=dt / 2, steps=2 * steps))
    dtk = run_flow(s, FlowConfig(dt=dt, steps=steps, deturck=True, background_metric=bg))
    dtk2 = run_flow(s, FlowConfig(dt=dt / 2, steps=2 * steps, deturck=True, background_metric=bg))
    Ep = np.array([r["E_n-1"] + r["E_n"] for r in plain.rows])
    Ep2 = np.array([r["E_n-1"] + r["E_n"] for r in plain2.rows])[::2]
    Ed = np.array([r["E_n-1"] + r["E_n"] for r in dtk.rows])
    Ed2 = np.array([r["E_n-1"] + r["E_n"] for r in dtk2.rows])[::2]
    trunc = np.abs(Ep - Ep2).max() + np.abs(Ed - Ed2).max()
    assert np.abs(Ep - Ed).max() <= 10.0 * trunc


def test_deturck_pullback_field_level():
    # the integrated diffeomorphism carries the De Turck solution to the
    # plain one; the pointwise energy density is a scalar, so
    # dens_deturck(y) ~ dens_plain(f(y)) up to integration error
    from spinflow.energy import energy_density

    s = perturbed_flat_section(3, 16, 1e-2, seed=8)
    dt, steps = 2e-4, 20
    bg = np.tile(np.eye(3), s.torus.shape + (1, 1))
    plain = run_flow(s, FlowConfig(dt=dt, steps=steps))
    dtk = run_flow(s, FlowConfig(dt=dt, steps=steps, deturck=True, background_metric=bg), record_x=True)
    pts = integrate_diffeo(dtk.x_fields, s.torus, dt, substeps=2, sign=+1.0)
    dens_p = energy_density(plain.final, "E_n-1") + energy_density(plain.final, "E_n")
    dens_d = energy_density(dtk.final, "E_n-1") + energy_density(dtk.final, "E_n")
    sampled = fourier_sample(dens_p, pts, s.torus).reshape(s.torus.shape)
    mismatch_after = np.abs(dens_d - sampled).max()
    mismatch_naive = np.abs(dens_d - dens_p).max()
    scale = np.abs(dens_p).max()
    # pulling back must explain most of the naive mismatch
    assert mismatch_after < 0.2 * mismatch_naive
    assert mismatch_after < 0.05 * scale


def test_integrate_diffeo_zero_field():
    torus = LatticeTorus(3, 8)
    fields = [np.zeros(torus.shape + (3,)) for _ in range(4)]
    pts = integrate_diffeo(fields, torus, dt=0.1)
    np.testing.assert_allclose(pts, torus.coordinates().reshape(-1, 3), atol=1e-14)


def test_integrate_diffeo_constant_translation():
    torus = LatticeTorus(3, 8)
    u = np.array([0.01, -0.02, 0.005])
    fields = [np.tile(u, torus.shape + (1,)) for _ in range(5)]
    pts = integrate_diffeo(fields, torus, dt=0.1)
    want = torus.coordinates().reshape(-1, 3) - 5 * 0.1 * u
    np.testing.assert_allclose(pts, want, atol=1e-12)


def test_integrate_diffeo_step_halving():
    torus = LatticeTorus(3, 8)
    X = torus.coordinates()
    field = np.zeros(torus.shape + (3,))
    field[..., 0] = 0.05 * np.sin(X[..., 1])
    fields = [field * (1 + 0.1 * k) for k in range(5)]
    coarse = integrate_diffeo(fields, torus, dt=0.05, substeps=1)
    fine = integrate_diffeo(fields, torus, dt=0.05, substeps=2)
    assert np.abs(coarse - fine).max() < 1e-10


def test_integrate_diffeo_half_cell_warning():
    torus = LatticeTorus(3, 8)
    u = np.array([1.0, 0.0, 0.0])
    fields = [np.tile(u, torus.shape + (1,)) for _ in range(5)]
    with pytest.warns(UserWarning):
        integrate_diffeo(fields, torus, dt=0.2)


def test_fourier_sample_exact_on_grid_and_modes():
    torus = LatticeTorus(3, 8)
    X = torus.coordinates()
    f = np.sin(X[..., 0]) + 0.3 * np.cos(2 * X[..., 1] - 0.4)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 2 * np.pi, size=(40, 3))
    vals = fourier_sample(f, pts, torus)
    want = np.sin(pts[:, 0]) + 0.3 * np.cos(2 * pts[:, 1] - 0.4)
    np.testing.assert_allclose(vals, want, atol=1e-12)


def test_symbol_estimate_scale():
    s = perturbed_flat_section(3, 8, 1e-2, seed=7)
    plain = symbol_eigenvalue_estimate(s)
    dtk = symbol_eigenvalue_estimate(s, deturck=True)
    assert 1.0 < plain < 100.0
    assert dtk > plain
