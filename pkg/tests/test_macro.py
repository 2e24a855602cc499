import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nashkin import macro as mc
from nashkin import nash
from nashkin.errors import ConfigurationError, DomainError
from nashkin.expressions import Profile


# ---------------------------------------------------------------- profiles

def test_profile_forms():
    rho = np.array([0.5, 1.0, 2.0])
    assert np.array_equal(Profile(2.0)(rho), [2.0, 2.0, 2.0])
    assert np.allclose(Profile("0.1 / rho")(rho), [0.2, 0.1, 0.05])
    assert np.allclose(Profile("exp(-rho) + sqrt(rho) * pi")(rho), np.exp(-rho) + np.sqrt(rho) * math.pi)
    assert np.allclose(Profile("-rho**2 + maximum(rho, 1)")(rho), -rho**2 + np.maximum(rho, 1))
    assert np.allclose(Profile(lambda r: 3 * r)(rho), 3 * rho)
    assert Profile("1")(np.float64(4.0)).shape == ()


@pytest.mark.parametrize("text", [
    "__import__('os')", "rho.real", "x + 1", "open(rho)", "rho if rho else 1",
    "lambda: 1", "rho[0]", "1 +", "True", "sin(rho, k=1)",
])
def test_profile_rejects_unsafe_or_invalid(text):
    with pytest.raises(ConfigurationError):
        Profile(text)


def test_profile_check():
    with pytest.raises(ConfigurationError, match="not finite"):
        Profile("1 / (rho - 1)").check(np.array([0.5, 1.0]))
    with pytest.raises(ConfigurationError):
        Profile([1, 2])


# ---------------------------------------------------------------- coefficients

def test_coefficients_examples():
    tab = mc.build_coefficients(0.3, 2, 1.0, 0.0)
    assert tab.c_of_rho(np.array(0.5)) == 0.0
    assert tab.c_of_rho(np.array(0.6)) == 0.0
    c1 = float(tab.c_of_rho(np.array(1.0)))
    kappa = nash.kappa_solve(0.3, 2).kappa_d
    assert abs(c1 / 0.3 - kappa) < 1e-6 * kappa
    assert abs(nash.order_parameter(c1 / 0.3, 2) - c1) < 1e-10


def test_table_interpolation_accuracy():
    tab = mc.build_coefficients(0.3, 2, 1.0, 0.0, rho_range=(1e-3, 10.0), samples=256)
    rng = np.random.default_rng(0)
    rho = rng.uniform(0.61, 10.0, 100)
    de = 0.3 / rho
    direct = de * nash.concentration(de, 2)
    assert np.max(np.abs(tab.c_of_rho(rho) - direct)) < 1e-6


def test_table_extends_beyond_range_by_direct_solve():
    tab = mc.build_coefficients(0.3, 2, 1.0, 0.0, rho_range=(1e-3, 2.0))
    de = 0.3 / 5.0
    assert float(tab.c_of_rho(np.array(5.0))) == pytest.approx(de * nash.concentration(de, 2), abs=1e-14)


def test_table_is_monotone_and_continuous_at_threshold():
    tab = mc.build_coefficients(0.2, 3, 1.0, 0.0)
    rho = np.linspace(0.01, 10, 3000)
    cs = tab.c_of_rho(rho)
    assert np.all(cs[rho <= 0.6] == 0.0)
    assert np.all(np.diff(cs) >= 0)
    assert np.all(np.diff(cs[rho > 0.61]) > 0)
    assert float(tab.c_of_rho(np.array(0.6 + 1e-8))) < 1e-3


def test_coefficient_errors():
    with pytest.raises(ConfigurationError):
        mc.build_coefficients(0.3, 2, "foo(rho)", 0.0)
    with pytest.raises(ConfigurationError):
        mc.build_coefficients(0.3, 2, 1.0, "log(rho - 2)", rho_range=(1.0, 3.0))
    with pytest.raises(ConfigurationError):
        mc.build_coefficients(0.3, 2, 1.0, 0.0, rho_range=(2.0, 1.0))
    with pytest.raises(ConfigurationError):
        mc.build_coefficients(0.0, 2, 1.0, 0.0)


# ---------------------------------------------------------------- stepping

def _coeffs(theta="0.1 / rho"):
    return mc.build_coefficients(0.3, 2, 1.0, theta)


def _bump(cells, amp=0.2, angle_amp=0.3):
    x = (np.arange(cells) + 0.5) / cells
    return mc.MacroFields(1.0 + amp * np.cos(2 * np.pi * x), angle_amp * np.sin(2 * np.pi * x))


def test_constant_states_are_exact():
    tab = _coeffs()
    for rho, angle in ((1.0, 0.4), (0.4, -2.0)):
        s = mc.MacroFields(np.full(64, rho), np.full(64, angle))
        out = mc.run(s, tab, 0.5)
        assert np.max(np.abs(out.final.rho - rho)) < 1e-12
        assert np.max(np.abs(out.final.angle - angle)) < 1e-12
    s2 = mc.MacroFields(np.full((16, 16), 1.3), np.full((16, 16), 2.0))
    out = mc.run(s2, tab, 0.2)
    assert np.max(np.abs(out.final.rho - 1.3)) < 1e-12
    assert np.max(np.abs(out.final.angle - 2.0)) < 1e-12


def test_zero_time_run_returns_initial_state():
    s = _bump(32)
    out = mc.run(s, _coeffs(), 0.0)
    assert out.steps == 0 and out.final is s


@settings(max_examples=15)
@given(st.floats(0.0, 0.5), st.floats(0.0, 1.5), st.integers(0, 3), st.sampled_from([1, 2]))
def test_mass_and_unit_orientation_per_step(amp, angle_amp, mode, dim):
    tab = _coeffs()
    cells = 32 if dim == 1 else 16
    x = (np.arange(cells) + 0.5) / cells
    if dim == 1:
        rho = 1.0 + amp * np.cos(2 * np.pi * (mode + 1) * x)
        angle = angle_amp * np.sin(2 * np.pi * x)
    else:
        X, Y = np.meshgrid(x, x, indexing="ij")
        rho = 1.0 + amp * np.cos(2 * np.pi * X) * np.sin(2 * np.pi * (mode + 1) * Y)
        angle = angle_amp * np.sin(2 * np.pi * Y)
    s = mc.MacroFields(rho, angle)
    m0 = s.mass()
    for _ in range(20):
        s = mc.step(s, tab, 0.9 * mc.stable_dt(s, tab))
        assert abs(s.mass() - m0) < 1e-12
        assert np.max(np.abs(np.linalg.norm(s.omega, axis=-1) - 1.0)) < 1e-12
        assert s.rho.min() >= 0.0


def test_cfl_violation_raises():
    s = _bump(32)
    tab = _coeffs()
    with pytest.raises(ConfigurationError, match="CFL"):
        mc.step(s, tab, 1.01 * mc.stable_dt(s, tab))


def test_wave_speed_includes_coupling():
    s = _bump(32)
    with_theta = mc.wave_speed(s, _coeffs("0.5"))
    without = mc.wave_speed(s, _coeffs(0.0))
    assert with_theta > without >= 1.0


def test_vacuum_edges_stay_nonnegative():
    tab = mc.build_coefficients(0.05, 2, 1.0, 0.0)
    rho = np.zeros(32)
    rho[10:14] = 2.0
    s = mc.MacroFields(rho, 0.0)
    out = mc.run(s, tab, 0.2, safety=1.0)
    assert out.final.rho.min() >= 0.0
    assert out.final.mass() == pytest.approx(s.mass(), abs=1e-12)


def test_positivity_limiter_guards_overshooting_steps(monkeypatch, caplog):
    # under the CFL bound upwinding cannot undershoot, so lift the bound
    tab = mc.build_coefficients(0.05, 2, 1.0, 0.0)
    rho = np.zeros((8, 8))
    rho[3, 3] = 4.0
    s = mc.MacroFields(rho, np.pi / 4)
    monkeypatch.setattr(mc, "stable_dt", lambda state, coeffs: np.inf)
    with caplog.at_level("WARNING", logger="nashkin.macro"):
        out = mc.step(s, tab, 1.5 * s.dx)
    assert "limiter engaged" in caplog.text
    assert out.rho.min() >= 0.0
    assert out.mass() == pytest.approx(s.mass(), abs=1e-12)


def test_records_land_exactly():
    out = mc.run(_bump(32), _coeffs(), 0.3, record_times=[0.1, 0.2])
    assert out.times.tolist() == [0.0, 0.1, 0.2, 0.3]


def test_self_convergence_first_order():
    tab = _coeffs()
    finals = {}
    for cells in (64, 128, 256, 512):
        finals[cells] = mc.run(_bump(cells), tab, 0.15).final.rho
    errs = []
    for cells in (64, 128, 256):
        fine = finals[2 * cells].reshape(cells, 2).mean(axis=1)
        errs.append(np.abs(finals[cells] - fine).mean())
    rates = np.log2(np.array(errs[:-1]) / errs[1:])
    assert np.all(rates >= 0.8)


def test_fields_validation():
    with pytest.raises(DomainError):
        mc.MacroFields(np.ones((4, 5)), 0.0)
    with pytest.raises(DomainError):
        mc.MacroFields(np.ones((2, 2, 2)), 0.0)
    s = mc.MacroFields(np.ones(8), 0.5)
    assert s.angle.shape == (8,)
    assert s.mass() == pytest.approx(1.0)
