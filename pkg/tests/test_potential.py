import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speconion.cutoffs import band_cutoff, bump, plateau, smooth_step
from speconion.potential import (SampledPotential, TrigPotential, dumps, evaluate, loads, periodization_cutoff,
                                 periodize, random_trig, sample, weyl_symbol_of)
from speconion.symbolcalc import XiGrid


def test_smooth_step_limits():
    t = np.array([-1.0, 0.0, 0.5, 1.0, 2.0])
    s = smooth_step(t)
    assert s[0] == 0 and s[1] == 0 and s[3] == 1 and s[4] == 1
    assert s[2] == pytest.approx(0.5)


def test_plateau_and_bump_support():
    x = np.linspace(-3, 3, 601)
    c = plateau(x, 1.0, 2.0)
    assert np.all(c[np.abs(x) <= 1] == 1)
    assert np.all(c[np.abs(x) >= 2] == 0)
    assert np.all(bump(x)[np.abs(x) >= 1] == 0)


def test_band_cutoff_exact_zeros():
    x = np.linspace(-3, 3, 601)
    c = band_cutoff(x, 0.5, 1.5, 0.25, 2.5)
    assert np.all(c[(np.abs(x) >= 0.5) & (np.abs(x) <= 1.5)] == 1)
    assert np.all(c[np.abs(x) <= 0.25] == 0)
    assert np.all(c[np.abs(x) >= 2.5] == 0)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.0, 2.0), st.floats(0.1, 3.0))
def test_plateau_is_even_and_monotone(inner, width):
    x = np.linspace(0, inner + width + 1, 200)
    c = plateau(x, inner, inner + width)
    assert np.all(np.diff(c) <= 1e-15)
    assert np.allclose(c, plateau(-x, inner, inner + width))


def test_cosine_evaluation():
    p = TrigPotential.cosine(2.0)
    x = np.linspace(-5, 5, 11)
    assert np.allclose(evaluate(p, x), 2 * np.cos(x), atol=1e-14)
    assert np.allclose(evaluate(p, x, "V0'"), -2 * np.sin(x), atol=1e-14)
    assert p.sup_norm() == pytest.approx(2.0)


def test_non_hermitian_rejected():
    with pytest.raises(ValueError):
        TrigPotential.from_coeffs(2 * np.pi, {1: 1.0, -1: 2.0})


def test_scaled_and_constant():
    p = TrigPotential.constant(3.0)
    assert p.is_x_independent()
    q = p.scaled(0.5)
    assert evaluate(q, 0.3) == pytest.approx(1.5)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000))
def test_random_trig_is_real_and_round_trips(seed):
    p = random_trig(np.random.default_rng(seed), v1_amplitude=0.3)
    x = np.linspace(-7, 7, 57)
    vals = np.exp(1j * np.multiply.outer(x, p.frequencies)) @ p.v0
    assert np.abs(vals.imag).max() < 1e-12
    q = loads(dumps(p))
    assert np.array_equal(q.v0, p.v0) and np.array_equal(q.v1, p.v1) and q.period == p.period


def test_loads_reports_line_numbers():
    with pytest.raises(ValueError, match="line 3"):
        loads("period 6.283\nV0\n1 2\n")


def test_sampled_grid_checks():
    x = np.linspace(-2, 2, 41)
    sp = SampledPotential.from_grid(x, np.cos(x))
    assert sp.extent == pytest.approx(2.0) and sp.step == pytest.approx(0.1)
    with pytest.raises(ValueError):
        SampledPotential.from_grid(x[:-1], np.cos(x[:-1]))


def test_periodize_agrees_on_core():
    f = lambda x: 2 * np.cos(x) + np.cos(np.sqrt(2) * x)
    sp = SampledPotential.from_function(f, 20.0, 1 / 32)
    P = 40.0
    pp = periodize(sp, P, 4.0)
    core = np.linspace(-P / 4, P / 4, 101)
    assert np.abs(evaluate(pp, core) - f(core)).max() < 1e-6
    w = periodization_cutoff(np.array([0.0, P / 2]), P, 4.0)
    assert w[0] == 1 and w[1] == 0


def test_periodize_rejects_wide_cutoff():
    sp = sample(TrigPotential.cosine(), 10.0, 0.1)
    with pytest.raises(ValueError):
        periodize(sp, 20.0, 5.0)


def test_weyl_symbol_of_first_order_term():
    p = TrigPotential.cosine(0.4, which="V1")
    g = XiGrid(1 / 16, 2 * np.pi, 3.0)
    q = weyl_symbol_of(p, g)
    assert q.theta_max == 1
    assert np.allclose(q.mode(1), 2 * g.points * 0.2)
    assert np.all(q.mode(0) == 0)
