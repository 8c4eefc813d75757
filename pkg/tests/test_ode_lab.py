import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speconion.ode_lab import (EnergyState, GlueError, energy_ratio_experiment, free_evolve, glue_solutions,
                               gronwall_check, lift_state, lyapunov_estimate, prefix_products, reduced_state,
                               remove_first_order, step_matrices, transfer_matrix, transfer_propagate)
from speconion.potential import TrigPotential, evaluate, random_trig

HBAR = 1 / 16


def constant_solution(c, omega, hbar, u0, du0, x):
    k = np.sqrt(omega ** 2 - hbar * c + 0j) / hbar
    u = u0 * np.cos(k * x) + du0 * np.sin(k * x) / k
    du = -u0 * k * np.sin(k * x) + du0 * np.cos(k * x)
    return u, du


@pytest.mark.parametrize("c", [0.0, 3.0, -5.0])
def test_constant_potential_closed_form(c):
    s0 = EnergyState.from_derivative(1.0, 2.0, 0.0, 1.0, HBAR)
    res = transfer_propagate(TrigPotential.constant(c), s0, 3.0)
    u, du = constant_solution(c, 1.0, HBAR, 1.0, 2.0, res.xs)
    ed = np.abs(u) ** 2 + np.abs(HBAR * du) ** 2
    assert abs(res.state.u - u[-1]) < 1e-10 and abs(res.state.du - du[-1]) < 1e-8
    assert np.abs(res.ed - ed).max() < 1e-10 * ed.max()


def test_plane_wave_energy_density_is_constant():
    s0 = EnergyState(1.0, 1j, 0.0, 1.0, HBAR)
    res = transfer_propagate(TrigPotential.zero(), s0, 10.0)
    assert np.ptp(res.ed) < 1e-12


def test_reversibility_and_determinant():
    p = random_trig(np.random.default_rng(3), nmodes=3)
    T = transfer_matrix(p, 0.0, 5.0, 1.0, HBAR)
    B = transfer_matrix(p, 5.0, 0.0, 1.0, HBAR)
    assert np.abs(B @ T - np.eye(2)).max() < 1e-11
    assert abs(np.linalg.det(T) - 1) < 1e-11


def test_determinant_with_first_order_term():
    # tr A = -2i V1, so det T = exp(-2i int V1)
    p = TrigPotential.from_coeffs(2 * np.pi, {1: 0.5, -1: 0.5}, {0: 0.3, 1: 0.1, -1: 0.1})
    _, phase = remove_first_order(p, HBAR)
    T = transfer_matrix(p, 0.0, 4.0, 1.0, HBAR)
    assert abs(np.linalg.det(T) - np.exp(-2j * phase(4.0))) < 1e-11


def test_prefix_products_match_sequential():
    p = TrigPotential.cosine(2.0)
    M = step_matrices(p, 0.0, 1.0, 1.0, HBAR, 37)
    P = prefix_products(M)
    acc = np.eye(2)
    for j in range(37):
        acc = M[j] @ acc
        assert np.abs(P[j] - acc).max() < 1e-13


def test_first_order_removal_consistency():
    p = TrigPotential.from_coeffs(2 * np.pi, {2: 0.4, -2: 0.4}, {1: 0.2, -1: 0.2})
    q, phase = remove_first_order(p, HBAR)
    assert not np.any(q.v1)
    x = np.linspace(-3, 3, 13)
    assert np.allclose(evaluate(q, x), evaluate(p, x) - HBAR * evaluate(p, x, "V1") ** 2)
    s_u = EnergyState.from_derivative(0.7, -1.1, 0.0, 1.0, HBAR)
    direct = transfer_propagate(p, s_u, 2.5, trace=False).state
    via = lift_state(transfer_propagate(q, reduced_state(s_u, p), 2.5, trace=False).state, p)
    assert abs(direct.u - via.u) < 1e-9 and abs(direct.w - via.w) < 1e-9


def test_lift_and_reduce_are_inverse():
    p = TrigPotential.from_coeffs(2 * np.pi, v1={1: 0.3, -1: 0.3})
    s = EnergyState(0.3 + 0.1j, -0.4j, 1.3, 1.0, HBAR)
    back = lift_state(reduced_state(s, p), p)
    assert abs(back.u - s.u) < 1e-14 and abs(back.w - s.w) < 1e-14


def test_gronwall_bound_is_sharp():
    # hbar c = 2 omega^2: u = e^x, w = e^x saturates ED(b)/ED(a) = exp(c |b - a| / omega)
    p = TrigPotential.constant(2.0)
    T = transfer_matrix(p, 0.0, 1.0, 1.0, 1.0)
    y = T @ np.array([1.0, 1.0])
    assert np.sum(np.abs(y) ** 2) / 2 == pytest.approx(np.exp(2.0), rel=1e-12)
    rep = gronwall_check(p, (0.0, 1.0), trials=100)
    assert rep.passed and rep.worst > 0.5


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2 ** 31))
def test_gronwall_holds_for_random_potentials(seed):
    p = random_trig(np.random.default_rng(seed), nmodes=3, amplitude=2.0)
    assert gronwall_check(p, (-1.0, 2.0), trials=100, hbar=0.5, seed=seed).passed


def test_gronwall_rejects_first_order_term():
    with pytest.raises(ValueError):
        gronwall_check(TrigPotential.cosine(0.1, which="V1"), (0.0, 1.0))


def test_glue_identical_states():
    s = EnergyState(0.6, -0.8, 0.0, 1.0, HBAR)
    g = glue_solutions(s, s, 1.0, HBAR)
    assert g.s == 0.0 and g.match_residual < 1e-15 and g.c1_mismatch < 1e-15


@pytest.mark.parametrize("frac", [0.25, 0.5, 0.9])
def test_glue_recovers_shift(frac):
    period = 2 * np.pi * HBAR
    s = EnergyState(0.6, -0.8, 0.0, 1.0, HBAR)
    r = free_evolve(s, frac * period)
    g = glue_solutions(s, r, 1.0, HBAR)
    assert g.s == pytest.approx(frac * period, abs=1e-14)
    assert g.match_residual < 1e-12 and g.c1_mismatch < 1e-12


def test_glue_random_pairs():
    rng = np.random.default_rng(11)
    for _ in range(100):
        a, b = rng.normal(size=2), 3 * rng.normal(size=2)
        g = glue_solutions(EnergyState(*a, 0.0, 1.0, HBAR), EnergyState(*b, 0.0, 1.0, HBAR), 1.0, HBAR)
        assert 0 <= g.s < 2 * np.pi * HBAR
        assert g.match_residual < 1e-10 and g.c1_mismatch < 1e-10


def test_glue_errors():
    z = EnergyState(0.0, 0.0, 0.0, 1.0, HBAR)
    s = EnergyState(1.0, 0.0, 0.0, 1.0, HBAR)
    with pytest.raises(GlueError):
        glue_solutions(z, s, 1.0, HBAR)
    with pytest.raises(GlueError):
        glue_solutions(EnergyState(1j, 0.0, 0.0, 1.0, HBAR), s, 1.0, HBAR)


def test_energy_ratio_decays_for_cosine():
    rep = energy_ratio_experiment(TrigPotential.cosine(2.0), [16, 32, 64], X=20.0, trials=4)
    assert rep.passed and rep.slope < -0.8


def test_energy_ratio_constant_slope_two():
    # ED ratio for V0 = c is 1 + c/rho^2 + O(rho^-4) at worst
    rep = energy_ratio_experiment(TrigPotential.constant(1.0), [16, 32, 64], X=5.0, trials=16)
    assert rep.slope == pytest.approx(-2.0, abs=0.05)


def test_lyapunov_of_bounded_oscillation_decays_like_one_over_x():
    p = TrigPotential.constant(1.0)
    e1 = lyapunov_estimate(p, 16, X=100.0)
    e2 = lyapunov_estimate(p, 16, X=1000.0)
    assert e1.stable and e2.stable
    assert e2.exponent < 0.2 * e1.exponent
