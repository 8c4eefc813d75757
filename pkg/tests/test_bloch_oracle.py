import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import eigvalsh

from speconion.bloch_oracle import (CutoffTooSmall, ResolutionError, band_edges, band_gaps, bloch_matrix,
                                    bloch_spectral_kernel, box_eigenpairs, box_hamiltonian, box_spectral_kernel,
                                    conjugated_projector_kernel, dirichlet_sine_sum, discrete_dirichlet_sum, uniform_integral)
from speconion.multiplier import FourierMultiplier, multiplier_kernel
from speconion.potential import TrigPotential
from speconion.symbolcalc import XiGrid

HBAR = 1 / 16


def test_free_diagonal_closed_form():
    v = bloch_spectral_kernel(TrigPotential.zero(), 0.0, 0.0, 1.0, HBAR, Nk=16).value
    assert v.real == pytest.approx(1 / (np.pi * HBAR), rel=1e-8)


def test_free_offdiagonal_closed_form():
    x, y, w = 0.3, -0.4, 1.1
    v = bloch_spectral_kernel(TrigPotential.zero(), x, y, w, HBAR, Nk=32, nodes=6).value
    exact = np.sin(w * abs(x - y) / HBAR) / (np.pi * abs(x - y))
    assert abs(v - exact) <= 1e-8 * abs(exact)


def test_constant_v0_shift():
    c = 1.7
    v = bloch_spectral_kernel(TrigPotential.constant(c), 0.2, 0.2, 1.0, HBAR, Nk=16).value
    assert v.real == pytest.approx(np.sqrt(1 - HBAR * c) / (np.pi * HBAR), rel=1e-7)


def test_constant_v1_completes_square():
    c = 0.8
    p = TrigPotential.from_coeffs(2 * np.pi, v1={0: c})
    v = bloch_spectral_kernel(p, 0.0, 0.0, 1.0, HBAR, Nk=32).value
    assert v.real == pytest.approx(np.sqrt(1 + (HBAR * c) ** 2) / (np.pi * HBAR), rel=1e-8)


def test_bloch_matrix_is_hermitian_and_checks_cutoff():
    p = TrigPotential.from_coeffs(2 * np.pi, {1: 0.5, -1: 0.5}, {2: 0.1j, -2: -0.1j})
    H = bloch_matrix(p, 0.3, 12, HBAR)
    assert np.abs(H - H.conj().T).max() < 1e-15
    with pytest.raises(CutoffTooSmall):
        bloch_matrix(p, 0.0, 5, HBAR)


def discrete_dirichlet_kernel(X, N, i, j, omega, hbar):
    # exact eigenpairs of the three-point Dirichlet Laplacian
    h = 2 * X / (N + 1)
    n = np.arange(1, N + 1)
    lam = 4 * hbar ** 2 / h ** 2 * np.sin(n * np.pi / (2 * (N + 1))) ** 2
    occ = n[lam <= omega ** 2]
    s = np.sin(np.outer(occ, [i + 1, j + 1]) * np.pi / (N + 1))
    return 2 / (N + 1) * np.sum(s[:, 0] * s[:, 1]) / h


def test_box_free_matches_discrete_sine_basis():
    X, N, w, hbar = 4.0, 801, 1.0, 1 / 8
    v = box_spectral_kernel(TrigPotential.zero(), X, N, 0.0, 0.0, w, hbar).value
    assert v.real == pytest.approx(discrete_dirichlet_kernel(X, N, 400, 400, w, hbar), rel=1e-10)


def test_box_free_matches_sine_sum_on_nodes():
    # the discrete eigenvectors are sampled sines; only the occupied count can differ
    X, w, hbar = 4.0, 1.0, 1 / 8
    ref = dirichlet_sine_sum(X, 0.0, 0.0, w, hbar)
    errs = [abs(box_spectral_kernel(TrigPotential.zero(), X, N, 0.0, 0.0, w, hbar).value - ref)
            for N in (2001, 8001)]
    assert max(errs) < 1e-10 * ref


@pytest.mark.parametrize("c", [0.0, 2.5, -4.0])
def test_box_constant_matches_discrete_closed_form(c):
    X, N, hbar = 4.0, 799, 1 / 8
    for w in (0.7, 1.0, 1.3):
        v = box_spectral_kernel(TrigPotential.constant(c), X, N, 0.5, -0.5, w, hbar).value
        assert abs(v - discrete_dirichlet_sum(X, N, 0.5, -0.5, w, hbar, c)) < 1e-10


def test_box_resolution_guard():
    with pytest.raises(ResolutionError):
        box_spectral_kernel(TrigPotential.zero(), 10.0, 101, 0.0, 0.0, 1.0, HBAR)
    with pytest.raises(ValueError):
        box_spectral_kernel(TrigPotential.zero(), 4.0, 801, 3.0, 0.0, 1.0, 1 / 8)


def test_box_with_first_order_term_matches_dense():
    p = TrigPotential.from_coeffs(2 * np.pi, {1: 0.5, -1: 0.5}, {1: 0.2, -1: 0.2})
    diag, off, x = box_hamiltonian(p, 5.0, 200, HBAR)
    H = np.diag(diag.astype(complex)) + np.diag(off, 1) + np.diag(off.conj(), -1)
    lam, vec, _ = box_eigenpairs(p, 5.0, 200, HBAR, 1.0)
    dense = eigvalsh(H)
    assert np.allclose(lam, dense[dense <= 1.0], atol=1e-12)
    assert np.abs(H @ vec - vec * lam).max() < 1e-10


@pytest.mark.parametrize("eps", [1e-3, 1e-4])
def test_first_gap_width_first_order(eps):
    # gap n opens at hbar^2 (n/2)^2 with width 2 hbar |V0hat(n)| + O(eps^2)
    p = TrigPotential.cosine(2 * eps)
    gaps = band_gaps(p, 1.0, nbands=3)
    n, center, width = gaps[0]
    assert n == 1 and center == pytest.approx(0.25, abs=1e-2)
    assert width == pytest.approx(2 * eps, rel=10 * eps)


def test_free_bands_touch():
    gaps = band_gaps(TrigPotential.zero(), 1.0, nbands=5)
    assert all(abs(w) < 1e-12 for _, _, w in gaps)


def test_mpmath_edges_agree_with_double():
    p = TrigPotential.cosine(2.0)
    lo, hi = band_edges(p, 1.0, 4, M=20)
    lo_mp, hi_mp = band_edges(p, 1.0, 4, M=20, dps=30)
    assert np.allclose(lo, [float(v) for v in lo_mp], atol=1e-12)
    assert np.allclose(hi, [float(v) for v in hi_mp], atol=1e-12)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.05, 4), st.integers(0, 7))
def test_uniform_integral_exact_for_polynomials(lo, length, degree):
    h = 0.1
    x0 = lo - 1.0
    xs = x0 + h * np.arange(int((length + 2.5) / h) + 8)
    coef = np.arange(1, degree + 2, dtype=float)[::-1] / 7
    f = np.polyval(coef, xs)
    P = np.polyint(coef)
    exact = np.polyval(P, lo + length) - np.polyval(P, lo)
    assert uniform_integral(f, x0, h, lo, lo + length) == pytest.approx(exact, rel=1e-9, abs=1e-9)


def test_uniform_integral_rejects_short_samples():
    with pytest.raises(ValueError):
        uniform_integral(np.ones(10), 0.0, 0.1, 0.0, 0.9)


def test_conjugated_kernel_without_log_is_multiplier():
    g = XiGrid(HBAR, 2 * np.pi, 3.5)
    m = FourierMultiplier.constant(g, 0.0, (0.5, 1.5))
    a = conjugated_projector_kernel(None, m, TrigPotential.zero(), 0.0, 0.0, 1.0, HBAR)
    b = multiplier_kernel(m, 0.0, 0.0, 1.0, HBAR)
    assert a.method == "conjugated" and a.value == b.value
