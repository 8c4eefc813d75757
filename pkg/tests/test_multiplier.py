import csv

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from speconion.multiplier import (FourierMultiplier, IllConditionedFit, WindowError, first_term_check,
                                  fit_expansion_diag, fit_expansion_offdiag, multiplier_kernel, nonsemiclassical,
                                  sublevel_intervals, write_samples_csv)
from speconion.potential import TrigPotential
from speconion.symbolcalc import XiGrid

HBAR = 1 / 16
RHOS = np.array([16, 23, 32, 45, 64, 91, 128], dtype=float)


def const_mult(c, hbar=HBAR, window=(0.5, 1.5)):
    return FourierMultiplier.constant(XiGrid(hbar, 2 * np.pi, 3.5), c, window)


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.6, 1.4))
def test_constant_multiplier_diagonal(c, w):
    v = multiplier_kernel(const_mult(c), 0.1, 0.1, w, HBAR).value
    assert v.real == pytest.approx(np.sqrt(w ** 2 - HBAR * c) / (np.pi * HBAR), rel=1e-12)
    assert abs(v.imag) < 1e-12


@settings(max_examples=30, deadline=None)
@given(st.floats(-3, 3), st.floats(0.6, 1.4), st.floats(0.05, 3))
def test_constant_multiplier_offdiagonal(c, w, d):
    v = multiplier_kernel(const_mult(c), d, 0.0, w, HBAR).value
    k = np.sqrt(w ** 2 - HBAR * c)
    assert abs(v - np.sin(k * d / HBAR) / (np.pi * d)) < 1e-10 / d


def test_second_derivative_kernel():
    v = multiplier_kernel(const_mult(0.0), 0.0, 0.0, 1.0, HBAR, deriv=(1, 1)).value
    assert v.real == pytest.approx(1 / (3 * np.pi * HBAR ** 3), rel=1e-12)
    assert abs(multiplier_kernel(const_mult(0.0), 0.0, 0.0, 1.0, HBAR, deriv=(1, 0)).value) < 1e-8


def test_sublevel_intervals_and_window():
    (lo, hi), = sublevel_intervals(const_mult(2.0), 1.0, HBAR)
    assert hi == pytest.approx(np.sqrt(1 - 2 * HBAR), abs=1e-14) and lo == pytest.approx(-hi, abs=1e-14)
    with pytest.raises(WindowError):
        sublevel_intervals(const_mult(0.0), 1.7, HBAR)


def test_multiplier_rejects_complex_and_bad_shape():
    g = XiGrid(HBAR, 2 * np.pi, 3.5)
    with pytest.raises(ValueError):
        FourierMultiplier(g, np.full(g.size, 1j), (0.5, 1.5))
    with pytest.raises(ValueError):
        FourierMultiplier(g, np.zeros(3), (0.5, 1.5))


def constant_ladder(c, x=0.0, y=0.0):
    out = []
    for rho in RHOS:
        p, hbar = nonsemiclassical(TrigPotential.constant(c), rho)
        m = const_mult(p.coeff("V0", 0).real, hbar)
        out.append(multiplier_kernel(m, x, y, 1.0, hbar))
    return out


def test_nonsemiclassical_scaling():
    p, hbar = nonsemiclassical(TrigPotential.cosine(2.0), 32)
    assert hbar == 1 / 32 and p.sup_norm() == pytest.approx(2.0 / 32)


def test_diagonal_fit_recovers_constant_expansion():
    c = 1.5
    fit = fit_expansion_diag(constant_ladder(c), RHOS, 2)
    assert fit.coefficient("a0") == pytest.approx(1 / np.pi, abs=1e-10)
    assert fit.coefficient("a1") == pytest.approx(-c / (2 * np.pi), rel=1e-5)
    assert fit.exponent > 2.5 and not fit.flagged


def test_diagonal_fit_odd_term_vanishes():
    fit = fit_expansion_diag(constant_ladder(1.5), RHOS, 2, include_odd=True)
    assert abs(fit.coefficient("odd1")) < 1e-6


def test_offdiagonal_fit_leading_term():
    d = 1.0
    fit = fit_expansion_offdiag(constant_ladder(0.7, d, 0.0), RHOS, d, 2)
    # the phase sqrt(rho^2 - c) d has an infinite series; seven rungs leave ~1e-7 bias
    assert abs(fit.coefficient("g0+") - 1 / (2j * np.pi * d)) < 1e-5
    assert abs(fit.coefficient("g0-") + 1 / (2j * np.pi * d)) < 1e-5


def test_fit_synthetic_series():
    a = [0.3, -0.2, 0.05]
    vals = RHOS * sum(ak * RHOS ** (-2 * k) for k, ak in enumerate(a))
    fit = fit_expansion_diag(vals, RHOS, 3, guard=0)
    assert np.allclose(fit.coefficients, a, atol=1e-9)


def test_fit_errors():
    with pytest.raises(ValueError):
        fit_expansion_diag(np.ones(3), RHOS[:3], 2)
    with pytest.raises(IllConditionedFit):
        fit_expansion_diag(np.ones(4), np.full(4, 2.0), 2, guard=0)


def test_first_term_check_on_constant_backend():
    def kern(x, y, w, h):
        return multiplier_kernel(const_mult(0.0, h), x, y, w, h)
    rep = first_term_check(kern, [(0.0, 0.0), (0.5, 0.0)], [1 / 8, 1 / 16, 1 / 32])
    assert rep.diagonal.max() < 1e-10 and rep.offdiagonal.max() < 1e-10


def test_samples_csv(tmp_path):
    samples = constant_ladder(0.0)[:2]
    path = tmp_path / "s.csv"
    write_samples_csv(samples, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# speconion spectral-samples")
    rows = list(csv.reader(lines[1:]))
    assert rows[0] == ["method", "x", "y", "omega", "re", "im"]
    assert float(rows[1][4]) == samples[0].value.real
