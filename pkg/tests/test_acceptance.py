"""End-to-end acceptance criteria at their stated tolerances.

Each test records one PASS/FAIL line, printed in the terminal summary.
Most criteria run through the CLI experiment runners with their default
settings. Two sub-claims are out of reach of any correct implementation
and run as strict xfails, so an unexpected pass is reported too.
"""

import os

import numpy as np
import pytest

from speconion import bloch_oracle as bo
from speconion import cli
from speconion import multiplier as mu
from speconion import ode_lab as ol
from speconion import wave_lab as wl
from speconion.bloch_oracle import realize_symbol_matrix
from speconion.cutoffs import plateau
from speconion.potential import TrigPotential
from speconion.symbolcalc import WeylSymbol, XiGrid, weyl_compose

pytestmark = pytest.mark.acceptance

WORKERS = min(8, os.cpu_count() or 1)
HBARS = (32, 64, 128)


@pytest.fixture(scope="module")
def run_cli(tmp_path_factory):
    """run_cli(experiment, config text) -> {check name: (passed, value)}."""
    def go(experiment, text):
        out = tmp_path_factory.mktemp(experiment) / "out"
        _, checks = cli.run(experiment, text, str(out), threads=WORKERS)
        return {name: (bool(ok), float(v)) for name, ok, v in checks}
    return go


# ---------------------------------------------------------------------------
# 1. free / constant exactness


def line_kernel(c, x, y, w, hbar):
    k = np.sqrt(w ** 2 - hbar * c) / hbar
    d = abs(x - y)
    return k / np.pi if d == 0 else np.sin(k * d) / (np.pi * d)


C1_HBAR = 1 / 32
C1_CASES = [(0.0, 1e-8, w, 0.0, y) for w in (0.9, 1.0, 1.1) for y in (0.0, 0.7)] + \
           [(1.5, 1e-7, w, 0.0, 0.0) for w in (0.9, 1.0, 1.1)]


def test_c1_bloch_and_multiplier_exact(report):
    worst = {"bloch": 0.0, "multiplier": 0.0}
    ok = True
    for c, tol, w, x, y in C1_CASES:
        p = TrigPotential.constant(c)
        exact = line_kernel(c, x, y, w, C1_HBAR)
        b = bo.bloch_spectral_kernel(p, x, y, w, C1_HBAR, Nk=32, nodes=6).value
        m = mu.FourierMultiplier.constant(XiGrid(C1_HBAR, 2 * np.pi, 3.5), c, (0.5, 1.5))
        v = mu.multiplier_kernel(m, x, y, w, C1_HBAR).value
        for name, val in (("bloch", b), ("multiplier", v)):
            err = abs(val - exact) / abs(exact)
            worst[name] = max(worst[name], err)
            ok &= err <= tol
    report("1 free/constant exactness (bloch, multiplier)", ok,
           ", ".join(f"{k} max rel err {v:.2e}" for k, v in worst.items()))
    assert ok


@pytest.mark.xfail(strict=True, reason="a Dirichlet box of half-width X differs from the infinite line by "
                                       "O(hbar/X) however fine the grid")
def test_c1_box_matches_infinite_line(report):
    X = 10.0
    N = bo.box_grid_size(X, 1.1, C1_HBAR, 2)
    worst_line = worst_box = 0.0
    for c, tol, w, x, y in C1_CASES:
        if x != y:
            continue
        v = bo.box_spectral_kernel(TrigPotential.constant(c), X, N, x, y, w, C1_HBAR).value.real
        exact = line_kernel(c, x, y, w, C1_HBAR)
        worst_line = max(worst_line, abs(v - exact) / exact)
        ref = bo.discrete_dirichlet_sum(X, N, x, y, w, C1_HBAR, c)
        worst_box = max(worst_box, abs(v - ref) / ref)
    assert worst_box < 1e-10
    ok = worst_line <= 1e-8
    report("1 free/constant exactness (box vs infinite line, doubled resolution)", ok,
           f"max rel err {worst_line:.2e}; vs the box's own closed form {worst_box:.1e}")
    assert ok


# ---------------------------------------------------------------------------
# 2. Weyl calculus


def test_c2_weyl_composition(report):
    rng = np.random.default_rng(2)
    ks = rng.uniform(0, 1, 10)
    g = XiGrid.for_quasimomenta(1 / 16, 2 * np.pi, 4.0, ks)
    cut = plateau(g.points, 1.0, 2.0)[None, :]

    def sym(t):
        v = rng.normal(size=(2 * t + 1, g.size)) + 1j * rng.normal(size=(2 * t + 1, g.size))
        return WeylSymbol(g, t, v * cut)

    M, pad = 20, 3
    worst = 0.0
    for _ in range(50):
        a, b = sym(int(rng.integers(0, 4))), sym(int(rng.integers(0, 4)))
        c = weyl_compose(a, b)
        for k in ks:
            P = realize_symbol_matrix(a, k, M + pad) @ realize_symbol_matrix(b, k, M + pad)
            worst = max(worst, np.abs(P[pad:-pad, pad:-pad] - realize_symbol_matrix(c, k, M)).max())
    ok = worst <= 1e-10
    report("2 Weyl composition vs matrix product (50 pairs x 10 k)", ok, f"max err {worst:.2e}")
    assert ok


# ---------------------------------------------------------------------------
# 3, 4. gauge pipeline


def gauge_ladder(run_cli, potential):
    return {n: run_cli("gauge", f"{potential}\n[gauge]\nhbar = 1/{n}\n") for n in HBARS}


@pytest.fixture(scope="module")
def cosine_gauge(run_cli):
    return gauge_ladder(run_cli, "[potential]\nkind = cosine\namplitude = 2")


@pytest.fixture(scope="module")
def first_order_gauge(run_cli):
    return gauge_ladder(run_cli, "[potential]\nkind = cosine\namplitude = 0.1\nwhich = V1")


def test_c3_gauge_kernel(report, cosine_gauge):
    errs = [cosine_gauge[n]["kernel_vs_bloch"][1] for n in HBARS]
    slope = float(np.polyfit(np.log(1 / np.array(HBARS, dtype=float)), np.log(errs), 1)[0])
    ok = max(errs) <= 1e-4 and all(b < a for a, b in zip(errs, errs[1:])) and slope >= 2
    report("3 gauge kernel vs Bloch, V0 = 2cos x", ok,
           "errors " + ", ".join(f"{e:.2e}" for e in errs) + f"; fitted exponent {slope:.1f}")
    assert ok


@pytest.mark.xfail(strict=True, reason="the parallel peel contracts by about 8 hbar per step for V0 = 2cos x; "
                                       "tau = 1e-8 sup|q| is out of reach within 6 steps on this hbar ladder")
def test_c3_gauge_residual(report, cosine_gauge):
    rows = [cosine_gauge[n] for n in HBARS]
    ok = all(r["residual<=tau"][0] and r["steps_per_layer"][0] for r in rows)
    report("3 gauge residual <= tau in <= 6 steps, V0 = 2cos x", ok,
           "; ".join(f"hbar=1/{n}: {r['residual<=tau'][1]:.2e} after {r['steps_per_layer'][1]:.0f} steps"
                     for n, r in zip(HBARS, rows)))
    assert ok


def test_c4_first_order_term(report, first_order_gauge):
    rows = [first_order_gauge[n] for n in HBARS]
    ok = all(r["residual<=tau"][0] and r["steps_per_layer"][0] and r["kernel_vs_bloch"][1] <= 1e-3 for r in rows)
    report("4 gauge with V1 = 0.1cos x", ok,
           "; ".join(f"hbar=1/{n}: residual {r['residual<=tau'][1]:.1e}, {r['steps_per_layer'][1]:.0f} steps, "
                     f"kernel err {r['kernel_vs_bloch'][1]:.1e}" for n, r in zip(HBARS, rows)))
    assert ok


# ---------------------------------------------------------------------------
# 5, 6. asymptotic expansion


@pytest.fixture(scope="module")
def asymptotics(run_cli):
    return run_cli("asymptotics", "[potential]\nkind = cosine\n")


def test_c5_diagonal_expansion(report, asymptotics):
    a0, exponent, odd = asymptotics["a0"], asymptotics["residual_exponent"], asymptotics["odd_term"]
    ok = a0[0] and exponent[0] and odd[0]
    report("5 diagonal expansion", ok,
           f"|a0 - 1/pi| = {abs(a0[1] - 1 / np.pi):.2e}, residual exponent {exponent[1]:.2f}, "
           f"odd coefficient {odd[1]:.2e}")
    assert ok


def test_c6_offdiagonal_leading_term(report, asymptotics):
    ok, err = asymptotics["g0"]
    report("6 off-diagonal leading term at |x - y| = 1", ok, f"max |g0 - target| = {err:.2e}")
    assert ok


# ---------------------------------------------------------------------------
# 7. comparison


def test_c7_comparison(report, run_cli):
    per = run_cli("compare", "[compare]\nmodification = periodize\n")["fitted_C"]
    well = run_cli("compare", "[compare]\nmodification = quadratic-well\n")["fitted_C"]
    ok = per[0] and well[0] and max(per[1], well[1]) <= 100
    report("7 comparison bound", ok, f"periodize C = {per[1]:.3g}, quadratic well C = {well[1]:.3g}")
    assert ok


# ---------------------------------------------------------------------------
# 8, 9. wave experiments


def test_c8_finite_speed_and_wave_compare(report, run_cli):
    r = run_cli("wave", "[potential]\nkind = cosine\n")
    ok = r["leak"][0] and r["wave_slope"][0]
    report("8 finite speed and wave comparison", ok,
           f"max leak {r['leak'][1]:.2e} ||u0||, slope {r['wave_slope'][1]:.2e} vs 10 delta = 0.1")
    assert ok


def test_c9_smoothed_projector_identity(report):
    hbar, X = 1 / 32, 4.0
    b = wl.BoxBackend(TrigPotential.zero(), X, bo.box_grid_size(X, 1.2, hbar, 2), hbar)
    k = wl.SmoothingKernel(hbar, 2.0)
    diffs = [abs(wl.smoothed_projector(b, k, 0.0, 0.0, w, "eigen") - wl.smoothed_projector(b, k, 0.0, 0.0, w, "wave"))
             for w in np.linspace(0.8, 1.2, 5)]
    ok = max(diffs) <= 1e-6
    report("9 smoothed projector eigen vs wave (5 energies)", ok, f"max diff {max(diffs):.2e}")
    assert ok


# ---------------------------------------------------------------------------
# 10, 11. ODE experiments


THREE = {"cosine": "kind = cosine", "random trig": "kind = random-trig\nseed = 0",
         "constant": "kind = constant\nvalue = 1"}


def test_c10_energy_rigidity(report, run_cli):
    parts, ok = [], True
    for name, kind in THREE.items():
        r = run_cli("ode-energy", f"[potential]\n{kind}\n")
        ok &= r["ed_ratio_slope"][0] and r["gronwall"][0]
        parts.append(f"{name}: slope {r['ed_ratio_slope'][1]:.2f}, Gronwall worst ratio/bound {r['gronwall'][1]:.2e}")
    report("10 energy rigidity", ok, "; ".join(parts))
    assert ok


def test_c11_gluing(report):
    rng = np.random.default_rng(11)
    hbar = 1 / 32
    worst, in_range = 0.0, True
    for _ in range(100):
        a, b = rng.normal(size=2), 3 * rng.normal(size=2)
        g = ol.glue_solutions(ol.EnergyState(*a, 0.0, 1.0, hbar), ol.EnergyState(*b, 0.0, 1.0, hbar), 1.0, hbar)
        worst = max(worst, g.match_residual, g.c1_mismatch)
        in_range &= 0 <= g.s < 2 * np.pi * hbar
    ok = worst < 1e-10 and in_range
    report("11 gluing (100 random pairs)", ok, f"max residual {worst:.2e}, all shifts within one period")
    assert ok


# ---------------------------------------------------------------------------
# 12, 13. gaps and Lyapunov proxy


def test_c12_gap_decay(report, run_cli):
    r = run_cli("gaps", "[potential]\nkind = cosine\n")
    mono, ratio = r["widths_decreasing"], r["width12/width6"]
    ok = mono[0] and ratio[0]
    report("12 gap widths", ok, f"strictly decreasing from n = 3: {mono[0]}, width12/width6 = {ratio[1]:.2e}")
    assert ok


def test_c13_lyapunov(report, run_cli):
    parts, ok = [], True
    for seed in (1, 2, 3):
        r = run_cli("lyapunov", f"[potential]\nkind = random-trig\nseed = {seed}\n")
        ok &= r["decay_64_256"][0]
        parts.append(f"seed {seed}: exponent at rho=256 {r['decay_64_256'][1]:.1e}")
    report("13 Lyapunov proxy", ok, "; ".join(parts))
    assert ok
