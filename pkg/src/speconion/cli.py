"""Experiment runner: ``speconion <experiment> --config <path> [--threads N] [--out DIR]``.

Configs are line-oriented ``key = value`` files with ``[section]`` headers:
``[run]``, ``[potential]`` and one section named after the experiment.
Exit status is 0 when every check passes, 1 on a failed check or numeric
error and 2 on usage or configuration errors.
"""

import argparse
import csv
import json
import os
import shutil
import sys
import tempfile
import time
from fractions import Fraction

import numpy as np

from . import __version__
from . import bloch_oracle as bo
from . import gauge
from . import multiplier as mu
from . import ode_lab as ol
from . import potential as pt
from . import symbolcalc as sc
from . import wave_lab as wl
from .plotting import plot_series

EXPERIMENTS = ("ldos", "gauge", "compare", "wave", "tauberian", "ode-energy", "lyapunov", "asymptotics", "gaps")


class ConfigError(ValueError):
    pass


# ----------------------------------------------------------------------------
# config schema: key -> (parser, default)


def _float(s):
    try:
        return float(Fraction(s.replace(" ", "")))
    except (ValueError, ZeroDivisionError):
        try:
            return float(s)
        except ValueError:
            raise ValueError(f"not a number: {s!r}") from None


def _int(s):
    v = _float(s)
    if v != int(v):
        raise ValueError(f"not an integer: {s!r}")
    return int(v)


def _floats(s):
    return [_float(t) for t in s.split(",") if t.strip()]


def _bool(s):
    t = s.strip().lower()
    if t in ("true", "yes", "1", "on"):
        return True
    if t in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _choice(*options):
    def parse(s):
        if s not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {s!r}")
        return s
    return parse


def _positive(parse):
    def check(s):
        v = parse(s)
        vals = v if isinstance(v, list) else [v]
        if not vals or any(not x > 0 for x in vals):
            raise ValueError(f"expected positive value(s), got {s!r}")
        return v
    return check


POS = _positive(_float)
POS_INT = _positive(_int)
POS_LIST = _positive(_floats)

SCHEMA = {
    "run": {
        "seed": (_int, 0),
        "label": (str, ""),
    },
    "potential": {
        "kind": (_choice("zero", "constant", "cosine", "random-trig", "file"), "cosine"),
        "amplitude": (_float, 2.0),
        "value": (_float, 0.0),
        "which": (_choice("V0", "V1"), "V0"),
        "period": (POS, 2 * np.pi),
        "nmodes": (POS_INT, 4),
        "decay": (_float, 1.0),
        "v1_amplitude": (_float, 0.0),
        "seed": (_int, 0),
        "path": (str, ""),
    },
    "ldos": {
        "hbar": (POS, 1 / 32), "x": (_float, 0.0), "y": (_float, 0.0),
        "omega_min": (POS, 0.9), "omega_max": (POS, 1.1), "n_omega": (POS_INT, 5),
        "method": (_choice("bloch", "box", "multiplier"), "bloch"),
        "Nk": (POS_INT, 256), "box_X": (POS, 10.0), "box_factor": (POS_INT, 2), "tol": (POS, 1e-8),
    },
    "gauge": {
        "hbar": (POS, 1 / 64), "a": (POS, 0.5), "b": (POS, 1.5), "tau": (POS, 1e-8),
        "Kp": (POS_INT, 6), "K": (POS_INT, 4), "delta": (POS, 0.25), "theta_min": (POS, 1.0),
        "substeps": (POS_INT, 1), "max_steps": (POS_INT, 6),
        "compare_kernel": (_bool, True), "x": (_float, 0.0), "y": (_float, 0.0), "omega": (POS, 1.0),
        "kernel_tol": (POS, 1e-4), "Nk": (POS_INT, 64),
    },
    "compare": {
        "modification": (_choice(*wl.MODIFICATIONS), "periodize"), "hbar": (POS, 1 / 32),
        "x": (_float, 0.0), "omega_min": (POS, 0.9), "omega_max": (POS, 1.1), "n_omega": (POS_INT, 11),
        "Ts": (POS_LIST, [4.0, 8.0, 16.0]), "R": (POS, 34.0), "R0": (_float, 0.0),
        "delta": (_float, -1.0), "threshold": (POS, 100.0),
    },
    "wave": {
        "hbar": (POS, 1 / 32), "R": (POS, 10.0), "R0": (POS, 2.0), "delta": (POS, 0.01),
        "leak_times": (POS_LIST, [1.0, 2.0, 4.0]), "leak_tol": (POS, 1e-6),
        "ts": (POS_LIST, [7.0, 9.0, 11.0, 13.0, 15.0, 17.0]), "slope_factor": (POS, 10.0),
    },
    "tauberian": {
        "hbar": (POS, 1 / 32), "T": (POS, 8.0), "a": (POS, 0.9), "b": (POS, 1.1),
        "reference": (_choice("free", "box"), "free"), "box_X": (POS, 10.0),
        "n_samples": (POS_INT, 4001), "C_max": (POS, 4.0), "step_factor": (POS, 4.0),
    },
    "ode-energy": {
        "rhos": (POS_LIST, [16.0, 32.0, 64.0, 128.0, 256.0, 512.0]), "X": (POS, 100.0),
        "trials": (POS_INT, 8), "slope_max": (_float, -0.8),
        "gronwall_trials": (POS_INT, 100), "gronwall_length": (POS, 10.0),
        "gronwall_hbar": (POS, 1.0), "gronwall_omega": (POS, 1.0),
    },
    "lyapunov": {
        "rhos": (POS_LIST, [64.0, 256.0]), "X": (POS, 1e4), "phases": (POS_INT, 8),
    },
    "asymptotics": {
        "rhos": (POS_LIST, [16.0, 23.0, 32.0, 45.0, 64.0, 91.0, 128.0]), "x": (_float, 0.0),
        "distance": (POS, 1.0), "N": (POS_INT, 2), "Nk": (POS_INT, 64),
        "a0_tol": (POS, 1e-4), "odd_tol": (POS, 1e-3), "g0_tol": (POS, 1e-3),
    },
    "gaps": {
        "hbar": (POS, 1.0), "nbands": (POS_INT, 14), "dps": (_int, 60),
        "monotone_from": (POS_INT, 3), "ratio_pair": (POS_LIST, [6.0, 12.0]), "ratio_max": (POS, 1e-3),
    },
}


def parse_config(text, experiment, source="<config>"):
    """Sections -> {key: value} with defaults filled in; errors carry line numbers."""
    allowed = {"run", "potential", experiment}
    raw = {s: {} for s in allowed}
    section = None
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        where = f"{source}:{lineno}"
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError(f"{where}: malformed section header {line!r}")
            section = line[1:-1].strip()
            if section not in allowed:
                raise ConfigError(f"{where}: unknown section [{section}] for experiment {experiment!r}")
            continue
        if "=" not in line:
            raise ConfigError(f"{where}: expected 'key = value'")
        if section is None:
            raise ConfigError(f"{where}: key outside of any section")
        key, value = (t.strip() for t in line.split("=", 1))
        if key not in SCHEMA[section]:
            raise ConfigError(f"{where}: unknown key {key!r} in [{section}]")
        if key in raw[section]:
            raise ConfigError(f"{where}: duplicate key {key!r}")
        parse = SCHEMA[section][key][0]
        try:
            raw[section][key] = parse(value)
        except ValueError as exc:
            raise ConfigError(f"{where}: {key}: {exc}") from None
    out = {}
    for s in allowed:
        out[s] = {k: raw[s].get(k, d) for k, (_, d) in SCHEMA[s].items()}
    return out


def build_potential(spec, base_dir="."):
    kind = spec["kind"]
    L = spec["period"]
    if kind == "zero":
        return pt.TrigPotential.zero(L)
    if kind == "constant":
        return pt.TrigPotential.constant(spec["value"], L)
    if kind == "cosine":
        return pt.TrigPotential.cosine(spec["amplitude"], L, spec["which"])
    if kind == "random-trig":
        rng = np.random.default_rng(spec["seed"])
        return pt.random_trig(rng, L, spec["nmodes"], spec["amplitude"], spec["decay"], spec["v1_amplitude"])
    if not spec["path"]:
        raise ConfigError("potential kind 'file' needs a path")
    path = spec["path"] if os.path.isabs(spec["path"]) else os.path.join(base_dir, spec["path"])
    try:
        return pt.load(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"potential file {path}: {exc}") from None


# ----------------------------------------------------------------------------
# experiments; each returns a list of (check name, passed, value)


def _write_rows(path, schema, header, rows):
    with open(path, "w", newline="") as fh:
        fh.write(f"# speconion {schema} v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _exact_constant(p, x, y, omega, hbar):
    c0 = p.v0[p.nmax].real
    c1 = p.v1[p.nmax].real
    if c1 != 0:
        return None
    if omega ** 2 <= hbar * c0:
        return 0.0
    k = np.sqrt(omega ** 2 - hbar * c0) / hbar
    d = abs(x - y)
    return k / np.pi if d == 0 else np.sin(k * d) / (np.pi * d)


def _peel(p, prm, hbar):
    cfg = gauge.PeelConfig(prm.get("a", 0.5), prm.get("b", 1.5), delta=prm.get("delta", 0.25),
                           theta_min=prm.get("theta_min", 1.0), Kp=prm.get("Kp", 6), K=prm.get("K", 4),
                           tau=prm.get("tau", 1e-8), substeps=prm.get("substeps", 1))
    q = pt.weyl_symbol_of(p, cfg.grid(hbar, p.period))
    mult, log = gauge.onion_peel(q, cfg, strict=False)
    return cfg, mult, log


def run_ldos(p, prm, out, ctx):
    hbar, x, y = prm["hbar"], prm["x"], prm["y"]
    omegas = np.linspace(prm["omega_min"], prm["omega_max"], prm["n_omega"])
    method = prm["method"]
    if method == "multiplier":
        if p.is_x_independent():
            xi_max = prm["omega_max"] + 2.0
            grid = sc.XiGrid(hbar, p.period, xi_max)
            c0, c1 = p.v0[p.nmax].real, p.v1[p.nmax].real
            mult = mu.FourierMultiplier(grid, c0 + 2 * c1 * grid.points, (0.5 * omegas[0], omegas[-1] + 1.0))
            fn = lambda o: mu.multiplier_kernel(mult, x, y, o, hbar)
        else:
            cfg, mult, log = _peel(p, {"a": 0.5 * omegas[0], "b": omegas[-1] + 0.25}, hbar)
            fn = lambda o: bo.conjugated_projector_kernel(log, mult, p, x, y, o, hbar)
    elif method == "bloch":
        fn = lambda o: bo.bloch_spectral_kernel(p, x, y, o, hbar, Nk=prm["Nk"])
    else:
        X = prm["box_X"]
        N = bo.box_grid_size(X, omegas[-1], hbar, prm["box_factor"])
        fn = lambda o: bo.box_spectral_kernel(p, X, N, x, y, o, hbar)
    samples = [fn(o) for o in omegas]
    if not p.is_x_independent():
        exact = [None] * omegas.size
    elif method == "box" and p.v1[p.nmax] == 0:
        # the box has its own closed form; the infinite-line one differs by O(hbar / X)
        c0 = p.v0[p.nmax].real
        exact = [bo.discrete_dirichlet_sum(X, N, x, y, o, hbar, c0) for o in omegas]
    else:
        exact = [_exact_constant(p, x, y, o, hbar) for o in omegas]
    rows = [(s.method, s.x, s.y, s.omega, s.value.real, s.value.imag, "" if e is None else float(e))
            for s, e in zip(samples, exact)]
    _write_rows(os.path.join(out, "ldos.csv"), "ldos", ["method", "x", "y", "omega", "re", "im", "exact"], rows)
    plot_series(os.path.join(out, "ldos.svg"), omegas, {f"{method} E(x,y,omega)": [s.value.real for s in samples]},
                "omega", "E")
    if exact[0] is None:
        return [("finite", bool(all(np.isfinite(s.value) for s in samples)), 0.0)]
    err = max(abs(s.value - e) / max(abs(e), 1e-300) for s, e in zip(samples, exact))
    return [("exact_closed_form", bool(err <= prm["tol"]), float(err))]


def run_gauge(p, prm, out, ctx):
    hbar = prm["hbar"]
    cfg, mult, log = _peel(p, prm, hbar)
    log.save(os.path.join(out, "gauge_log"))
    rows = [(l.index, i, float(r)) for l in log.layers for i, r in enumerate(l.residuals)]
    _write_rows(os.path.join(out, "residuals.csv"), "gauge-residuals", ["layer", "step", "residual"], rows)
    if log.layers and log.layers[0].residuals:
        res = log.layers[0].residuals
        plot_series(os.path.join(out, "residuals.svg"), list(range(len(res))), {"layer 0": res},
                    "parallel step", "residual", logy=True)
    tau = gauge._tau(pt.weyl_symbol_of(p, cfg.grid(hbar, p.period)), cfg)
    final = float(log.final_residual())
    steps = max((l.steps for l in log.layers), default=0)
    checks = [("residual<=tau", bool(final <= tau and all(l.converged for l in log.layers)), final),
              ("steps_per_layer", bool(steps <= prm["max_steps"]), float(steps))]
    if prm["compare_kernel"]:
        v = bo.conjugated_projector_kernel(log, mult, p, prm["x"], prm["y"], prm["omega"], hbar).value
        ref = bo.bloch_spectral_kernel(p, prm["x"], prm["y"], prm["omega"], hbar, Nk=prm["Nk"]).value
        _write_rows(os.path.join(out, "kernel.csv"), "gauge-kernel", ["x", "y", "omega", "conjugated", "bloch"],
                    [(prm["x"], prm["y"], prm["omega"], float(v.real), float(ref.real))])
        checks.append(("kernel_vs_bloch", bool(abs(v - ref) <= prm["kernel_tol"]), float(abs(v - ref))))
    return checks


def run_compare(p, prm, out, ctx):
    delta = None if prm["delta"] < 0 else prm["delta"]
    rep = wl.ldos_compare_experiment(p, prm["modification"], prm["x"], (prm["omega_min"], prm["omega_max"]),
                                     prm["Ts"], prm["R"], prm["hbar"], R0=prm["R0"], delta=delta,
                                     n_omega=prm["n_omega"])
    rep.threshold = prm["threshold"]
    rep.write_csv(os.path.join(out, "compare.csv"))
    bound = rep.hbar / rep.Ts + rep.delta * rep.Ts
    plot_series(os.path.join(out, "compare.svg"), rep.Ts,
                {"max |E0 - E1|": np.full(rep.Ts.size, rep.diffs.max()), "C (hbar/T + delta T)": rep.C * bound},
                "T", "difference", logy=True)
    return [("fitted_C", rep.passed, rep.C)]


def run_wave(p, prm, out, ctx):
    hbar, R, R0, d = prm["hbar"], prm["R"], prm["R0"], prm["delta"]
    leaks = [wl.finite_speed_check(p, 0.0, R0, t, hbar, relative=True) for t in prm["leak_times"]]
    f0 = lambda x: pt.evaluate(p, x, "V0")
    f1 = lambda x: pt.evaluate(p, x, "V0") + d * (np.abs(x) > R) * np.cos(x)
    ws = wl.wave_compare_sweep(f0, f1, R, R0, prm["ts"], hbar, d)
    _write_rows(os.path.join(out, "leak.csv"), "wave-leak", ["t", "leaked_mass_relative"], zip(prm["leak_times"], leaks))
    _write_rows(os.path.join(out, "wave_compare.csv"), "wave-compare", ["t", "diff_over_H1"], zip(ws.ts, ws.diffs))
    plot_series(os.path.join(out, "leak.svg"), prm["leak_times"], {"leaked mass / ||u0||": np.maximum(leaks, 1e-17)},
                "t", "relative mass", logy=True)
    plot_series(os.path.join(out, "wave_compare.svg"), ws.ts, {"||diff|| / ||u0||_H1": ws.diffs}, "t", "difference")
    worst = max(leaks)
    return [("leak", bool(worst < prm["leak_tol"]), float(worst)),
            ("wave_slope", bool(ws.passed(prm["slope_factor"])), float(ws.slope))]


def run_tauberian(p, prm, out, ctx):
    hbar, T = prm["hbar"], prm["T"]
    k = wl.SmoothingKernel(hbar, T)
    reach = k.tail * k.a
    omegas = np.linspace(prm["a"] - 1.5 * reach, prm["b"] + 1.5 * reach, prm["n_samples"])
    if prm["reference"] == "free":
        values = np.maximum(omegas, 0.0) / (np.pi * hbar)
    else:
        X = prm["box_X"]
        N = bo.box_grid_size(X, omegas[-1], hbar)
        lam, vec, xs = bo.box_eigenpairs(p, X, N, hbar, omegas[-1] ** 2)
        h = xs[1] - xs[0]
        i0 = bo._node(xs, 0.0, h)
        dens = np.abs(vec[i0]) ** 2 / h
        values = np.array([dens[lam <= o ** 2].sum() if o > 0 else 0.0 for o in omegas])
    rep = wl.tauberian_bounds_check(omegas, values, k, (prm["a"], prm["b"]))
    _write_rows(os.path.join(out, "tauberian.csv"), "tauberian",
                ["a", "L", "smoothing_error", "C_lip", "M", "C_mono", "concentration"],
                [(rep.a, rep.lip_constant, rep.smoothing_error, rep.lip_C, rep.density_max, rep.mono_C,
                  rep.concentration)])
    # a box staircase saturates the bound near its jumps: compare with nu's concentration instead
    limit = prm["C_max"] if prm["reference"] == "free" else prm["step_factor"] * rep.concentration
    return [("C_mono", bool(rep.mono_C <= limit), float(rep.mono_C))]


def run_ode_energy(p, prm, out, ctx):
    rep = ol.energy_ratio_experiment(p, prm["rhos"], prm["X"], prm["trials"], ctx["seed"], ctx["threads"])
    rep.write_csv(os.path.join(out, "ed_ratio.csv"))
    rep.plot(os.path.join(out, "ed_ratio.svg"))
    checks = [("ed_ratio_slope", bool(np.isfinite(rep.slope) and rep.slope <= prm["slope_max"])
               or bool(np.all(rep.ratios < ol.ED_FLOOR)), float(rep.slope))]
    q, _ = ol.remove_first_order(p, prm["gronwall_hbar"])
    g = ol.gronwall_check(q, (0.0, prm["gronwall_length"]), prm["gronwall_trials"], prm["gronwall_omega"],
                          prm["gronwall_hbar"], ctx["seed"])
    _write_rows(os.path.join(out, "gronwall.csv"), "gronwall", ["trial", "ratio", "bound"],
                [(i, float(r), g.bound) for i, r in enumerate(g.ratios)])
    checks.append(("gronwall", g.passed, g.worst))
    return checks


def run_lyapunov(p, prm, out, ctx):
    est = ol.lyapunov_ladder(p, prm["rhos"], prm["X"], prm["phases"], ctx["seed"], ctx["threads"])
    ol.write_lyapunov_csv(est, os.path.join(out, "lyapunov.csv"))
    plot_series(os.path.join(out, "lyapunov.svg"), [e.rho for e in est],
                {"exponent": [max(e.exponent, 1e-17) for e in est]}, "rho", "exponent", logy=True)
    checks = []
    for a, b in zip(est, est[1:]):
        ok = (a.below_floor and b.below_floor) or b.exponent <= (a.rho / b.rho) ** 2 * a.exponent
        checks.append((f"decay_{a.rho:g}_{b.rho:g}", bool(ok), float(b.exponent)))
    checks.append(("x_doubling_stable", bool(all(e.stable for e in est)), float(max(e.exponent_2x for e in est))))
    return checks


def run_asymptotics(p, prm, out, ctx):
    rhos = np.asarray(prm["rhos"])
    x, d, N = prm["x"], prm["distance"], prm["N"]
    diag, off = [], []
    for r in rhos:
        q, h = mu.nonsemiclassical(p, r)
        diag.append(bo.bloch_spectral_kernel(q, x, x, 1.0, h, Nk=prm["Nk"]).value.real)
        off.append(bo.bloch_spectral_kernel(q, x, x + d, 1.0, h, Nk=prm["Nk"]).value)
    fd = mu.fit_expansion_diag(diag, rhos, N)
    fo = mu.fit_expansion_diag(diag, rhos, N, include_odd=True)
    fg = mu.fit_expansion_offdiag(off, rhos, d, N)
    fd.write_csv(os.path.join(out, "fit_diagonal.csv"))
    fg.write_csv(os.path.join(out, "fit_offdiagonal.csv"))
    _write_rows(os.path.join(out, "samples.csv"), "asymptotic-samples", ["rho", "E_diag", "E_off_re", "E_off_im"],
                [(float(r), float(a), float(b.real), float(b.imag)) for r, a, b in zip(rhos, diag, off)])
    plot_series(os.path.join(out, "residuals.svg"), rhos, {"diagonal": np.maximum(fd.residuals, 1e-17)},
                "rho", "residual", logy=True)
    a0 = float(fd.coefficient("a0").real)
    odd = max((abs(c) for lab, c in zip(fo.labels, fo.coefficients) if lab.startswith("odd")), default=0.0)
    target = 1 / (2j * np.pi * d)
    g0 = max(abs(fg.coefficient("g0+") - target), abs(fg.coefficient("g0-") + target))
    return [("a0", bool(abs(a0 - 1 / np.pi) <= prm["a0_tol"]), a0),
            ("residual_exponent", bool(fd.exponent >= N - 0.5), float(fd.exponent)),
            ("odd_term", bool(odd <= prm["odd_tol"]), float(odd)),
            ("g0", bool(g0 <= prm["g0_tol"]), float(g0))]


def run_gaps(p, prm, out, ctx):
    gaps = bo.band_gaps(p, prm["hbar"], nbands=prm["nbands"], dps=prm["dps"])
    _write_rows(os.path.join(out, "gaps.csv"), "gaps", ["n", "center", "width"], gaps)
    n = np.array([g[0] for g in gaps])
    w = np.array([g[2] for g in gaps])
    plot_series(os.path.join(out, "gaps.svg"), n, {"gap width": np.maximum(np.abs(w), 1e-300)}, "n", "width",
                logy=True)
    tail = w[n >= prm["monotone_from"]]
    mono = bool(np.all(np.diff(tail) < 0) and np.all(tail > 0))
    i, j = (int(v) for v in prm["ratio_pair"])
    ratio = float(w[n == j][0] / w[n == i][0])
    return [("widths_decreasing", mono, float(tail.min()) if tail.size else 0.0),
            (f"width{j}/width{i}", bool(ratio < prm["ratio_max"]), ratio)]


RUNNERS = {
    "ldos": run_ldos, "gauge": run_gauge, "compare": run_compare, "wave": run_wave,
    "tauberian": run_tauberian, "ode-energy": run_ode_energy, "lyapunov": run_lyapunov,
    "asymptotics": run_asymptotics, "gaps": run_gaps,
}


# ----------------------------------------------------------------------------
# run / diff


def run(experiment, config_text, out_dir, threads=None, source="<config>", base_dir="."):
    """Run one experiment into ``out_dir``; returns (exit status, checks).

    Artifacts are written to a temporary sibling directory and moved into
    place only when the run completes, so failures leave nothing behind.
    """
    cfg = parse_config(config_text, experiment, source)
    p = build_potential(cfg["potential"], base_dir)
    if os.path.exists(out_dir) and os.listdir(out_dir):
        raise ConfigError(f"output directory {out_dir} exists and is not empty")
    parent = os.path.dirname(os.path.abspath(out_dir))
    os.makedirs(parent, exist_ok=True)
    tmp = tempfile.mkdtemp(prefix=".speconion-", dir=parent)
    ctx = {"seed": cfg["run"]["seed"], "threads": threads}
    try:
        t0 = time.perf_counter()
        checks = RUNNERS[experiment](p, cfg[experiment], tmp, ctx)
        elapsed = time.perf_counter() - t0
        manifest = {
            "experiment": experiment,
            "version": __version__,
            "config": {s: {k: v for k, v in cfg[s].items()} for s in sorted(cfg)},
            "potential": pt.dumps(p),
            "seconds": round(elapsed, 3),
            "checks": [{"name": n, "passed": bool(ok), "value": float(v)} for n, ok, v in checks],
            "passed": bool(all(ok for _, ok, _ in checks)),
        }
        with open(os.path.join(tmp, "manifest.json"), "w") as fh:
            json.dump(manifest, fh, indent=2, sort_keys=True, default=float)
            fh.write("\n")
        if os.path.exists(out_dir):
            os.rmdir(out_dir)
        os.replace(tmp, out_dir)
    except BaseException:
        shutil.rmtree(tmp, ignore_errors=True)
        raise
    return (0 if manifest["passed"] else 1), checks


class SchemaMismatch(ValueError):
    pass


def _read_csv(path):
    with open(path, newline="") as fh:
        version = fh.readline().rstrip("\n")
        rows = list(csv.reader(fh))
    if not rows:
        raise SchemaMismatch(f"{path}: no header row")
    return version, rows[0], rows[1:]


def diff(dir_a, dir_b, atol=0.0, rtol=0.0, column_tols=None):
    """Cell-wise numeric comparison of the CSVs in two artifact directories.

    Returns a list of 'file:row:column a b' strings for cells outside
    tolerance; raises SchemaMismatch when files, versions, headers or row
    counts differ.
    """
    column_tols = column_tols or {}
    files_a = sorted(f for f in os.listdir(dir_a) if f.endswith(".csv"))
    files_b = sorted(f for f in os.listdir(dir_b) if f.endswith(".csv"))
    if files_a != files_b:
        raise SchemaMismatch(f"CSV sets differ: {files_a} vs {files_b}")
    out = []
    for name in files_a:
        va, ha, ra = _read_csv(os.path.join(dir_a, name))
        vb, hb, rb = _read_csv(os.path.join(dir_b, name))
        if va != vb or ha != hb or len(ra) != len(rb):
            raise SchemaMismatch(f"{name}: schema differs")
        for i, (x, y) in enumerate(zip(ra, rb), 1):
            if len(x) != len(y):
                raise SchemaMismatch(f"{name}:{i}: row lengths differ")
            for col, s, t in zip(ha, x, y):
                if s == t:
                    continue
                try:
                    a, b = float(s), float(t)
                except ValueError:
                    out.append(f"{name}:{i}:{col} {s} {t}")
                    continue
                tol = column_tols.get(col, atol + rtol * max(abs(a), abs(b)))
                if not abs(a - b) <= tol:
                    out.append(f"{name}:{i}:{col} {s} {t}")
    return out


def _parse_column_tols(items):
    out = {}
    for item in items or []:
        if "=" not in item:
            raise ConfigError(f"--tol expects column=value, got {item!r}")
        k, v = item.split("=", 1)
        try:
            out[k.strip()] = _float(v)
        except ValueError as exc:
            raise ConfigError(f"--tol {item!r}: {exc}") from None
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(prog="speconion", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in EXPERIMENTS:
        sp = sub.add_parser(name, help=f"run the {name} experiment")
        sp.add_argument("--config", required=True)
        sp.add_argument("--threads", type=int, default=None)
        sp.add_argument("--out", default=None)
    dp = sub.add_parser("diff", help="compare the CSV artifacts of two runs")
    dp.add_argument("dir_a")
    dp.add_argument("dir_b")
    dp.add_argument("--atol", type=float, default=0.0)
    dp.add_argument("--rtol", type=float, default=0.0)
    dp.add_argument("--tol", action="append", metavar="COLUMN=VALUE")
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0

    if args.command == "diff":
        try:
            cells = diff(args.dir_a, args.dir_b, args.atol, args.rtol, _parse_column_tols(args.tol))
        except (SchemaMismatch, ConfigError, OSError) as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 2
        for c in cells:
            print(c)
        return 1 if cells else 0

    if args.threads is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 2
    out_dir = args.out or os.path.join("speconion-out", args.command)
    try:
        with open(args.config) as fh:
            text = fh.read()
        status, checks = run(args.command, text, out_dir, args.threads, source=args.config,
                             base_dir=os.path.dirname(os.path.abspath(args.config)))
    except (ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # numeric failure inside an experiment
        print(f"numeric failure in {args.command}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for name, ok, value in checks:
        print(f"{'PASS' if ok else 'FAIL'}  {name} = {value:.6g}")
    print(f"artifacts in {out_dir}")
    return status


if __name__ == "__main__":
    sys.exit(main())
