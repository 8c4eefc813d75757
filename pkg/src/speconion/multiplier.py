"""Spectral kernels of Fourier multipliers and fits of the high-energy expansion.

For H = -hbar^2 d^2/dx^2 + hbar qt(hbar D) the projector onto energies <= omega^2 has kernel

    E(x, y, omega) = 1/(2 pi hbar) int_G exp(i (x - y) xi / hbar) dxi,
    G = {xi : xi^2 + hbar qt(xi) <= omega^2}.
"""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .bloch_oracle import SpectralSample


class WindowError(ValueError):
    pass


class IllConditionedFit(ValueError):
    pass


@dataclass
class FourierMultiplier:
    """Real function qt(xi) on the sorted points of ``grid``, trusted on ``window``."""

    grid: object
    values: np.ndarray
    window: tuple

    def __post_init__(self):
        v = np.asarray(self.values)
        if np.iscomplexobj(v):
            if np.abs(v.imag).max(initial=0.0) > 1e-10 * max(1.0, np.abs(v).max(initial=0.0)):
                raise ValueError("multiplier values must be real")
            v = v.real
        self.values = np.asarray(v, dtype=float)
        if self.values.shape != (self.grid.size,):
            raise ValueError("one value per grid point required")
        if not 0 <= self.window[0] < self.window[1]:
            raise ValueError("window must satisfy 0 <= a < b")

    @classmethod
    def constant(cls, grid, c, window):
        return cls(grid, np.full(grid.size, float(c)), window)

    def spline(self):
        xi = self.grid.points
        order = np.argsort(xi, kind="stable")
        return CubicSpline(xi[order], self.values[order])

    def second_difference_bound(self):
        xi = self.grid.points
        order = np.argsort(xi, kind="stable")
        v = self.values[order]
        h = np.diff(xi[order])
        if v.size < 3:
            return 0.0
        return float(np.abs(np.diff(np.diff(v) / h) / h[1:]).max())


def sublevel_intervals(mult, omega, hbar):
    """Intervals of {xi^2 + hbar qt(xi) <= omega^2} with endpoints from bisection on a spline."""
    a, b = mult.window
    if not a < omega < b:
        raise WindowError(f"omega={omega} must lie inside the window ({a}, {b})")
    xi = np.sort(mult.grid.points)
    spl = mult.spline()

    def f(t):
        return t * t + hbar * spl(t) - omega ** 2

    fv = f(xi)
    if fv[0] <= 0 or fv[-1] <= 0:
        raise WindowError("sublevel set reaches the end of the xi-grid")
    sgn = fv <= 0
    starts = np.nonzero(~sgn[:-1] & sgn[1:])[0]
    ends = np.nonzero(sgn[:-1] & ~sgn[1:])[0]
    out = []
    for i, j in zip(starts, ends):
        try:
            lo = brentq(f, xi[i], xi[i + 1], xtol=1e-15, rtol=1e-15)
            hi = brentq(f, xi[j], xi[j + 1], xtol=1e-15, rtol=1e-15)
        except ValueError as exc:
            raise RuntimeError("unresolved endpoint of the sublevel set") from exc
        out.append((lo, hi))
    return out


def _interval_integral(lo, hi, c, alpha, beta, hbar):
    # int_lo^hi exp(c xi) (i xi/hbar)^alpha (-i xi/hbar)^beta dxi, c = i (x - y)/hbar
    n = alpha + beta
    w = hi - lo
    if n == 0:
        z = c * w
        if abs(z) < 1e-6:
            series = w * (1 + z / 2 + z * z / 6 + z ** 3 / 24)
            return np.exp(c * lo) * series
        return (np.exp(c * hi) - np.exp(c * lo)) / c
    nodes = 32 + int(2 * abs(c) * w)
    t, wt = np.polynomial.legendre.leggauss(nodes)
    s = 0.5 * (hi + lo) + 0.5 * w * t
    vals = np.exp(c * s) * (1j * s / hbar) ** alpha * (-1j * s / hbar) ** beta
    return 0.5 * w * np.sum(wt * vals)


def kernel_over_intervals(intervals, x, y, hbar, deriv=(0, 0)):
    c = 1j * (x - y) / hbar
    tot = sum(_interval_integral(lo, hi, c, deriv[0], deriv[1], hbar) for lo, hi in intervals)
    return complex(tot / (2 * np.pi * hbar))


def multiplier_kernel(mult, x, y, omega, hbar, deriv=(0, 0)):
    intervals = sublevel_intervals(mult, omega, hbar)
    val = kernel_over_intervals(intervals, x, y, hbar, deriv)
    return SpectralSample(float(x), float(y), float(omega), val, tuple(deriv), "multiplier")


# ----------------------------------------------------------------------------
# expansion fits


@dataclass
class ExpansionFit:
    kind: str
    rhos: np.ndarray
    coefficients: np.ndarray
    residuals: np.ndarray
    condition: float
    labels: list = field(default_factory=list)
    exponent: float = float("nan")
    flagged: bool = False

    def coefficient(self, label):
        return self.coefficients[self.labels.index(label)]

    def rows(self):
        out = []
        for lab, c in zip(self.labels, self.coefficients):
            out.append((lab, float(np.real(c)), float(np.imag(c))))
        return out

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# speconion expansion-fit v1\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["term", "re", "im"])
            for lab, re, im in self.rows():
                w.writerow([lab, repr(re), repr(im)])
            w.writerow(["rho", "residual", ""])
            for r, res in zip(self.rhos, self.residuals):
                w.writerow([repr(float(r)), repr(float(res)), ""])

    def summary(self):
        lines = [f"{self.kind} fit, condition number {self.condition:.3g}"]
        for lab, re, im in self.rows():
            lines.append(f"  {lab:>8s} = {re:+.12g} {im:+.12g}i")
        lines.append(f"  residual exponent {self.exponent:.3f}" + (" (flagged)" if self.flagged else ""))
        return "\n".join(lines)


def _lstsq(A, b):
    cond = np.linalg.cond(A)
    if cond > 1e10:
        raise IllConditionedFit(f"fit condition number {cond:.3g} exceeds 1e10")
    coef, *_ = np.linalg.lstsq(A, b, rcond=None)
    return coef, cond


def _decay_exponent(rhos, residuals, floor=1e-14):
    ok = residuals > floor
    if ok.sum() < 2:
        return float("inf")
    slope = np.polyfit(np.log(rhos[ok]), np.log(residuals[ok]), 1)[0]
    return float(-slope)


def _guarded(rhos, n_terms, guard, per_term):
    # extra higher-order columns keep the leading coefficients free of truncation bias
    return max(0, min(guard, rhos.size - per_term * n_terms - 1))


def fit_expansion_diag(values, rhos, N, include_odd=False, guard=2):
    """Fit E(rho) / rho = sum_k a_k rho^(-2k), k < N.

    ``guard`` further even powers are fitted alongside and dropped, so the
    residual |E - rho sum_{k<N} a_k rho^(-2k)| measures the truncation after
    N terms.  With ``include_odd`` every power rho^(-j), j <= 2N - 2, is
    fitted, so the odd coefficients can be inspected; labels are
    ``a0, a1, ...`` for even terms and ``odd1, odd3, ...`` for the others.
    """
    rhos = np.asarray(rhos, dtype=float)
    vals = np.asarray([v.value if isinstance(v, SpectralSample) else v for v in values])
    vals = vals.real
    if rhos.size < 2 * N:
        raise ValueError("need at least 2N ladder points")
    if include_odd:
        powers = list(range(0, 2 * N - 1))
    else:
        powers = [2 * k for k in range(N)]
    extra = [2 * N + 2 * j for j in range(_guarded(rhos, len(powers), guard, 1))]
    A = np.array([[r ** (-p) for p in powers + extra] for r in rhos])
    coef, cond = _lstsq(A, vals / rhos)
    coef = coef[:len(powers)]
    resid = np.abs(vals - rhos * (A[:, :len(powers)] @ coef))
    labels = [f"a{p // 2}" if p % 2 == 0 else f"odd{p}" for p in powers]
    exp_ = _decay_exponent(rhos, resid)
    return ExpansionFit("diagonal", rhos, coef, resid, cond, labels, exp_, exp_ < N - 0.5)


def fit_expansion_offdiag(values, rhos, distance, N, guard=1):
    """Fit E = sum_j rho^(-j) (exp(i rho d) g_j^+ + exp(-i rho d) g_j^-), j < N.

    As on the diagonal, ``guard`` further orders are fitted and dropped.
    """
    rhos = np.asarray(rhos, dtype=float)
    vals = np.asarray([v.value if isinstance(v, SpectralSample) else v for v in values], dtype=complex)
    if rhos.size < 2 * N:
        raise ValueError("need at least 2N ladder points")
    cols, labels = [], []
    n_extra = _guarded(rhos, N, guard, 2)
    for j in range(N + n_extra):
        cols.append(np.exp(1j * rhos * distance) * rhos ** (-j))
        labels.append(f"g{j}+")
        cols.append(np.exp(-1j * rhos * distance) * rhos ** (-j))
        labels.append(f"g{j}-")
    A = np.array(cols).T
    coef, cond = _lstsq(A, vals)
    coef, labels = coef[:2 * N], labels[:2 * N]
    resid = np.abs(vals - A[:, :2 * N] @ coef)
    exp_ = _decay_exponent(rhos, resid)
    return ExpansionFit("offdiagonal", rhos, coef, resid, cond, labels, exp_, exp_ < N - 0.5)


def nonsemiclassical(p, rho):
    """(potential, hbar) such that -d^2 + V0 at energy rho^2 equals the semiclassical form at omega = 1."""
    hbar = 1.0 / rho
    return p.scaled(hbar, 1.0), hbar


# ----------------------------------------------------------------------------
# first-term check


@dataclass
class FirstTermReport:
    hbars: np.ndarray
    diagonal: np.ndarray
    offdiagonal: np.ndarray
    offdiag_slope: float

    def __str__(self):
        lines = ["hbar  max|E-omega/(pi hbar)| hbar^(3/4)  max|E-sin/(pi d)|"]
        for h, d, o in zip(self.hbars, self.diagonal, self.offdiagonal):
            lines.append(f"{h:.6g}  {d:.3e}  {o:.3e}")
        lines.append(f"off-diagonal trend exponent in hbar: {self.offdiag_slope:.3f}")
        return "\n".join(lines)


def first_term_check(kernel, points, hbars, omega=1.0):
    """Compare a kernel backend with the free leading terms.

    ``kernel(x, y, omega, hbar)`` returns a SpectralSample or a number;
    ``points`` is a list of (x, y) pairs, diagonal ones with x == y.
    """
    hbars = np.asarray(hbars, dtype=float)
    diag = np.zeros(hbars.size)
    off = np.zeros(hbars.size)
    for i, h in enumerate(hbars):
        for x, y in points:
            v = kernel(x, y, omega, h)
            v = v.value if isinstance(v, SpectralSample) else v
            d = abs(x - y)
            if d == 0:
                diag[i] = max(diag[i], abs(v - omega / (np.pi * h)) * h ** 0.75)
            else:
                off[i] = max(off[i], abs(v - np.sin(omega * d / h) / (np.pi * d)))
    ok = off > 1e-14
    slope = float(np.polyfit(np.log(hbars[ok]), np.log(off[ok]), 1)[0]) if ok.sum() >= 2 else float("inf")
    return FirstTermReport(hbars, diag, off, slope)


def write_samples_csv(samples, path, extra=None):
    """LDOS samples as CSV with a versioned header line."""
    with open(path, "w", newline="") as fh:
        fh.write("# speconion spectral-samples v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["method", "x", "y", "omega", "re", "im"])
        for s in samples:
            w.writerow([s.method, repr(s.x), repr(s.y), repr(s.omega), repr(s.value.real), repr(s.value.imag)])
