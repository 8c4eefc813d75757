"""Cosine-propagator experiments on the Dirichlet box.

cos(t sqrt(H)/hbar) is applied by a Chebyshev expansion of the entire function
lambda -> cos(t sqrt(lambda)/hbar) (cosh below zero), so no spectral
decomposition is needed.  On top of it: finite speed of propagation, wave
comparison under distant changes of the potential, smoothed spectral
projectors and the Tauberian inequalities.
"""

import csv
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy import sparse
from scipy.fft import dct
from scipy.signal import fftconvolve

from . import bloch_oracle as bo
from .cutoffs import bump, plateau
from .plotting import plot_series
from .potential import SampledPotential, TrigPotential, evaluate


class BoundsError(ValueError):
    pass


class GeometryError(ValueError):
    pass


class ShiftError(ValueError):
    pass


# ----------------------------------------------------------------------------
# box operator and Chebyshev propagator


def box_operator(p, X, Ngrid, hbar, shift=0.0):
    """Sparse finite-difference H (plus ``shift``) on [-X, X]; returns (H, x)."""
    diag, off, x = bo.box_hamiltonian(p, X, Ngrid, hbar)
    H = sparse.diags([np.conj(off), diag + shift, off], [-1, 0, 1], format="csr")
    return H, x


def gershgorin(H):
    H = sparse.csr_matrix(H)
    d = H.diagonal().real
    radius = np.asarray(abs(H).sum(axis=1)).ravel() - np.abs(H.diagonal())
    return float((d - radius).min()), float((d + radius).max())


def _cos_entire(t, hbar):
    def f(lam):
        lam = np.asarray(lam, dtype=float)
        r = np.sqrt(np.abs(lam)) * abs(t) / hbar
        out = np.cos(r)
        neg = lam < 0
        out[neg] = np.cosh(r[neg])
        return out
    return f


def _sinc_entire(t, hbar):
    # sin(t sqrt(lam)/hbar) / (sqrt(lam)/hbar)
    def f(lam):
        lam = np.asarray(lam, dtype=float)
        s = np.sqrt(np.abs(lam)) / hbar
        r = s * t
        small = r < 1e-4
        safe = np.where(small, 1.0, s)
        out = np.where(small, t * (1 - r * r / 6), np.sin(r) / safe)
        neg = lam < 0
        out[neg] = np.where(small[neg], t * (1 + r[neg] ** 2 / 6), np.sinh(r[neg]) / safe[neg])
        return out
    return f


def cheb_coefficients(f, lo, hi, tol=1e-12, start=32, max_degree=1 << 18):
    """Chebyshev coefficients of f on [lo, hi], doubled until the tail is below tol."""
    n = start
    while True:
        j = np.arange(n)
        nodes = np.cos(np.pi * (j + 0.5) / n)
        vals = f(0.5 * (hi + lo) + 0.5 * (hi - lo) * nodes)
        c = dct(vals, type=2) / n
        c[0] *= 0.5
        scale = np.abs(c).max()
        if np.abs(c[-8:]).max() < tol * scale or scale == 0:
            keep = np.nonzero(np.abs(c) > 0.1 * tol * scale)[0]
            K = int(keep[-1]) + 1 if keep.size else 1
            return c[:K]
        if n >= max_degree:
            raise RuntimeError(f"Chebyshev degree above {max_degree}")
        n *= 2


@dataclass
class ChebPropagator:
    """cos(t sqrt(H)/hbar) (kind 'cos') or sin(t sqrt(H)/hbar)/(sqrt(H)/hbar) (kind 'sinc')."""

    H: object
    t: float
    hbar: float
    kind: str = "cos"
    tol: float = 1e-12
    bounds: tuple = None
    coefficients: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.H = sparse.csr_matrix(self.H)
        cert = gershgorin(self.H)
        if self.bounds is None:
            self.bounds = cert
        elif self.bounds[0] > cert[0] + 1e-12 * abs(cert[0]) or self.bounds[1] < cert[1] - 1e-12 * abs(cert[1]):
            raise BoundsError(f"bounds {self.bounds} do not contain the Gershgorin interval {cert}")
        lo, hi = self.bounds
        if hi - lo <= 0:
            hi = lo + 1.0
            self.bounds = (lo, hi)
        f = {"cos": _cos_entire, "sinc": _sinc_entire}[self.kind](self.t, self.hbar)
        self.coefficients = cheb_coefficients(f, lo, hi, self.tol)

    @property
    def degree(self):
        return self.coefficients.size - 1

    def apply(self, u):
        lo, hi = self.bounds
        c0 = 0.5 * (hi + lo)
        r = 0.5 * (hi - lo)
        u = np.asarray(u, dtype=complex)

        def A(v):
            return (self.H @ v - c0 * v) / r

        c = self.coefficients
        b1 = np.zeros_like(u)
        b2 = np.zeros_like(u)
        for k in range(c.size - 1, 0, -1):
            b1, b2 = c[k] * u + 2 * A(b1) - b2, b1
        return c[0] * u + A(b1) - b2


def apply_cos_propagator(prop, u0):
    return prop.apply(u0)


def wave_energy(H, u, ut, hbar, h):
    """hbar^2 |u_t|^2 + <H u, u> in the grid L^2 inner product."""
    return float(h * (hbar ** 2 * np.vdot(ut, ut).real + np.vdot(u, H @ u).real))


def evolve(H, u0, t, hbar, h):
    """(u(t), u_t(t), energy) for hbar^2 u_tt + H u = 0, u(0) = u0, u_t(0) = 0."""
    u = ChebPropagator(H, t, hbar).apply(u0)
    s = ChebPropagator(H, t, hbar, kind="sinc").apply(u0)
    ut = -(H @ s) / hbar ** 2
    return u, ut, wave_energy(H, u, ut, hbar, h)


def grid_norm(u, h):
    return float(np.sqrt(h * np.vdot(u, u).real))


def h1_norm(u, h, hbar):
    """Semiclassical H^1 norm: ||u||^2 + ||hbar u'||^2 with Dirichlet ends."""
    du = np.diff(np.concatenate([[0], u, [0]])) / h
    return float(np.sqrt(h * (np.vdot(u, u).real + hbar ** 2 * np.vdot(du, du).real)))


def bump_state(x, x0, R0, hbar, carrier=0.0):
    """Smooth bump supported in |x - x0| < R0 times exp(i carrier x / hbar)."""
    return bump((x - x0) / R0) * np.exp(1j * carrier * x / hbar)


def _fine_grid(X, hbar, carrier, R0, cells_per_wavelength=24, cells_per_radius=400):
    h = min(2 * np.pi * hbar / max(carrier, 1.0) / cells_per_wavelength, R0 / cells_per_radius)
    n = int(np.ceil(2 * X / h)) - 1
    return n + (n % 2 == 0)


def finite_speed_check(p, x0, R0, t, hbar, X=None, Ngrid=None, margin_cells=4, carrier=0.0, shift=None,
                       relative=False):
    """L^2 mass of cos(t sqrt(H + shift)/hbar) u0 farther than |t| + margin from supp u0.

    u0 is a smooth bump on B(x0, R0) (optionally modulated by ``carrier``).
    The shift (default 1 + hbar ||Q||) keeps the propagator bounded and does
    not change the speed.  ``relative`` divides by ||u0||.
    """
    if X is None:
        X = abs(x0) + R0 + abs(t) + 4.0
    if X < abs(x0) + R0 + abs(t) + 1.0:
        raise GeometryError("box too small: the boundary would be reached")
    Ngrid = _fine_grid(X, hbar, carrier, R0) if Ngrid is None else Ngrid
    shift = _default_shift(p, hbar) if shift is None else shift
    H, x = box_operator(p, X, Ngrid, hbar, shift)
    h = x[1] - x[0]
    u0 = bump_state(x, x0, R0, hbar, carrier)
    if t == 0:
        return 0.0
    u = ChebPropagator(H, t, hbar).apply(u0)
    far = np.abs(x - x0) > R0 + abs(t) + margin_cells * h
    mass = grid_norm(u[far], h)
    return mass / grid_norm(u0, h) if relative else mass


def leak_profile(p, x0, R0, t, hbar, margins, X=None, Ngrid=None, carrier=0.0):
    return [finite_speed_check(p, x0, R0, t, hbar, X, Ngrid, m, carrier) for m in margins]


def _default_shift(p, hbar):
    try:
        return positivity_shift(p, hbar)
    except ShiftError:
        return 1.0 + 2 * hbar * _sup_on_box(p)


def _sup_on_box(p, extent=1e3):
    x = np.linspace(-extent, extent, 200001)
    return float(np.abs(p(x)).max())


def wave_compare(p0, p1, R, R0, t, hbar, X=None, Ngrid=None, carrier=1.0, check_geometry=True, shift=None):
    """||(cos(t sqrt(H0)/hbar) - cos(t sqrt(H1)/hbar)) u0|| for u0 a bump on B(0, R0).

    Returns (difference, ||u0||, ||u0||_{H^1_hbar}).  p0 and p1 are meant to
    differ only outside B(0, R); with ``check_geometry`` t <= R - R0 - 1 is
    enforced.
    """
    if check_geometry and abs(t) > R - R0 - 1:
        raise GeometryError(f"t={t} exceeds R - R0 - 1 = {R - R0 - 1}")
    if X is None:
        X = R + abs(t) + 4.0
    Ngrid = _fine_grid(X, hbar, carrier, R0) if Ngrid is None else Ngrid
    if shift is None:
        shift = max(_default_shift(p0, hbar), _default_shift(p1, hbar))
    H0, x = box_operator(p0, X, Ngrid, hbar, shift)
    H1, _ = box_operator(p1, X, Ngrid, hbar, shift)
    h = x[1] - x[0]
    u0 = bump_state(x, 0.0, R0, hbar, carrier)
    bounds = gershgorin(H0), gershgorin(H1)
    lo = min(b[0] for b in bounds)
    hi = max(b[1] for b in bounds)
    d = ChebPropagator(H0, t, hbar, bounds=(lo, hi)).apply(u0) - ChebPropagator(H1, t, hbar, bounds=(lo, hi)).apply(u0)
    return grid_norm(d, h), grid_norm(u0, h), h1_norm(u0, h, hbar)


@dataclass
class WaveSlope:
    ts: np.ndarray
    diffs: np.ndarray
    slope: float
    delta: float

    def passed(self, factor=10.0):
        return self.slope <= factor * self.delta


def wave_compare_sweep(p0, p1, R, R0, ts, hbar, delta, X=None, carrier=1.0):
    """Fit ||diff|| / ||u0||_{H^1} = slope * t + c over ``ts``; geometry is not enforced."""
    ts = np.asarray(ts, dtype=float)
    X = R + ts.max() + 4.0 if X is None else X
    Ngrid = _fine_grid(X, hbar, carrier, R0)
    out = []
    for t in ts:
        d, _, n1 = wave_compare(p0, p1, R, R0, t, hbar, X, Ngrid, carrier, check_geometry=False)
        out.append(d / n1)
    out = np.array(out)
    slope = float(np.polyfit(ts, out, 1)[0]) if ts.size > 1 else float(out[0] / ts[0])
    return WaveSlope(ts, out, slope, float(delta))


# ----------------------------------------------------------------------------
# smoothing kernel


def _panels(lo, hi, n_panels, nodes=24):
    t, w = np.polynomial.legendre.leggauss(nodes)
    edges = np.linspace(lo, hi, n_panels + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    return (mid[:, None] + half[:, None] * t).ravel(), (half[:, None] * w).ravel()


@dataclass
class SmoothingKernel:
    """nu_hat = smooth even plateau, 1 on [-1, 1], supported in (-2, 2); nu_{hbar,T}(s) = (T/hbar) nu(T s/hbar)."""

    hbar: float
    T: float
    tail: float = 400.0

    @property
    def a(self):
        return self.hbar / self.T

    @staticmethod
    def hat(tau):
        return plateau(np.asarray(tau, dtype=float), 1.0, 2.0)

    def _quad(self, vmax):
        n_panels = 2 + int(np.ceil(vmax / 8.0))
        return _panels(0.0, 2.0, n_panels)

    def nu(self, s):
        """Unit-scale nu(s) = (1/pi) int_0^2 nu_hat(tau) cos(s tau) dtau."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        tau, w = self._quad(np.abs(s).max(initial=0.0))
        return (np.cos(np.outer(s, tau)) @ (w * self.hat(tau))) / np.pi

    def cumulative(self, v):
        """Unit-scale int_{-inf}^v nu = 1/2 + (1/pi) int_0^2 nu_hat(tau) sin(v tau)/tau dtau."""
        v = np.atleast_1d(np.asarray(v, dtype=float))
        tau, w = self._quad(np.abs(v).max(initial=0.0))
        return 0.5 + (np.sin(np.outer(v, tau)) @ (w * self.hat(tau) / tau)) / np.pi

    def scaled_cumulative(self, v):
        """int_{-inf}^v nu_{hbar,T}; exact 0 / 1 beyond ``tail`` scale units."""
        v = np.atleast_1d(np.asarray(v, dtype=float)) / self.a
        out = np.where(v > 0, 1.0, 0.0)
        near = np.abs(v) <= self.tail
        if near.any():
            out[near] = self.cumulative(v[near])
        return out

    @cached_property
    def mass(self):
        u, w = _panels(-self.tail, self.tail, 600)
        return float(np.sum(w * self.nu(u)))

    @cached_property
    def lip_bound(self):
        """int |nu(u)| (1 + |u|) du: a priori constant of the Lipschitz smoothing bound."""
        u, w = _panels(-self.tail, self.tail, 600)
        return float(np.sum(w * np.abs(self.nu(u)) * (1 + np.abs(u))))

    @cached_property
    def concentration(self):
        """1 / nu(0): width (in units of a) over which unit-scale nu concentrates its mass."""
        return float(1.0 / self.nu(0.0)[0])

    def smooth_samples(self, omegas, values):
        """Stieltjes sums of nu_{hbar,T} against the increments of w on a uniform grid.

        Returns (index slice, nu * w, nu * dw) where the slice marks the
        samples far enough from both ends of the grid.  A monotone w is
        treated as a staircase with jumps at cell midpoints, so step functions
        are exact.
        """
        omegas = np.asarray(omegas, dtype=float)
        values = np.asarray(values, dtype=float)
        d = omegas[1] - omegas[0]
        if not np.allclose(np.diff(omegas), d, rtol=1e-9, atol=0):
            raise ValueError("omega samples must be uniform")
        mt = int(np.ceil(self.tail * self.a / d))
        if values.size < 2 * mt + 2:
            raise ValueError("samples do not cover the smoothing range")
        m = np.arange(-mt, mt + 1)
        off = (m - 0.5) * d
        cum = self.scaled_cumulative(off)
        dens = self.nu(off / self.a) / self.a
        dw = np.diff(values)
        # i runs over mt .. n - 2 - mt; j = i - m
        conv_c = fftconvolve(dw, cum, mode="valid")
        conv_d = fftconvolve(dw, dens, mode="valid")
        idx = np.arange(mt, mt + conv_c.size)
        smoothed = values[idx - mt] + conv_c
        return idx, smoothed, conv_d


# ----------------------------------------------------------------------------
# smoothed projectors


@dataclass
class BoxBackend:
    p: object
    X: float
    Ngrid: int
    hbar: float


@dataclass
class BlochBackend:
    p: object
    hbar: float
    Nk: int = 256
    M: int = None


def positivity_shift(p, hbar):
    """delta = 1 + hbar ||Q||, with ||Q|| the sup of |V0| + |V1| as a crude bound."""
    if isinstance(p, TrigPotential):
        q = p.sup_norm("V0") + p.sup_norm("V1")
    elif isinstance(p, SampledPotential):
        q = np.abs(p.samples_v0).max() + np.abs(p.samples_v1).max()
    else:
        raise ShiftError("positivity shift needs a TrigPotential or SampledPotential")
    return 1.0 + hbar * q


def _shifted_energy(omega, shift):
    return np.sqrt(omega ** 2 + shift)


def smoothed_projector(backend, kernel, x, y, omega, mode="eigen", shift=None):
    """(nu_{hbar,T} * E(H + shift))(sqrt(omega^2 + shift)) at (x, y).

    ``eigen`` sums the smoothed step over eigenpairs; ``wave`` uses
    (1/pi) int tau^-1 nu_hat(tau/T) sin(tau w/hbar) cos(tau sqrt(H + shift)/hbar) dtau,
    which also subtracts the O(hbar^inf) value at -w.
    """
    hbar = backend.hbar
    if abs(kernel.hbar - hbar) > 1e-15:
        raise ValueError("kernel and backend disagree on hbar")
    if shift is None:
        shift = positivity_shift(backend.p, hbar)
    if shift <= 0:
        raise ShiftError("a positive shift is required so that H + shift > 0")
    w = _shifted_energy(omega, shift)
    if mode == "eigen":
        if isinstance(backend, BlochBackend):
            return _smoothed_bloch(backend, kernel, x, y, w, shift)
        return _smoothed_box_eigen(backend, kernel, x, y, w, shift)
    if mode == "wave":
        if not isinstance(backend, BoxBackend):
            raise ValueError("wave mode runs on the box backend only")
        return _smoothed_box_wave(backend, kernel, x, y, w, shift)
    raise ValueError(f"unknown mode {mode!r}")


def _smoothed_box_eigen(b, kernel, x, y, w, shift):
    upper = (w + kernel.tail * kernel.a) ** 2 - shift
    lam, vec, xs = bo.box_eigenpairs(b.p, b.X, b.Ngrid, b.hbar, upper)
    h = xs[1] - xs[0]
    ix, iy = bo._node(xs, x, h), bo._node(xs, y, h)
    mu = np.sqrt(np.maximum(lam + shift, 0.0))
    if (lam + shift).min(initial=1.0) <= 0:
        raise ShiftError("shift does not make the box operator positive")
    weights = kernel.scaled_cumulative(w - mu)
    return complex(np.sum(weights * vec[ix] * np.conj(vec[iy])) / h)


def _smoothed_bloch(b, kernel, x, y, w, shift):
    p, hbar = b.p, b.hbar
    M = bo.default_cutoff(p, hbar, w + kernel.tail * kernel.a) if b.M is None else b.M
    kmax = 2 * np.pi / p.period
    ks, wk = _panels(0.0, kmax, b.Nk, 4)
    total = 0.0 + 0.0j
    for k, wt in zip(ks, wk):
        lam, vec = np.linalg.eigh(bo.bloch_matrix(p, k, M, hbar))
        weights = kernel.scaled_cumulative(w - np.sqrt(np.maximum(lam + shift, 0.0)))
        ux = bo._plane_wave_rows(k, M, p.period, x, 0) @ vec
        uy = bo._plane_wave_rows(k, M, p.period, y, 0) @ vec
        total += wt * np.sum(weights * ux * np.conj(uy))
    return complex(total / (2 * np.pi))


def _smoothed_box_wave(b, kernel, x, y, w, shift, step=None):
    hbar, T = b.hbar, kernel.T
    H, xs = box_operator(b.p, b.X, b.Ngrid, hbar, shift)
    h = xs[1] - xs[0]
    ix, iy = bo._node(xs, x, h), bo._node(xs, y, h)
    lo, hi = gershgorin(H)
    if lo <= 0:
        raise ShiftError("shifted box operator is not certified positive")
    # trapezoid step: the stated rule, and fine enough to resolve the top of the spectrum
    dt = hbar / (8 * T * w)
    dt = min(dt, np.pi * hbar / (4 * (w + np.sqrt(hi))))
    if step is not None:
        dt = min(dt, step)
    n = int(np.ceil(2 * T / dt))
    dt = 2 * T / n
    tau = dt * np.arange(n + 1)
    g = np.empty(n + 1)
    g[0] = w / hbar
    g[1:] = kernel.hat(tau[1:] / T) * np.sin(w * tau[1:] / hbar) / tau[1:]
    g[0] *= 0.5
    step_prop = ChebPropagator(H, dt, hbar, bounds=(lo, hi))
    u = np.zeros(H.shape[0], complex)
    u[iy] = 1.0
    prev = u
    cur = step_prop.apply(u)
    acc = g[0] * prev[ix] + g[1] * cur[ix]
    for j in range(2, n + 1):
        nxt = 2 * step_prop.apply(cur) - prev
        prev, cur = cur, nxt
        if g[j] != 0.0:
            acc += g[j] * cur[ix]
    return complex(2 / np.pi * dt * acc / h)


# ----------------------------------------------------------------------------
# Tauberian checks


@dataclass
class TauberianReport:
    a: float
    lip_constant: float
    smoothing_error: float
    lip_C: float
    density_max: float
    mono_C: float
    concentration: float
    lip_bound: float

    def __str__(self):
        return (f"a = {self.a:.4g}: max|nu*w - w| = {self.smoothing_error:.3e}, L = {self.lip_constant:.4g}, "
                f"C_lip = {self.lip_C:.4g} (a priori {self.lip_bound:.4g}); M = {self.density_max:.4g}, "
                f"C_mono = {self.mono_C:.4g}; concentration of nu = {self.concentration:.4g}")


def tauberian_bounds_check(omegas, values, kernel, window, n_shifts=401):
    """Smallest constants in the two smoothing inequalities over ``window``.

    ``values`` are samples w(omega) on the uniform grid ``omegas``, which must
    extend past the window by the smoothing range.  With a = hbar/T:
      L      = max |w(o) - w(o - s)| / (1 + |s|/a)
      C_lip  = max |nu_a * w - w * int nu| / L
      M      = max of the smoothed density d/do (nu_a * w)
      C_mono = max |w(o) - w(o - s)| / (a M (1 + |s|/a)).
    """
    omegas = np.asarray(omegas, dtype=float)
    values = np.asarray(values, dtype=float).real
    lo, hi = window
    a = kernel.a
    idx, smooth, dens = kernel.smooth_samples(omegas, values)
    sel = (omegas[idx] >= lo) & (omegas[idx] <= hi)
    if not sel.any():
        raise ValueError("window not covered away from the ends of the samples")
    idx, smooth, dens = idx[sel], smooth[sel], dens[sel]
    inside = omegas[idx]
    w_in = values[idx]
    shifts = np.linspace(-(hi - lo), hi - lo, n_shifts)
    shifts = shifts[shifts != 0]
    diff = np.abs(w_in[:, None] - np.interp(inside[:, None] - shifts[None, :], omegas, values))
    env = 1 + np.abs(shifts) / a
    # shifts below the grid step: adjacent samples
    dw = np.abs(np.diff(values))
    L = max(float((diff / env).max()), float(dw.max(initial=0.0)))
    err = float(np.abs(smooth - kernel.mass * w_in).max())
    lip_C = err / L if L > 0 else 0.0
    M = float(np.abs(dens).max())
    mono = float((diff / (a * M * env)).max()) if M > 0 else 0.0
    if M > 0:
        mono = max(mono, float(dw.max(initial=0.0)) / (a * M))
    return TauberianReport(a, L, err, lip_C, M, mono, kernel.concentration, kernel.lip_bound)


# ----------------------------------------------------------------------------
# comparison of spectral functions


MODIFICATIONS = ("periodize", "dirichlet-box", "quadratic-well")


@dataclass
class CompareReport:
    modification: str
    hbar: float
    delta: float
    omegas: np.ndarray
    Ts: np.ndarray
    diffs: np.ndarray
    C: float
    threshold: float = 100.0

    @property
    def passed(self):
        return bool(self.C <= self.threshold)

    def rows(self):
        for T in self.Ts:
            for o, d in zip(self.omegas, self.diffs):
                yield float(T), float(o), float(d), float(d / (self.hbar / T + self.delta * T))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# speconion ldos-compare v1\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["T", "omega", "abs_diff", "ratio"])
            for row in self.rows():
                w.writerow([repr(v) for v in row])


def ldos_compare_experiment(p, modification, x, window, Ts, R, hbar, R0=0.0, delta=None, X=None,
                            n_omega=21, box_factor=1, period=None):
    """|E0(x,x,w) - E1(x,x,w)| against C (hbar/T + delta T) on ``window``.

    E0: Bloch for a periodic ``p``, else the box of half-width X.  E1: the box
    of the modified potential; for ``dirichlet-box`` the box itself is the
    modification (half-width R + 1).  The fitted C is the max ratio over all
    omega and T; T <= (R - R0 - 2)/2 is required.
    """
    if modification not in MODIFICATIONS:
        raise ValueError(f"modification must be one of {MODIFICATIONS}")
    Ts = np.asarray(Ts, dtype=float)
    if Ts.max() > (R - R0 - 2) / 2 + 1e-12:
        raise GeometryError(f"T up to {Ts.max()} needs R >= {2 * Ts.max() + R0 + 2}")
    omegas = np.linspace(window[0], window[1], n_omega)
    periodic = isinstance(p, TrigPotential)
    if X is None:
        X = 2 * R if modification != "dirichlet-box" else R + 1.0
    dlt = 0.0
    if modification == "periodize":
        P = 4 * R if period is None else period
        src = p if isinstance(p, SampledPotential) else _sampled(p, max(X, P / 2) + 1.0, hbar)
        from .potential import periodize
        p1 = periodize(src, P, min(0.2 * P, P / 4 - 1e-9))
    elif modification == "quadratic-well":
        dlt = hbar ** 2 if delta is None else delta
        p1 = _with_well(p, dlt, R)
    else:
        p1 = p
    Xb = R + 1.0 if modification == "dirichlet-box" else X
    N = bo.box_grid_size(Xb, window[1], hbar, box_factor)
    top = window[1] ** 2
    lam1, vec1, xs1 = bo.box_eigenpairs(p1, Xb, N, hbar, top)
    h1 = xs1[1] - xs1[0]
    i1 = bo._node(xs1, x, h1)
    e1 = np.array([np.sum(np.abs(vec1[i1, lam1 <= o ** 2]) ** 2) / h1 for o in omegas])
    if periodic and modification != "periodize":
        e0 = np.array([bo.bloch_spectral_kernel(p, x, x, o, hbar, Nk=64).value.real for o in omegas])
    else:
        src0 = p if not periodic else p
        N0 = bo.box_grid_size(X, window[1], hbar, box_factor)
        lam0, vec0, xs0 = bo.box_eigenpairs(src0, X, N0, hbar, top)
        h0 = xs0[1] - xs0[0]
        i0 = bo._node(xs0, x, h0)
        e0 = np.array([np.sum(np.abs(vec0[i0, lam0 <= o ** 2]) ** 2) / h0 for o in omegas])
    diffs = np.abs(e0 - e1)
    bound = hbar / Ts[:, None] + dlt * Ts[:, None]
    C = float((diffs[None, :] / bound).max())
    return CompareReport(modification, hbar, dlt, omegas, Ts, diffs, C)


def _sampled(p, extent, hbar):
    step = min(0.05, hbar)
    if callable(p) and not isinstance(p, TrigPotential):
        return SampledPotential.from_function(p, extent, step)
    return SampledPotential.from_function(lambda x: evaluate(p, x, "V0"), extent, step,
                                          lambda x: evaluate(p, x, "V1"))


def _with_well(p, delta, R):
    if isinstance(p, TrigPotential):
        def f(x):
            return evaluate(p, x, "V0") + delta * (np.asarray(x) / R) ** 2
        if np.any(p.v1):
            raise ValueError("quadratic well with V1 is not supported")
        return f
    if isinstance(p, SampledPotential):
        return SampledPotential.from_grid(p.x, p.samples_v0 + delta * (p.x / R) ** 2, p.samples_v1)
    return lambda x: p(x) + delta * (np.asarray(x) / R) ** 2
