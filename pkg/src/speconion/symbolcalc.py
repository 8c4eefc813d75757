"""Exact Weyl calculus for symbols that are finite Fourier series in x.

A symbol a(x, xi) = sum_theta ahat(theta, xi) exp(i theta x), theta = 2 pi m / L,
is stored as an array ``values[m + thetaMax, j]`` over a xi-grid of spacing
pi*hbar/L.  With that spacing the Weyl half-shift hbar*theta/2 is exactly m grid
steps, so composition

    chat(theta, xi) = sum_{theta1 + theta2 = theta}
                      ahat(theta1, xi + hbar theta2 / 2) bhat(theta2, xi - hbar theta1 / 2)

needs no interpolation and is exact on the grid.

The grid may carry several sub-offsets in [0, step): points are
``(j - J)*step + offsets[s]`` stored at flat index ``j*S + s``, and a shift by m
base steps is a shift by ``m*S`` flat positions.  This lets one computation
serve many quasimomenta at once.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .cutoffs import band_cutoff

REAL_TOL = 1e-12


class SupportMarginError(ValueError):
    """A Weyl shift needed a value outside the xi-grid."""


class GridMismatchError(ValueError):
    pass


@dataclass(frozen=True)
class XiGrid:
    hbar: float
    L: float
    xi_max: float
    offsets: tuple = (0.0,)

    def __post_init__(self):
        if not (0 < self.hbar and self.L > 0 and self.xi_max > 0):
            raise ValueError("hbar, L and xi_max must be positive")
        offs = tuple(float(o) for o in self.offsets)
        step = self.step
        if any(not (0 <= o < step) for o in offs) or list(offs) != sorted(set(offs)):
            raise ValueError("offsets must be sorted, distinct and lie in [0, step)")
        object.__setattr__(self, "offsets", offs)

    @cached_property
    def step(self):
        # computed once so that half-shifts are exactly integer multiples
        return np.pi * self.hbar / self.L

    @cached_property
    def J(self):
        return int(np.ceil(self.xi_max / self.step))

    @property
    def stride(self):
        return len(self.offsets)

    @property
    def n_base(self):
        return 2 * self.J + 1

    @property
    def size(self):
        return self.n_base * self.stride

    @cached_property
    def points(self):
        base = (np.arange(self.n_base) - self.J) * self.step
        pts = (base[:, None] + np.asarray(self.offsets)[None, :]).ravel()
        pts.flags.writeable = False
        return pts

    def key(self):
        return (self.hbar, self.L, self.J, self.offsets)

    def same_as(self, other):
        return self.key() == other.key()

    def theta(self, m):
        return 2 * np.pi * np.asarray(m) / self.L

    def locate(self, xi0):
        """Flat index of the grid point equal to ``xi0`` (up to rounding)."""
        q = xi0 / self.step
        j = np.floor(q)
        frac = (q - j) * self.step
        for s, o in enumerate(self.offsets):
            for dj, target in ((0, o), (1, o + self.step), (-1, o - self.step)):
                if abs(frac - target) <= 1e-9 * self.step:
                    jj = int(j) - dj + self.J
                    if 0 <= jj < self.n_base:
                        return jj * self.stride + s
        raise SupportMarginError(f"xi = {xi0!r} is not a grid point")

    def with_offsets(self, offsets):
        return XiGrid(self.hbar, self.L, self.xi_max, tuple(offsets))

    @classmethod
    def for_quasimomenta(cls, hbar, L, xi_max, ks):
        """Grid whose offsets contain hbar*k modulo the step for every k."""
        step = np.pi * hbar / L
        offs = np.mod(hbar * np.asarray(ks, dtype=float), step)
        offs[np.isclose(offs, step, rtol=0, atol=1e-13 * step)] = 0.0
        offs = np.unique(np.round(offs / step, 13) * step)
        offs = offs[offs < step]
        return cls(hbar, L, xi_max, tuple(offs))

    @classmethod
    def for_window(cls, hbar, L, a, b, offsets=(0.0,)):
        return cls(hbar, L, b + 2.0, tuple(offsets))


@dataclass
class WeylSymbol:
    grid: XiGrid
    theta_max: int
    values: np.ndarray
    real: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=complex)
        if self.values.shape != (2 * self.theta_max + 1, self.grid.size):
            raise ValueError(f"values shape {self.values.shape} does not match modes/grid")
        if self.real and not self.is_hermitian():
            raise ValueError("symbol flagged real but ahat(-theta) != conj(ahat(theta))")

    # -- construction -------------------------------------------------------

    @classmethod
    def zeros(cls, grid, theta_max=0, real=True):
        return cls(grid, theta_max, np.zeros((2 * theta_max + 1, grid.size), complex), real)

    @classmethod
    def multiplier(cls, grid, f, real=True):
        """x-independent symbol f(xi)."""
        vals = np.asarray(f(grid.points) if callable(f) else f, dtype=complex)[None, :]
        return cls(grid, 0, vals, real)

    @classmethod
    def from_function(cls, grid, theta_max, f, real=False):
        """``f(m, xi)`` gives ahat(theta_m, xi) for m in [-theta_max, theta_max]."""
        vals = np.array([f(m, grid.points) for m in range(-theta_max, theta_max + 1)], dtype=complex)
        return cls(grid, theta_max, vals, real)

    # -- basic access -------------------------------------------------------

    @property
    def modes(self):
        return np.arange(-self.theta_max, self.theta_max + 1)

    def mode(self, m):
        if abs(m) > self.theta_max:
            return np.zeros(self.grid.size, complex)
        return self.values[m + self.theta_max]

    def is_hermitian(self, tol=REAL_TOL):
        v = self.values
        scale = max(1.0, np.abs(v).max(initial=0.0))
        return np.abs(v - np.conj(v[::-1])).max(initial=0.0) <= tol * scale

    def sup(self):
        return float(np.abs(self.values).max(initial=0.0))

    def copy(self):
        return WeylSymbol(self.grid, self.theta_max, self.values.copy(), self.real)

    def padded(self, theta_max):
        if theta_max < self.theta_max:
            raise ValueError("cannot pad to fewer modes")
        d = theta_max - self.theta_max
        vals = np.pad(self.values, ((d, d), (0, 0)))
        return WeylSymbol(self.grid, theta_max, vals, self.real)

    def trimmed(self, tol=0.0):
        """Drop outer modes whose sup-norm is <= tol (exact zeros by default)."""
        norms = np.abs(self.values).max(axis=1)
        live = np.nonzero(norms > tol)[0]
        if live.size == 0:
            return WeylSymbol.zeros(self.grid, 0, self.real)
        t = int(np.abs(live - self.theta_max).max())
        vals = self.values[self.theta_max - t:self.theta_max + t + 1]
        return WeylSymbol(self.grid, t, vals.copy(), self.real)

    def __add__(self, other):
        _check_grid(self, other)
        t = max(self.theta_max, other.theta_max)
        vals = self.padded(t).values + other.padded(t).values
        return WeylSymbol(self.grid, t, vals, self.real and other.real)

    def __sub__(self, other):
        return self + other * (-1.0)

    def __mul__(self, c):
        c = complex(c)
        real = self.real and c.imag == 0
        return WeylSymbol(self.grid, self.theta_max, self.values * c, real)

    __rmul__ = __mul__

    def times_xi(self, f):
        """Pointwise product with an x-independent function f(xi) (no Weyl shift)."""
        w = np.asarray(f(self.grid.points) if callable(f) else f)
        return WeylSymbol(self.grid, self.theta_max, self.values * w[None, :], self.real and np.isrealobj(w))

    def filter_modes(self, weights):
        """Multiply mode m by ``weights(theta_m)`` (a Fourier multiplier in x)."""
        w = np.asarray(weights(self.grid.theta(self.modes)), dtype=float)
        return WeylSymbol(self.grid, self.theta_max, self.values * w[:, None], self.real)

    def zero_mode(self):
        return self.mode(0).copy()


def _check_grid(a, b):
    if not a.grid.same_as(b.grid):
        raise GridMismatchError("symbols live on different xi-grids")


def _shifted(row, steps, stride):
    """row evaluated at xi + steps*step, plus a mask of unknown positions.

    Leaving the grid is harmless when the row itself vanishes on the edge
    strip it would have to look past: such a row is compactly supported
    inside the grid and its zero extension is exact.
    """
    s = steps * stride
    n = row.size
    out = np.zeros_like(row)
    bad = np.zeros(n, dtype=bool)
    if s == 0:
        return row, bad
    if abs(s) >= n:
        if np.any(row != 0):
            bad[:] = True
        return out, bad
    if s > 0:
        out[:n - s] = row[s:]
        if np.any(row[n - s:] != 0):
            bad[n - s:] = True
    else:
        out[-s:] = row[:n + s]
        if np.any(row[:-s] != 0):
            bad[:-s] = True
    return out, bad


def _shift_product(ra, sa, rb, sb, stride):
    A, bad_a = _shifted(ra, sa, stride)
    B, bad_b = _shifted(rb, sb, stride)
    if (bad_a.any() and np.any(B[bad_a] != 0)) or (bad_b.any() and np.any(A[bad_b] != 0)) \
            or np.any(bad_a & bad_b):
        raise SupportMarginError("Weyl shift leaves the xi-grid where the other factor is nonzero")
    return A * B


def _live_modes(a):
    return [m for m in a.modes if np.any(a.values[m + a.theta_max] != 0)]


def weyl_compose(a, b):
    """Symbol of Op(a) Op(b); exact mode formula on the shared grid."""
    _check_grid(a, b)
    S = a.grid.stride
    t = a.theta_max + b.theta_max
    out = np.zeros((2 * t + 1, a.grid.size), complex)
    for m1 in _live_modes(a):
        ra = a.values[m1 + a.theta_max]
        for m2 in _live_modes(b):
            rb = b.values[m2 + b.theta_max]
            out[m1 + m2 + t] += _shift_product(ra, m2, rb, -m1, S)
    return WeylSymbol(a.grid, t, out, False)


def commutator(a, b):
    """Symbol of [Op(a), Op(b)]; if both inputs are real, the result / i is real."""
    _check_grid(a, b)
    S = a.grid.stride
    t = a.theta_max + b.theta_max
    out = np.zeros((2 * t + 1, a.grid.size), complex)
    for m1 in _live_modes(a):
        ra = a.values[m1 + a.theta_max]
        for m2 in _live_modes(b):
            rb = b.values[m2 + b.theta_max]
            out[m1 + m2 + t] += _shift_product(ra, m2, rb, -m1, S) - _shift_product(rb, m1, ra, -m2, S)
    return WeylSymbol(a.grid, t, out, False)


def commutator_with_laplacian(g):
    """s with i[Op(g), -hbar^2 Laplacian] = hbar Op(s):  shat = -2i theta xi ghat."""
    theta = g.grid.theta(g.modes)[:, None]
    vals = -2j * theta * g.grid.points[None, :] * g.values
    return WeylSymbol(g.grid, g.theta_max, vals, False)


def ad_laplacian(g):
    """Symbol of [Op(g), -hbar^2 Laplacian] = -i hbar s."""
    return commutator_with_laplacian(g) * (-1j * g.grid.hbar)


def default_support(lo, hi):
    w = hi - lo
    return lo - 0.25 * w, hi + 0.25 * w


def solve_homological(q, xi_band, theta_band, support=None, tol=1e-13):
    """g with  i[Op(g), -hbar^2 Laplacian] = hbar Op(q chi)  on the theta band.

    ghat(theta, xi) = i qhat(theta, xi) chi(|xi|) / (2 theta xi) for
    theta_lo <= |theta| <= theta_hi, where chi is 1 on ``xi_band`` and vanishes
    outside ``support`` (default: the 1.5x enlargement of the band).
    """
    lo, hi = xi_band
    s_lo, s_hi = default_support(lo, hi) if support is None else support
    if not lo > 0 or s_lo <= 0:
        raise ValueError("xi band (with its cutoff support) must stay away from xi = 0")
    th_lo, th_hi = theta_band
    if th_lo <= 0:
        raise ValueError("theta band must exclude theta = 0")
    xi = q.grid.points
    chi = band_cutoff(xi, lo, hi, s_lo, s_hi)
    theta = np.abs(q.grid.theta(q.modes))
    in_band = (theta >= th_lo * (1 - 1e-12)) & (theta <= th_hi * (1 + 1e-12))
    on = chi > 0
    low = theta < th_lo * (1 - 1e-12)
    band = (np.abs(xi) >= lo) & (np.abs(xi) <= hi)
    if low.any():
        sub = np.abs(q.values[low][:, band])
        scale = max(1.0, q.sup())
        if sub.size and sub.max() > tol * scale:
            i, j = np.unravel_index(np.argmax(sub), sub.shape)
            m = q.modes[low][i]
            raise ValueError(
                f"q has content below the theta band at theta={q.grid.theta(m):.6g}, "
                f"xi={xi[band][j]:.6g} (|qhat|={sub[i, j]:.3g})")
    vals = np.zeros_like(q.values)
    denom = 2 * q.grid.theta(q.modes)[:, None] * xi[None, :]
    rows = np.nonzero(in_band)[0]
    cols = np.nonzero(on)[0]
    vals[np.ix_(rows, cols)] = 1j * q.values[np.ix_(rows, cols)] * chi[cols] / denom[np.ix_(rows, cols)]
    return WeylSymbol(q.grid, q.theta_max, vals, q.real)


def conjugate_series(h, g, K, laplacian=1.0):
    """Truncated series for exp(-i Op(g)) H exp(i Op(g)).

    H has symbol ``laplacian * xi^2 + h``; the xi^2 part is never stored on the
    grid and enters only through :func:`ad_laplacian`.  Returns the symbol
    ``c`` with conjugated symbol ``laplacian * xi^2 + c`` summed to order K,
    and the sup-norm of the first dropped term as a remainder estimate.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    total = h.copy()
    total.real = False
    if not np.any(g.values):
        return _realify(total, h.real), 0.0
    term = h
    remainder = 0.0
    for j in range(1, K + 2):
        nxt = commutator(g, term)
        if j == 1 and laplacian != 0:
            nxt = nxt + ad_laplacian(g) * laplacian
        # ad^j / (i^j j!) built incrementally: divide by i*j each level
        term = nxt * (1.0 / (1j * j))
        term = term.trimmed()
        if j <= K:
            total = total + term
        else:
            remainder = term.sup()
    return _realify(total, h.real and g.real), remainder


def _realify(s, real):
    if not real:
        return s
    vals = 0.5 * (s.values + np.conj(s.values[::-1]))
    return WeylSymbol(s.grid, s.theta_max, vals, True)


@dataclass
class ClassNormReport:
    radius: float
    table: np.ndarray = field(repr=False)

    def __str__(self):
        rows = [f"r = {self.radius:g}"]
        for a, row in enumerate(self.table):
            rows.append(f"alpha={a}: " + " ".join(f"{v:.3e}" for v in row))
        return "\n".join(rows)


def sup_norm(a, alpha, beta):
    """max over (theta, xi) of |theta|^alpha |d_xi^beta ahat| (finite differences)."""
    theta = np.abs(a.grid.theta(a.modes))[:, None]
    v = a.values
    S = a.grid.stride
    for _ in range(beta):
        if v.shape[1] <= S:
            return 0.0
        v = (v[:, S:] - v[:, :-S]) / a.grid.step
    return float((theta ** alpha * np.abs(v)).max(initial=0.0))


def class_norm_report(a, r, order=4):
    tab = np.array([[sup_norm(a, al, be) * r ** (-al) for be in range(order + 1)]
                    for al in range(order + 1)])
    return ClassNormReport(float(r), tab)


def dumps(a):
    g = a.grid
    lines = [f"# hbar {float(g.hbar)!r} L {float(g.L)!r} xi_max {float(g.xi_max)!r} J {g.J} theta_max {a.theta_max} "
             f"real {int(a.real)} offsets {' '.join(repr(float(o)) for o in g.offsets)}"]
    nz = np.nonzero(a.values)
    for i, j in zip(*nz):
        v = a.values[i, j]
        lines.append(f"{i - a.theta_max} {j} {float(v.real)!r} {float(v.imag)!r}")
    return "\n".join(lines) + "\n"


def loads(text):
    lines = text.splitlines()
    head = lines[0].lstrip("#").split()
    kv = {}
    i = 0
    while i < len(head):
        key = head[i]
        if key == "offsets":
            kv[key] = tuple(float(x) for x in head[i + 1:])
            break
        kv[key] = head[i + 1]
        i += 2
    grid = XiGrid(float(kv["hbar"]), float(kv["L"]), float(kv["xi_max"]), kv.get("offsets", (0.0,)))
    t = int(kv["theta_max"])
    vals = np.zeros((2 * t + 1, grid.size), complex)
    for line in lines[1:]:
        if not line.strip():
            continue
        m, j, re, im = line.split()
        vals[int(m) + t, int(j)] = complex(float(re), float(im))
    return WeylSymbol(grid, t, vals, bool(int(kv["real"])))
