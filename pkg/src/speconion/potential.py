"""Coefficient pairs (V0, V1) of the operator -h^2 d^2/dx^2 + h Op(V0 + 2 V1 xi).

Periodic coefficients are finite trigonometric sums; general coefficients
are sampled on a uniform grid and can be periodized by a windowed sum.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline

from .cutoffs import plateau
from .symbolcalc import WeylSymbol, XiGrid

HERMITIAN_TOL = 1e-12
TRUNCATION = 1e-14


def _as_mode_array(coeffs, nmax):
    out = np.zeros(2 * nmax + 1, dtype=complex)
    if coeffs is None:
        return out
    if isinstance(coeffs, dict):
        for m, c in coeffs.items():
            out[int(m) + nmax] = c
        return out
    arr = np.asarray(coeffs, dtype=complex)
    if arr.ndim != 1 or arr.size % 2 == 0:
        raise ValueError("coefficient array must have odd length 2M+1")
    n = arr.size // 2
    out[nmax - n:nmax + n + 1] = arr
    return out


def _max_mode(coeffs):
    if coeffs is None:
        return 0
    if isinstance(coeffs, dict):
        return max([abs(int(m)) for m in coeffs] + [0])
    return np.asarray(coeffs).size // 2


@dataclass(frozen=True)
class TrigPotential:
    """Real L-periodic pair (V0, V1) stored as Fourier coefficients.

    ``v0[m + nmax]`` is the coefficient of exp(i 2 pi m x / L).  Build from
    dicts ``{mode: complex}`` or centred arrays with :meth:`from_coeffs`.
    """

    period: float
    v0: np.ndarray
    v1: np.ndarray

    def __post_init__(self):
        if not self.period > 0:
            raise ValueError("period must be positive")
        if self.v0.shape != self.v1.shape or self.v0.size % 2 == 0:
            raise ValueError("V0 and V1 coefficient arrays must share an odd length")
        for name, c in (("V0", self.v0), ("V1", self.v1)):
            scale = max(1.0, np.abs(c).max(initial=0.0))
            if np.abs(c - np.conj(c[::-1])).max(initial=0.0) > HERMITIAN_TOL * scale:
                raise ValueError(f"{name} coefficients are not Hermitian (potential not real)")

    @classmethod
    def from_coeffs(cls, period, v0=None, v1=None):
        nmax = max(_max_mode(v0), _max_mode(v1))
        return cls(float(period), _as_mode_array(v0, nmax), _as_mode_array(v1, nmax))

    @classmethod
    def zero(cls, period=2 * np.pi):
        return cls.from_coeffs(period, {0: 0.0})

    @classmethod
    def constant(cls, c, period=2 * np.pi):
        return cls.from_coeffs(period, {0: c})

    @classmethod
    def cosine(cls, amplitude=2.0, period=2 * np.pi, which="V0"):
        """amplitude * cos(2 pi x / period) in V0 or V1."""
        c = {1: amplitude / 2, -1: amplitude / 2}
        if which == "V0":
            return cls.from_coeffs(period, c)
        return cls.from_coeffs(period, None, c)

    @property
    def nmax(self):
        return self.v0.size // 2

    @property
    def modes(self):
        return np.arange(-self.nmax, self.nmax + 1)

    @property
    def support(self):
        """Largest mode index carrying a nonzero coefficient."""
        nz = np.nonzero((np.abs(self.v0) > 0) | (np.abs(self.v1) > 0))[0]
        if nz.size == 0:
            return 0
        return int(np.abs(nz - self.nmax).max())

    @property
    def frequencies(self):
        return 2 * np.pi * self.modes / self.period

    def coeff(self, which, m):
        arr = self.v0 if which == "V0" else self.v1
        m = np.asarray(m)
        out = np.zeros(m.shape, dtype=complex)
        ok = np.abs(m) <= self.nmax
        out[ok] = arr[m[ok] + self.nmax]
        return out

    def sup_norm(self, which="V0"):
        """Upper bound sum |c_m| on the sup norm (exact for cosines)."""
        arr = self.v0 if which == "V0" else self.v1
        return float(np.abs(arr).sum())

    def scaled(self, s0=1.0, s1=1.0):
        return TrigPotential(self.period, self.v0 * s0, self.v1 * s1)

    def is_x_independent(self):
        mask = self.modes != 0
        return not (np.any(self.v0[mask] != 0) or np.any(self.v1[mask] != 0))


def evaluate(p, x, which="V0"):
    """Evaluate V0, V1 or their first derivatives (``"V0'"``, ``"V1'"``)."""
    deriv = which.endswith("'")
    arr = p.v0 if which.startswith("V0") else p.v1
    theta = p.frequencies
    c = arr * (1j * theta) if deriv else arr
    x = np.asarray(x, dtype=float)
    vals = np.exp(1j * np.multiply.outer(x, theta)) @ c
    return vals.real


def random_trig(rng, period=2 * np.pi, nmodes=4, amplitude=1.0, decay=1.0, v1_amplitude=0.0):
    """Random real trigonometric polynomial with geometrically decaying modes."""
    def draw(amp):
        c = {}
        for m in range(1, nmodes + 1):
            z = amp * np.exp(-decay * (m - 1)) * (rng.normal() + 1j * rng.normal()) / np.sqrt(2)
            c[m] = z
            c[-m] = np.conj(z)
        return c
    v1 = draw(v1_amplitude) if v1_amplitude else None
    return TrigPotential.from_coeffs(period, draw(amplitude), v1)


# ----------------------------------------------------------------------------
# sampled potentials and periodization


def _fd_sup_norms(f, h, order=4):
    # fourth-order central differences for derivatives 1..order
    stencils = {
        1: (np.array([1, -8, 0, 8, -1]) / 12.0, 1),
        2: (np.array([-1, 16, -30, 16, -1]) / 12.0, 2),
        3: (np.array([1, -8, 13, 0, -13, 8, -1]) / 8.0, 3),
        4: (np.array([-1, 12, -39, 56, -39, 12, -1]) / 6.0, 4),
    }
    norms = [float(np.abs(f).max(initial=0.0))]
    for k in range(1, order + 1):
        w, p = stencils[k]
        if f.size < w.size:
            norms.append(0.0)
            continue
        d = np.convolve(f, w[::-1], mode="valid") / h ** p
        norms.append(float(np.abs(d).max()))
    return tuple(norms)


@dataclass(frozen=True)
class SampledPotential:
    """(V0, V1) sampled on the uniform grid ``x_j = -X + j*step``."""

    samples_v0: np.ndarray
    samples_v1: np.ndarray
    extent: float
    step: float
    norms_v0: tuple = field(default=())
    norms_v1: tuple = field(default=())

    def __post_init__(self):
        v0 = np.asarray(self.samples_v0, dtype=float)
        v1 = np.asarray(self.samples_v1, dtype=float)
        if v0.shape != v1.shape or v0.ndim != 1:
            raise ValueError("V0 and V1 samples must share one uniform grid")
        n = int(round(2 * self.extent / self.step))
        if n + 1 != v0.size or abs(n * self.step - 2 * self.extent) > 1e-9 * self.extent:
            raise ValueError("samples do not match a uniform grid over [-X, X]")
        object.__setattr__(self, "samples_v0", v0)
        object.__setattr__(self, "samples_v1", v1)
        if not self.norms_v0:
            object.__setattr__(self, "norms_v0", _fd_sup_norms(v0, self.step))
        if not self.norms_v1:
            object.__setattr__(self, "norms_v1", _fd_sup_norms(v1, self.step))

    @property
    def x(self):
        return -self.extent + self.step * np.arange(self.samples_v0.size)

    @classmethod
    def from_grid(cls, x, v0, v1=None):
        x = np.asarray(x, dtype=float)
        dx = np.diff(x)
        if x.size < 2 or np.abs(dx - dx.mean()).max() > 1e-9 * abs(dx.mean()):
            raise ValueError("non-uniform grid")
        if abs(x[0] + x[-1]) > 1e-9 * max(1.0, abs(x[0])):
            raise ValueError("grid must be symmetric about 0")
        v1 = np.zeros_like(x) if v1 is None else v1
        return cls(np.asarray(v0, float), np.asarray(v1, float), float(x[-1]), float(dx.mean()))

    @classmethod
    def from_function(cls, f0, extent, step, f1=None):
        n = int(round(2 * extent / step))
        x = np.linspace(-extent, extent, n + 1)
        v1 = np.zeros_like(x) if f1 is None else f1(x)
        return cls(f0(x), v1, float(extent), float(step))

    def values(self, which="V0"):
        return self.samples_v0 if which == "V0" else self.samples_v1


def periodization_cutoff(x, period, width):
    """Window equal to 1 on |x| <= P/2 - width, vanishing at |x| = P/2."""
    return plateau(x, period / 2 - width, period / 2)


def periodize(p, period, cutoff_width, n_samples=None):
    """Windowed periodic sum  sum_k chi(x - kP) V(x - kP)  as a TrigPotential.

    ``p`` may be a :class:`SampledPotential` or a callable pair source
    ``(f0, f1)``.  The result agrees with ``p`` on |x| <= P - 2*width >= P/2
    and in particular on the core |x| <= P/4.
    """
    if not cutoff_width < period / 4:
        raise ValueError("cutoff width must be < P/4")
    if isinstance(p, SampledPotential):
        if period > 2 * p.extent * (1 + 1e-12):
            raise ValueError("extent too small: need P <= 2X")
        src = [(p.x, p.values("V0")), (p.x, p.values("V1"))]
        ratio = period / p.step
        on_grid = abs(ratio - round(ratio)) < 1e-9 * ratio
        n = n_samples or (int(round(ratio)) if on_grid else 2 * int(np.ceil(ratio)))
    else:
        raise TypeError("periodize expects a SampledPotential")

    xs = -period / 2 + period * np.arange(n) / n
    coeffs = []
    for xg, vals in src:
        if not np.any(vals):
            coeffs.append(np.zeros(1, dtype=complex))
            continue
        if on_grid and n_samples is None:
            # sample positions coincide with grid nodes: no interpolation
            interp = None
        else:
            interp = CubicSpline(xg, vals)
        # supp chi lies in [-P/2, P/2], so on one period only the k = 0 copy is live
        w = periodization_cutoff(xs, period, cutoff_width)
        if interp is None:
            idx = np.rint((xs - xg[0]) / p.step).astype(int)
            v = vals[idx]
        else:
            v = interp(xs)
        total = w * v
        # centred DFT: c_m = (1/n) sum_j f(x_j) exp(-i theta_m x_j)
        c = np.fft.fftshift(np.fft.fft(total)) / n
        m = np.arange(n) - n // 2
        c = c * np.exp(-1j * 2 * np.pi * m * (-period / 2) / period)
        if n % 2 == 0:
            # split the Nyquist mode symmetrically so the series stays real
            nyq = c[0]
            c = np.concatenate([[nyq / 2], c[1:], [nyq / 2]])
        cmax = np.abs(c).max()
        keep = np.nonzero(np.abs(c) >= TRUNCATION * cmax)[0]
        half = c.size // 2
        mt = int(np.abs(keep - half).max()) if keep.size else 0
        c = c[half - mt:half + mt + 1]
        c = 0.5 * (c + np.conj(c[::-1]))
        coeffs.append(c)
    nmax = max(c.size // 2 for c in coeffs)
    return TrigPotential(float(period), _as_mode_array(coeffs[0], nmax), _as_mode_array(coeffs[1], nmax))


def sample(p, extent, step):
    """Sample a TrigPotential on the uniform grid over [-extent, extent]."""
    n = int(round(2 * extent / step))
    x = np.linspace(-extent, extent, n + 1)
    return SampledPotential(evaluate(p, x, "V0"), evaluate(p, x, "V1"), float(extent), float(step))


def weyl_symbol_of(p, grid, theta_max=None):
    """Fourier-mode symbol q(theta, xi) = V0hat(theta) + 2 xi V1hat(theta)."""
    if not _commensurate(grid.L, p.period):
        raise ValueError("grid period must be a multiple of the potential period")
    ratio = int(round(grid.L / p.period))
    tmax = p.support * ratio if theta_max is None else theta_max
    vals = np.zeros((2 * tmax + 1, grid.size), dtype=complex)
    xi = grid.points
    for m in range(-p.support, p.support + 1):
        mm = m * ratio
        if abs(mm) > tmax:
            continue
        c0 = p.coeff("V0", m)
        c1 = p.coeff("V1", m)
        if c0 == 0 and c1 == 0:
            continue
        vals[mm + tmax] = c0 + 2 * xi * c1
    return WeylSymbol(grid, tmax, vals, real=True)


def _commensurate(L, P):
    r = L / P
    return abs(r - round(r)) < 1e-12 * r and round(r) >= 1


# ----------------------------------------------------------------------------
# text format


def dumps(p):
    lines = [f"period {float(p.period)!r}"]
    for name, arr in (("V0", p.v0), ("V1", p.v1)):
        lines.append(name)
        for m, c in zip(p.modes, arr):
            if c != 0:
                lines.append(f"{m} {float(c.real)!r} {float(c.imag)!r}")
    return "\n".join(lines) + "\n"


def loads(text):
    period = None
    blocks = {"V0": {}, "V1": {}}
    current = None
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "period":
            if len(parts) != 2:
                raise ValueError(f"line {lineno}: expected 'period <L>'")
            period = float(parts[1])
        elif parts[0] in blocks and len(parts) == 1:
            current = parts[0]
        else:
            if current is None or len(parts) != 3:
                raise ValueError(f"line {lineno}: expected 'mode_index re im' inside a V0/V1 block")
            blocks[current][int(parts[0])] = complex(float(parts[1]), float(parts[2]))
    if period is None:
        raise ValueError("missing 'period' header")
    return TrigPotential.from_coeffs(period, blocks["V0"] or None, blocks["V1"] or None)


def load(path):
    with open(path) as fh:
        return loads(fh.read())


def save(p, path):
    with open(path, "w") as fh:
        fh.write(dumps(p))
