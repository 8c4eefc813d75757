"""Reference spectral functions: Floquet plane-wave solver and Dirichlet box.

Both evaluate E(x, y, omega), the kernel of the projector of
H = -hbar^2 d^2/dx^2 + hbar Op(V0 + 2 V1 xi) onto energies <= omega^2.
"""

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.linalg import eigh, eigh_tridiagonal, eigvalsh, expm
from scipy.optimize import brentq

from .potential import SampledPotential, TrigPotential, evaluate
from .symbolcalc import SupportMarginError

METHODS = ("bloch", "box", "multiplier", "conjugated")


@dataclass(frozen=True)
class SpectralSample:
    x: float
    y: float
    omega: float
    value: complex
    deriv: tuple = (0, 0)
    method: str = "bloch"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method tag {self.method!r}")


@dataclass(frozen=True)
class BlochMatrix:
    k: float
    M: int
    hbar: float
    matrix: np.ndarray


class CutoffTooSmall(ValueError):
    pass


class ResolutionError(ValueError):
    pass


def bloch_matrix(p, k, M, hbar, as_array=True):
    """Floquet block of H at quasimomentum k in the basis exp(i(k + theta_m)x), |m| <= M.

    H[m', m] = hbar^2 (k+theta_m)^2 delta + hbar [V0hat(m'-m) + hbar(2k + theta_m + theta_m') V1hat(m'-m)]
    """
    if M < p.support + 8:
        raise CutoffTooSmall(f"mode cutoff M={M} must be >= support + 8 = {p.support + 8}")
    m = np.arange(-M, M + 1)
    theta = 2 * np.pi * m / p.period
    d = m[:, None] - m[None, :]
    H = hbar * (p.coeff("V0", d) + hbar * (2 * k + theta[None, :] + theta[:, None]) * p.coeff("V1", d))
    H[np.diag_indices_from(H)] += hbar ** 2 * (k + theta) ** 2
    if as_array:
        return H
    return BlochMatrix(float(k), int(M), float(hbar), H)


def realize_symbol_matrix(a, k, M, laplacian=0.0):
    """Matrix of Op(a) at quasimomentum k: A[m', m] = ahat(theta_{m'-m}, hbar(k + (theta_m + theta_m')/2)).

    ``laplacian`` adds that multiple of xi^2 on the diagonal.
    """
    g = a.grid
    m = np.arange(-M, M + 1)
    start = g.locate(g.hbar * k)
    S = g.stride
    idx = start + (m[:, None] + m[None, :]) * S
    if idx.min() < 0 or idx.max() >= g.size:
        raise SupportMarginError("xi out of grid for this quasimomentum and cutoff")
    d = m[:, None] - m[None, :]
    A = np.zeros((m.size, m.size), complex)
    ok = np.abs(d) <= a.theta_max
    A[ok] = a.values[d[ok] + a.theta_max, idx[ok]]
    if laplacian:
        xi = g.hbar * (k + 2 * np.pi * m / g.L)
        A[np.diag_indices_from(A)] += laplacian * xi ** 2
    return A


def default_cutoff(p, hbar, omega):
    step = hbar * 2 * np.pi / p.period
    return int(np.ceil((omega + 0.5) / step)) + p.support + 8


def _plane_wave_rows(k, M, period, x, order):
    m = np.arange(-M, M + 1)
    kt = k + 2 * np.pi * m / period
    return np.exp(1j * kt * x) * (1j * kt) ** order


def _k_integrand(p, k, hbar, M, x, y, omega2, deriv):
    lam, vec = eigh(bloch_matrix(p, k, M, hbar))
    occ = lam <= omega2
    if not occ.any():
        return 0.0
    ux = _plane_wave_rows(k, M, p.period, x, deriv[0]) @ vec[:, occ]
    uy = _plane_wave_rows(k, M, p.period, y, deriv[1]) @ vec[:, occ]
    return np.sum(ux * np.conj(uy))


def band_crossings(p, hbar, M, omega2, kgrid):
    """Quasimomenta where some band equals omega^2, located by bisection."""
    lam = np.array([eigvalsh(bloch_matrix(p, k, M, hbar)) for k in kgrid])
    f = lam - omega2
    roots = []
    for j in range(kgrid.size - 1):
        change = np.nonzero(f[j] * f[j + 1] < 0)[0]
        for n in change:
            def g(k, n=n):
                return eigvalsh(bloch_matrix(p, k, M, hbar))[n] - omega2
            try:
                roots.append(brentq(g, kgrid[j], kgrid[j + 1], xtol=1e-14, rtol=1e-15, maxiter=200))
            except (RuntimeError, ValueError) as exc:
                raise RuntimeError(f"band edge unresolved near k={kgrid[j]:.6g}") from exc
    return np.array(sorted(roots))


def bloch_spectral_kernel(p, x, y, omega, hbar, Nk=256, M=None, deriv=(0, 0), nodes=3):
    """E(x, y, omega) for a periodic potential by Floquet decomposition.

    The Brillouin zone [0, 2 pi / L) is cut into Nk cells, each further split
    at every band crossing of omega^2; every piece is integrated with a
    ``nodes``-point Gauss-Legendre rule.
    """
    M = default_cutoff(p, hbar, omega) if M is None else M
    kmax = 2 * np.pi / p.period
    edges = np.linspace(0.0, kmax, Nk + 1)
    omega2 = omega ** 2
    cuts = band_crossings(p, hbar, M, omega2, edges)
    pts = np.unique(np.concatenate([edges, cuts]))
    gx, gw = np.polynomial.legendre.leggauss(nodes)
    total = 0.0 + 0.0j
    for a, b in zip(pts[:-1], pts[1:]):
        if b - a <= 0:
            continue
        half = 0.5 * (b - a)
        mid = 0.5 * (a + b)
        for t, w in zip(gx, gw):
            total += w * half * _k_integrand(p, mid + half * t, hbar, M, x, y, omega2, deriv)
    return SpectralSample(float(x), float(y), float(omega), complex(total / (2 * np.pi)), tuple(deriv), "bloch")


def projector_at_k(p, k, hbar, M, omega):
    lam, vec = eigh(bloch_matrix(p, k, M, hbar))
    occ = vec[:, lam <= omega ** 2]
    return occ @ occ.conj().T


# ----------------------------------------------------------------------------
# Dirichlet box


def box_hamiltonian(p, X, Ngrid, hbar):
    """Second-order finite differences on [-X, X], Dirichlet ends.

    Returns (diag, offdiag, x): a Hermitian tridiagonal matrix with complex
    off-diagonal when V1 is present (symmetrised 1/2(V1 D + D V1) stencil).
    """
    h = 2 * X / (Ngrid + 1)
    x = -X + h * np.arange(1, Ngrid + 1)
    if isinstance(p, TrigPotential):
        v0 = evaluate(p, x, "V0")
        xe = np.concatenate([[x[0] - h], x, [x[-1] + h]])
        v1 = evaluate(p, xe, "V1")
    elif isinstance(p, SampledPotential):
        if X > p.extent * (1 + 1e-12):
            raise ValueError("box larger than the sampled extent")
        xe = np.concatenate([[x[0] - h], x, [x[-1] + h]])
        xe = np.clip(xe, -p.extent, p.extent)
        v0 = CubicSpline(p.x, p.samples_v0)(x)
        v1 = CubicSpline(p.x, p.samples_v1)(xe)
    elif callable(p):
        v0 = p(x)
        v1 = np.zeros(Ngrid + 2)
    else:
        raise TypeError("unsupported potential type")
    diag = 2 * hbar ** 2 / h ** 2 + hbar * v0
    # hbar^2 (V1 D + D V1) with D = -i d/dx, central differences
    off = -hbar ** 2 / h ** 2 - 1j * hbar ** 2 * (v1[1:-2] + v1[2:-1]) / (2 * h)
    return diag, off, x


def _real_tridiagonal(off):
    # D H D* is real for D = diag(ph), ph_{i+1} = ph_i off_i / |off_i|
    mag = np.abs(off)
    ph = np.ones(off.size + 1, dtype=complex)
    nz = mag > 0
    unit = np.ones_like(off)
    unit[nz] = off[nz] / mag[nz]
    ph[1:] = np.cumprod(unit)
    return mag, ph


def box_eigenpairs(p, X, Ngrid, hbar, upper):
    diag, off, x = box_hamiltonian(p, X, Ngrid, hbar)
    mag, ph = _real_tridiagonal(off)
    lo = diag.min() - 2 * mag.max(initial=0.0) - 1.0
    if upper < lo:
        return np.zeros(0), np.zeros((Ngrid, 0)), x
    lam, vec = eigh_tridiagonal(diag.real, mag, select="v", select_range=(lo, upper))
    # undo the phase gauge: psi = conj(D) phi with D = diag(ph)
    vec = np.conj(ph)[:, None] * vec
    return lam, vec, x


def box_spectral_kernel(p, X, Ngrid, x, y, omega, hbar, check_resolution=True):
    if check_resolution and Ngrid < 20 * X * omega / (np.pi * hbar):
        raise ResolutionError(f"Ngrid={Ngrid} below 20 X omega/(pi hbar)")
    if max(abs(x), abs(y)) > X / 2:
        raise ValueError("evaluation points must satisfy |x|, |y| <= X/2")
    lam, vec, xs = box_eigenpairs(p, X, Ngrid, hbar, omega ** 2)
    h = xs[1] - xs[0]
    ix = _node(xs, x, h)
    iy = _node(xs, y, h)
    val = np.sum(vec[ix] * np.conj(vec[iy])) / h
    return SpectralSample(float(x), float(y), float(omega), complex(val), (0, 0), "box")


def _node(xs, x, h):
    i = int(np.rint((x - xs[0]) / h))
    if abs(xs[i] - x) > 1e-9 * h:
        raise ValueError(f"x={x} is not a box grid node; choose Ngrid so it is")
    return i


def box_grid_size(X, omega, hbar, factor=1, through=(0.0,)):
    """Smallest admissible odd Ngrid (times ``factor``) so that 0 is a node."""
    n = int(np.ceil(20 * X * omega / (np.pi * hbar))) * factor
    if n % 2 == 0:
        n += 1
    return n


def dirichlet_sine_sum(X, x, y, omega, hbar):
    """Closed-form free Dirichlet kernel on [-X, X]: sum over n pi hbar / 2X <= omega."""
    nmax = int(np.floor(2 * X * omega / (np.pi * hbar) + 1e-12))
    n = np.arange(1, nmax + 1)
    s = np.sin(n * np.pi * (x + X) / (2 * X)) * np.sin(n * np.pi * (y + X) / (2 * X))
    return s.sum() / X


def discrete_dirichlet_sum(X, Ngrid, x, y, omega, hbar, c=0.0):
    """Closed-form kernel of the three-point box operator for V0 = c: sampled sines, shifted eigenvalues."""
    h = 2 * X / (Ngrid + 1)
    n = np.arange(1, Ngrid + 1)
    lam = 4 * hbar ** 2 / h ** 2 * np.sin(n * np.pi / (2 * (Ngrid + 1))) ** 2 + hbar * c
    occ = n[lam <= omega ** 2]
    i, j = _node(-X + h * n, x, h), _node(-X + h * n, y, h)
    s = np.sin(np.outer(occ, [i + 1, j + 1]) * np.pi / (Ngrid + 1))
    return 2 / (Ngrid + 1) * np.sum(s[:, 0] * s[:, 1]) / h


# ----------------------------------------------------------------------------
# band gaps


def band_edges(p, hbar, nbands, Nk=64, M=None, dps=0):
    """Lowest ``nbands`` band intervals (min_k, max_k) of lambda_n(k).

    With ``dps > 0`` the edges are recomputed with mpmath at k = 0 and k = pi/L,
    where the band extrema of a real Hill operator sit.
    """
    step = hbar * 2 * np.pi / p.period
    if M is None:
        M = int(np.ceil(np.sqrt(nbands) * p.period / (2 * np.pi))) + nbands + p.support + 16
    ks = np.concatenate([np.linspace(0, 2 * np.pi / p.period, Nk + 1), [np.pi / p.period]])
    lam = np.array([eigvalsh(bloch_matrix(p, k, M, hbar))[:nbands] for k in ks])
    lo = lam.min(axis=0)
    hi = lam.max(axis=0)
    if dps:
        e0 = _mp_eigs(p, 0.0, M, hbar, dps)[:nbands]
        e1 = _mp_eigs(p, 0.5, M, hbar, dps)[:nbands]
        both = np.vstack([e0, e1])
        lo = [min(a, b) for a, b in both.T]
        hi = [max(a, b) for a, b in both.T]
        return lo, hi
    return list(lo), list(hi)


def _mp_eigs(p, kappa, M, hbar, dps):
    # quasimomentum k = 2 pi kappa / L, kept in extended precision so that the
    # k = pi/L degeneracy structure is not broken by rounding of L
    import mpmath as mp
    with mp.workdps(dps):
        m = np.arange(-M, M + 1)
        n = m.size
        A = mp.matrix(n, n)
        L = mp.mpf(p.period)
        hb = mp.mpf(hbar)
        kk = 2 * mp.pi * mp.mpf(kappa) / L
        for i in range(n):
            for j in range(n):
                d = int(m[i] - m[j])
                if abs(d) > p.nmax:
                    c0 = c1 = 0
                else:
                    c0 = mp.mpc(p.v0[d + p.nmax])
                    c1 = mp.mpc(p.v1[d + p.nmax])
                th_i = 2 * mp.pi * int(m[i]) / L
                th_j = 2 * mp.pi * int(m[j]) / L
                val = hb * (c0 + hb * (2 * kk + th_i + th_j) * c1)
                if i == j:
                    val += hb ** 2 * (kk + th_j) ** 2
                A[i, j] = val
        ev = mp.eighe(A, eigvals_only=True)
        return sorted(ev)


def band_gaps(p, hbar, window=None, nbands=16, Nk=64, M=None, dps=0):
    """Gaps between consecutive bands as (center, width); width <= 0 means no gap.

    Gap n (n = 1, 2, ...) separates band n from band n + 1, counting bands
    from 1.  With ``window`` only gaps whose center lies in it are returned.
    """
    lo, hi = band_edges(p, hbar, nbands + 1, Nk=Nk, M=M, dps=dps)
    out = []
    for n in range(nbands):
        width = lo[n + 1] - hi[n]
        center = 0.5 * (lo[n + 1] + hi[n])
        if window is None or window[0] <= float(center) <= window[1]:
            out.append((n + 1, float(center), float(width)))
    return out


# ----------------------------------------------------------------------------
# kernel of U E(multiplier) U*


def _cell_weights(tau, order=8):
    """Weights integrating, over [0, tau], the interpolant through t = -3, ..., 4."""
    t = np.arange(order) - (order // 2 - 1)
    V = np.vander(t, order, increasing=True).astype(float)
    j = np.arange(order)
    moments = tau ** (j + 1) / (j + 1)
    return np.linalg.solve(V.T, moments)


def uniform_integral(f, x0, h, lo, hi, order=8):
    """int_lo^hi of a function sampled at x0 + i h, i = 0 .. len(f) - 1.

    Each cell is integrated with the degree ``order - 1`` interpolant on the
    ``order`` surrounding samples, so lo and hi need not be nodes.
    """
    f = np.asarray(f)
    back = order // 2 - 1
    full = _cell_weights(1.0, order)
    c_lo = int(np.floor((lo - x0) / h))
    c_hi = int(np.floor((hi - x0) / h))
    if c_lo - back < 0 or c_hi + order - back > f.size:
        raise ValueError("samples do not cover the integration range")
    total = 0.0
    for c in range(c_lo, c_hi + 1):
        t0 = max(0.0, (lo - x0) / h - c)
        t1 = min(1.0, (hi - x0) / h - c)
        if t1 <= t0:
            continue
        w = full if (t0 == 0.0 and t1 == 1.0) else _cell_weights(t1, order) - _cell_weights(t0, order)
        total = total + h * np.dot(w, f[c - back:c - back + order])
    return total


def conjugated_projector_kernel(log, mult, p, x, y, omega, hbar, Nk=None, M=24, deriv=(0, 0)):
    """E(x, y, omega) of U Op(xi^2 + hbar qt) U* with U = prod_j exp(i Op(g_j)).

    The plane wave exp(i xi x / hbar) is mapped to psi_xi = U exp(i xi x / hbar),
    read off from column 0 of the layer exponentials realized at k = xi / hbar.
    Then E = multiplier kernel + (2 pi hbar)^-1 int_G (psi_xi(x) conj psi_xi(y) - free) dxi,
    integrated on the xi-grid of the log.  ``Nk`` (quasimomenta per Brillouin
    zone) is fixed by that grid; if given it must match.
    """
    from .multiplier import multiplier_kernel, sublevel_intervals

    if log is not None and abs(log.hbar - hbar) > 1e-15 * hbar:
        raise ValueError("log was built for another hbar")
    base = multiplier_kernel(mult, x, y, omega, hbar, deriv)
    gens = [] if log is None else [g for g in log.generators() if np.any(g.values)]
    if not gens:
        return SpectralSample(base.x, base.y, base.omega, base.value, base.deriv, "conjugated")
    grid = gens[0].grid
    if abs(grid.L - p.period) > 1e-12 * p.period:
        raise ValueError("potential period does not match the gauge grid")
    S = grid.stride
    if not np.allclose(np.asarray(grid.offsets), np.arange(S) * grid.step / S, rtol=0, atol=1e-12 * grid.step):
        raise ValueError("conjugated kernel needs equally spaced grid offsets")
    if Nk is not None and Nk != 2 * S:
        raise ValueError(f"Nk={Nk} does not match the {2 * S} quasimomenta per zone carried by the grid")
    h = grid.step / S
    intervals = sublevel_intervals(mult, omega, hbar)
    lo = min(a for a, _ in intervals)
    hi = max(b for _, b in intervals)
    i0 = int(np.floor(lo / h)) - 6
    i1 = int(np.ceil(hi / h)) + 6
    nodes = np.arange(i0, i1 + 1) * h
    m = np.arange(-M, M + 1)
    F = np.zeros(nodes.size, complex)
    for i, xi in enumerate(nodes):
        k = xi / hbar
        col = np.zeros(m.size, complex)
        col[M] = 1.0
        moved = False
        for g in reversed(gens):
            A = realize_symbol_matrix(g, k, M)
            if np.any(A):
                col = expm(1j * A) @ col
                moved = True
        if not moved:
            continue
        px = _plane_wave_rows(k, M, grid.L, x, deriv[0]) @ col
        py = _plane_wave_rows(k, M, grid.L, y, deriv[1]) @ col
        free = np.exp(1j * k * (x - y)) * (1j * k) ** deriv[0] * (-1j * k) ** deriv[1]
        F[i] = px * np.conj(py) - free
    corr = sum(uniform_integral(F, nodes[0], h, a, b) for a, b in intervals)
    val = base.value + corr / (2 * np.pi * hbar)
    return SpectralSample(base.x, base.y, base.omega, complex(val), base.deriv, "conjugated")
