"""Transfer matrices of -h^2 u'' + h Op(V0 + 2 V1 xi) u = omega^2 u along the line.

Cauchy data are carried as Y = (u, w) with w = h u' / omega, so the energy
density is ED = |u|^2 + |w|^2.  Steps use the fourth-order Magnus scheme
with two Gauss points; for V1 = 0 each step matrix has determinant one to
rounding.
"""

import csv
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .multiplier import nonsemiclassical
from .plotting import plot_series
from .potential import TrigPotential, evaluate

ED_FLOOR = 1e-12
LYAPUNOV_FLOOR = 1e-10
MAX_STEPS = 1 << 28
CHUNK = 1 << 18


class StepUnderflow(RuntimeError):
    pass


class GlueError(ValueError):
    pass


@dataclass
class EnergyState:
    u: complex
    w: complex
    x: float = 0.0
    omega: float = 1.0
    hbar: float = 1.0

    @classmethod
    def from_derivative(cls, u, du, x=0.0, omega=1.0, hbar=1.0):
        return cls(complex(u), complex(hbar * du / omega), float(x), float(omega), float(hbar))

    @property
    def du(self):
        return self.w * self.omega / self.hbar

    @property
    def ed(self):
        return abs(self.u) ** 2 + abs(self.w) ** 2

    @property
    def vector(self):
        return np.array([self.u, self.w], dtype=complex)


@dataclass
class TransferResult:
    state: EnergyState
    xs: np.ndarray
    ed: np.ndarray
    matrix: np.ndarray
    steps: int
    error_estimate: float = float("nan")

    @property
    def ed_max(self):
        return float(self.ed.max())

    @property
    def ed_min(self):
        return float(self.ed.min())

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# speconion ed-trace v1\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "ED"])
            for x, e in zip(self.xs, self.ed):
                w.writerow([repr(float(x)), repr(float(e))])


# ----------------------------------------------------------------------------
# step matrices


def _mul(A, B):
    # batched 2x2 products without matmul overhead
    out = np.empty(np.broadcast_shapes(A.shape, B.shape), dtype=np.result_type(A, B))
    out[..., 0, 0] = A[..., 0, 0] * B[..., 0, 0] + A[..., 0, 1] * B[..., 1, 0]
    out[..., 0, 1] = A[..., 0, 0] * B[..., 0, 1] + A[..., 0, 1] * B[..., 1, 1]
    out[..., 1, 0] = A[..., 1, 0] * B[..., 0, 0] + A[..., 1, 1] * B[..., 1, 0]
    out[..., 1, 1] = A[..., 1, 0] * B[..., 0, 1] + A[..., 1, 1] * B[..., 1, 1]
    return out


def _expm2(W):
    # exp of 2x2 matrices: exp(t) (cosh(s) I + sinh(s)/s N), N = W - t I traceless, N^2 = s^2 I
    t = 0.5 * (W[..., 0, 0] + W[..., 1, 1])
    n00 = W[..., 0, 0] - t
    s2 = n00 * n00 + W[..., 0, 1] * W[..., 1, 0]
    if np.isrealobj(W):
        # s2 < 0 is the oscillatory case: cosh(i r) = cos r
        r = np.sqrt(np.abs(s2))
        small = r < 1e-4
        safe = np.where(small, 1.0, r)
        osc = s2 < 0
        ch = np.where(osc, np.cos(r), np.cosh(r))
        sh = np.where(osc, np.sin(safe), np.sinh(safe)) / safe
        sh = np.where(small, 1 + s2 / 6 + s2 * s2 / 120, sh)
    else:
        s = np.sqrt(s2.astype(complex))
        small = np.abs(s2) < 1e-8
        safe = np.where(small, 1.0, s)
        ch = np.where(small, 1 + s2 / 2 + s2 * s2 / 24, np.cosh(safe))
        sh = np.where(small, 1 + s2 / 6 + s2 * s2 / 120, np.sinh(safe) / safe)
    et = np.exp(t)
    out = np.empty(W.shape, dtype=W.dtype)
    out[..., 0, 0] = et * (ch + sh * n00)
    out[..., 1, 1] = et * (ch - sh * n00)
    out[..., 0, 1] = et * sh * W[..., 0, 1]
    out[..., 1, 0] = et * sh * W[..., 1, 0]
    return out


def _trig(arr, period, x, deriv=False):
    # real trigonometric sum by Horner's rule in z = exp(2 pi i x / L)
    n = arr.size // 2
    c = arr * (2j * np.pi * np.arange(-n, n + 1) / period) if deriv else arr
    z = np.exp(2j * np.pi * np.asarray(x) / period)
    acc = np.zeros(np.shape(x), dtype=complex)
    for m in range(n, 0, -1):
        acc = (acc + c[n + m]) * z
    return c[n].real + 2 * acc.real


def _generator(p, x, omega, hbar):
    """Entries of A(x) in Y' = A Y."""
    shape = np.shape(x) + (2, 2)
    c = (hbar * _trig(p.v0, p.period, x) - omega ** 2) / (hbar * omega)
    if not np.any(p.v1):
        A = np.zeros(shape)
        A[..., 0, 1] = omega / hbar
        A[..., 1, 0] = c
        return A
    A = np.zeros(shape, dtype=complex)
    A[..., 0, 1] = omega / hbar
    A[..., 1, 0] = c - 1j * hbar * _trig(p.v1, p.period, x, deriv=True) / omega
    A[..., 1, 1] = -2j * _trig(p.v1, p.period, x)
    return A


def step_size(p, omega, hbar, per_wavelength=16):
    """Fixed step resolving both the local wavenumber and the potential's modes."""
    k = np.sqrt(omega ** 2 + hbar * p.sup_norm("V0")) / hbar + 2 * p.sup_norm("V1")
    h = min(hbar / (per_wavelength * omega), 1.0 / (per_wavelength * k))
    theta = np.abs(p.frequencies).max(initial=0.0)
    if theta > 0:
        h = min(h, 2 * np.pi / (per_wavelength * theta))
    return h


def step_matrices(p, x0, x1, omega, hbar, n):
    """Magnus-4 propagators of the n equal steps from x0 to x1."""
    h = (x1 - x0) / n
    left = x0 + h * np.arange(n)
    g = np.sqrt(3) / 6
    A1 = _generator(p, left + h * (0.5 - g), omega, hbar)
    A2 = _generator(p, left + h * (0.5 + g), omega, hbar)
    W = 0.5 * h * (A1 + A2) + (np.sqrt(3) / 12) * h * h * (_mul(A2, A1) - _mul(A1, A2))
    return _expm2(W)


def _n_steps(p, x0, x1, omega, hbar, per_wavelength=16):
    length = abs(x1 - x0)
    if length == 0:
        return 0
    h = step_size(p, omega, hbar, per_wavelength)
    n = int(np.ceil(length / h))
    if n > MAX_STEPS or h < 1e-14 * length:
        raise StepUnderflow(f"{n} steps of size {h:.3g} needed over length {length:.3g}")
    return n


def prefix_products(M):
    """P[k] = M[k] ... M[0] by a doubling scan."""
    P = M.copy()
    d = 1
    while d < len(P):
        P[d:] = _mul(P[d:], P[:-d])
        d *= 2
    return P


def ordered_product(M):
    """M[-1] ... M[0] by pairwise reduction."""
    while len(M) > 1:
        if len(M) % 2:
            M = np.concatenate([M, np.eye(2, dtype=M.dtype)[None]])
        M = _mul(M[1::2], M[0::2])
    return M[0] if len(M) else np.eye(2, dtype=complex)


def transfer_matrix(p, x0, x1, omega, hbar, per_wavelength=16, n=None):
    if n is None:
        n = _n_steps(p, x0, x1, omega, hbar, per_wavelength)
    T = np.eye(2)
    for a in range(0, n, CHUNK):
        b = min(n, a + CHUNK)
        h = (x1 - x0) / n
        M = step_matrices(p, x0 + a * h, x0 + b * h, omega, hbar, b - a)
        T = _mul(ordered_product(M), T)
    return T


def transfer_propagate(p, state0, x1, per_wavelength=16, trace=True, error_estimate=False):
    """Propagate Cauchy data from state0.x to x1.

    Coefficients with V1 are integrated directly (the generator is then
    not traceless); the first-order removal below gives the equivalent
    V1-free problem.  ``error_estimate`` repeats the run at half the step
    and reports the difference of the final states.
    """
    x0, omega, hbar = state0.x, state0.omega, state0.hbar
    n = _n_steps(p, x0, x1, omega, hbar, per_wavelength)
    if n == 0:
        return TransferResult(state0, np.array([x0]), np.array([state0.ed]), np.eye(2, dtype=complex), 0)
    y0 = state0.vector
    if trace:
        M = step_matrices(p, x0, x1, omega, hbar, n)
        P = prefix_products(M)
        T = P[-1]
        ys = np.concatenate([y0[None], P @ y0])
        xs = x0 + (x1 - x0) * np.arange(n + 1) / n
        ed = (np.abs(ys) ** 2).sum(axis=1)
    else:
        T = transfer_matrix(p, x0, x1, omega, hbar, n=n)
        y = T @ y0
        xs = np.array([x0, x1])
        ed = np.array([state0.ed, float((np.abs(y) ** 2).sum())])
    y1 = T @ y0
    err = float("nan")
    if error_estimate:
        T2 = transfer_matrix(p, x0, x1, omega, hbar, n=2 * n)
        err = float(np.abs(T2 @ y0 - y1).max() / max(np.abs(y0).max(), 1e-300))
    state = EnergyState(complex(y1[0]), complex(y1[1]), float(x1), omega, hbar)
    return TransferResult(state, xs, ed, T, n, err)


# ----------------------------------------------------------------------------
# first-order removal


def _trig_product(a, b):
    return np.convolve(a, b)


@dataclass(frozen=True)
class PhaseFunction:
    """phi(x) = slope x + sum_{m != 0} c_m (exp(i theta_m x) - 1) / (i theta_m), phi(0) = 0."""

    period: float
    slope: float
    coeffs: np.ndarray

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        n = self.coeffs.size // 2
        m = np.arange(-n, n + 1)
        theta = 2 * np.pi * m / self.period
        ok = m != 0
        c = self.coeffs[ok] / (1j * theta[ok])
        vals = (np.exp(1j * np.multiply.outer(x, theta[ok])) - 1) @ c
        return self.slope * x + vals.real


def remove_first_order(p, hbar):
    """(p', phi) with V0' = V0 - hbar V1^2, V1' = 0 and phi = int_0^x V1.

    A solution u of the original equation is u = exp(-i phi) v with v a
    solution for p'.
    """
    n = p.nmax
    if not np.any(p.v1):
        return p, PhaseFunction(p.period, 0.0, np.zeros(2 * n + 1, dtype=complex))
    sq = _trig_product(p.v1, p.v1)
    v0 = np.zeros(4 * n + 1, dtype=complex)
    v0[n:3 * n + 1] = p.v0
    v0 = v0 - hbar * sq
    out = TrigPotential(p.period, v0, np.zeros_like(v0))
    return out, PhaseFunction(p.period, float(p.v1[n].real), p.v1.copy())


def lift_state(state_v, p):
    """Cauchy data of u = exp(-i phi) v at state_v.x for the original coefficients p."""
    _, phase = remove_first_order(p, state_v.hbar)
    x = state_v.x
    e = np.exp(-1j * phase(x))
    v1 = evaluate(p, x, "V1")
    u = e * state_v.u
    # u' = e (v' - i V1 v)
    w = e * (state_v.w - 1j * state_v.hbar * v1 * state_v.u / state_v.omega)
    return EnergyState(complex(u), complex(w), x, state_v.omega, state_v.hbar)


def reduced_state(state_u, p):
    """Inverse of :func:`lift_state`."""
    _, phase = remove_first_order(p, state_u.hbar)
    x = state_u.x
    e = np.exp(1j * phase(x))
    v1 = evaluate(p, x, "V1")
    v = e * state_u.u
    w = e * state_u.w + 1j * state_u.hbar * v1 * v / state_u.omega
    return EnergyState(complex(v), complex(w), x, state_u.omega, state_u.hbar)


# ----------------------------------------------------------------------------
# growth bounds


def random_real_states(rng, n):
    phi = rng.uniform(0, 2 * np.pi, n)
    return np.stack([np.cos(phi), np.sin(phi)], axis=1).astype(complex)


def random_complex_states(rng, n):
    z = rng.normal(size=(n, 2)) + 1j * rng.normal(size=(n, 2))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


@dataclass
class GronwallReport:
    ratios: np.ndarray
    bound: float

    @property
    def worst(self):
        return float(self.ratios.max() / self.bound)

    @property
    def passed(self):
        return bool(self.worst <= 1 + 1e-9)


def gronwall_check(p, interval, trials=100, omega=1.0, hbar=1.0, seed=0):
    """ED(b) / ED(a) over random solutions against exp(||V0|| |a - b| / omega).

    ||V0|| is the coefficient sum, which is the sup norm for single cosines
    and an upper bound otherwise.
    """
    if np.any(p.v1):
        raise ValueError("Gronwall check needs V1 = 0")
    a, b = interval
    rng = np.random.default_rng(seed)
    T = transfer_matrix(p, a, b, omega, hbar)
    Y0 = random_complex_states(rng, trials)
    Y1 = Y0 @ T.T
    ratios = (np.abs(Y1) ** 2).sum(axis=1) / (np.abs(Y0) ** 2).sum(axis=1)
    bound = float(np.exp(p.sup_norm("V0") * abs(b - a) / omega))
    return GronwallReport(ratios, bound)


# ----------------------------------------------------------------------------
# gluing


def _amplitude(state):
    # free solution u = z e^{i omega x / h} + conj(z) e^{-i omega x / h}: u = 2 Re z, w = -2 Im z
    if abs(state.u.imag) > 1e-12 * max(1.0, abs(state.u)) or abs(state.w.imag) > 1e-12 * max(1.0, abs(state.w)):
        raise GlueError("gluing needs real Cauchy data")
    return 0.5 * (state.u.real - 1j * state.w.real)


@dataclass
class GlueResult:
    s: float
    scale_left: float
    scale_right: float
    match_residual: float
    c1_mismatch: float


def free_evolve(state, dx):
    """Exact propagation by dx where V = 0."""
    c = state.omega * dx / state.hbar
    u = np.cos(c) * state.u + np.sin(c) * state.w
    w = -np.sin(c) * state.u + np.cos(c) * state.w
    return EnergyState(u, w, state.x + dx, state.omega, state.hbar)


def glue_solutions(stateL, stateR, omega, hbar):
    """Shift s in [0, 2 pi h / omega) joining sqrt(ED_R) u_L (left) to sqrt(ED_L) u_R(. - s) (right)."""
    zL, zR = _amplitude(stateL), _amplitude(stateR)
    if abs(zL) == 0 or abs(zR) == 0:
        raise GlueError("a side has zero energy, the phase is undefined")
    period = 2 * np.pi * hbar / omega
    s = (np.angle(zR) - np.angle(zL)) % (2 * np.pi) * hbar / omega
    if s >= period:
        s = 0.0
    edL, edR = stateL.ed, stateR.ed
    cL, cR = np.sqrt(edR), np.sqrt(edL)
    lhs = cR * zR * np.exp(-1j * s * omega / hbar)
    rhs = cL * zL
    res = abs(lhs - rhs) / max(abs(rhs), 1e-300)
    sL = EnergyState(stateL.u, stateL.w, 0.0, omega, hbar)
    at_s = free_evolve(sL, s)
    mism = max(abs(cL * at_s.u - cR * stateR.u), abs(cL * at_s.w - cR * stateR.w)) / (cL * cR)
    return GlueResult(float(s), float(cL), float(cR), float(res), float(mism))


# ----------------------------------------------------------------------------
# rho experiments


def _pmap(fn, items, workers):
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as ex:
            return list(ex.map(fn, items))
    return [fn(i) for i in items]


def ed_ratio(p, rho, X, trials=8, seed=0):
    """max over trials of max_x ED / min_x ED - 1 on [0, X] at energy rho^2 (h = 1/rho, omega = 1)."""
    q, hbar = nonsemiclassical(p, rho)
    q, _ = remove_first_order(q, hbar)
    n = _n_steps(q, 0.0, X, 1.0, hbar)
    P = prefix_products(step_matrices(q, 0.0, X, 1.0, hbar, n))
    Y0 = random_real_states(np.random.default_rng(seed), trials)
    worst = 0.0
    for y0 in Y0:
        ed = np.concatenate([[1.0], (np.abs(P @ y0) ** 2).sum(axis=1)])
        worst = max(worst, ed.max() / ed.min() - 1)
    return float(worst)


@dataclass
class EnergyRatioReport:
    rhos: np.ndarray
    ratios: np.ndarray
    slope: float
    used: np.ndarray = field(default_factory=lambda: np.zeros(0, bool))

    @property
    def passed(self):
        return bool(self.slope <= -0.8) if np.isfinite(self.slope) else bool(np.all(self.ratios < ED_FLOOR))

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            fh.write("# speconion ed-ratio v1\n")
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["rho", "ratio_minus_1", "in_fit"])
            for r, v, u in zip(self.rhos, self.ratios, self.used):
                w.writerow([repr(float(r)), repr(float(v)), int(u)])

    def plot(self, path):
        plot_series(path, self.rhos, {"max ED ratio - 1": np.maximum(self.ratios, 1e-17)},
                    "rho", "ratio - 1", logy=True)


def energy_ratio_experiment(p, rhos, X=100.0, trials=8, seed=0, workers=None):
    rhos = np.asarray(rhos, dtype=float)
    ratios = np.array(_pmap(lambda r: ed_ratio(p, r, X, trials, seed), rhos, workers))
    used = ratios > ED_FLOOR
    slope = float("nan")
    if used.sum() >= 2:
        slope = float(np.polyfit(np.log(rhos[used]), np.log(ratios[used]), 1)[0])
    return EnergyRatioReport(rhos, ratios, slope, used)


@dataclass
class LyapunovEstimate:
    rho: float
    X: float
    exponent: float
    exponent_2x: float
    per_phase: np.ndarray

    @property
    def below_floor(self):
        return self.exponent < LYAPUNOV_FLOOR

    @property
    def stable(self):
        # a genuine exponent repeats under X -> 2X; bounded oscillation halves
        return self.exponent_2x <= 1.5 * max(self.exponent, LYAPUNOV_FLOOR)


def lyapunov_estimate(p, rho, X=1e4, phases=8, seed=0):
    """|mean_j log |T(X) v_j|| / X over stratified unit vectors v_j, with an X -> 2X repeat.

    The phases are phi0 + 2 pi j / phases with a seeded random phi0; for a
    bounded transfer matrix the phase average cancels the first-order
    oscillation of log |T v|.
    """
    q, hbar = nonsemiclassical(p, rho)
    q, _ = remove_first_order(q, hbar)
    phi = np.random.default_rng(seed).uniform(0, 2 * np.pi) + 2 * np.pi * np.arange(phases) / phases
    V = np.stack([np.cos(phi), np.sin(phi)], axis=1)
    n = _n_steps(q, 0.0, X, 1.0, hbar)
    T1 = transfer_matrix(q, 0.0, X, 1.0, hbar, n=n)
    T2 = _mul(transfer_matrix(q, X, 2 * X, 1.0, hbar, n=n), T1)
    logs1 = np.log(np.linalg.norm(V @ T1.T, axis=1))
    logs2 = np.log(np.linalg.norm(V @ T2.T, axis=1))
    return LyapunovEstimate(float(rho), float(X), float(abs(logs1.mean()) / X),
                            float(abs(logs2.mean()) / (2 * X)), logs1 / X)


def lyapunov_ladder(p, rhos, X=1e4, phases=8, seed=0, workers=None):
    return _pmap(lambda r: lyapunov_estimate(p, r, X, phases, seed), list(rhos), workers)


def write_lyapunov_csv(estimates, path):
    with open(path, "w", newline="") as fh:
        fh.write("# speconion lyapunov v1\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rho", "X", "exponent", "exponent_2X"])
        for e in estimates:
            w.writerow([repr(e.rho), repr(e.X), repr(e.exponent), repr(e.exponent_2x)])
