"""Layered gauge transform reducing H = xi^2 + hbar q to a Fourier multiplier.

Frequencies are removed from the outside in.  Layer -1 clears |theta| >= 1,
then layer j clears r_j s <= |theta| < r_j with r_j = s^j and s = hbar^delta.
Inside a layer the generator is accumulated over several parallel steps,
each solving the homological equation for the current high-frequency error
and re-conjugating the layer input by the whole accumulated generator.
"""

import json
import os
from dataclasses import asdict, dataclass, field

import numpy as np

from . import symbolcalc as sc
from .cutoffs import band_cutoff, plateau
from .multiplier import FourierMultiplier

CLASS_NORM_LIMIT = 1e6


class NonConvergence(RuntimeError):
    pass


class LayerBudgetExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class PeelConfig:
    a: float
    b: float
    delta: float = 0.25
    theta_min: float = 1.0
    Kp: int = 6
    K: int = 4
    tau: float = 1e-8
    relative_tau: bool = True
    max_layers: int = 12
    trim: float = 1e-16
    xi_max: float = None
    substeps: int = 1

    def __post_init__(self):
        if not 0 < self.a < self.b:
            raise ValueError("window needs 0 < a < b")
        if not 0 < self.delta < 0.5:
            raise ValueError("delta must lie in (0, 1/2)")
        if not self.theta_min > 0:
            raise ValueError("theta_min must be positive")
        if self.Kp < 1 or self.K < 1:
            raise ValueError("Kp and K must be >= 1")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        if self.substeps < 1:
            raise ValueError("substeps must be >= 1")

    def shrink(self, hbar):
        return hbar ** self.delta

    def grid(self, hbar, L, offsets=None):
        """xi-grid for the peel; by default ``substeps`` equally spaced offsets per step."""
        xi_max = self.b + 2.0 if self.xi_max is None else self.xi_max
        if offsets is None:
            step = np.pi * hbar / L
            offsets = [i * step / self.substeps for i in range(self.substeps)]
        return sc.XiGrid(hbar, L, xi_max, tuple(offsets))

    def layer_count(self, hbar):
        s = self.shrink(hbar)
        if self.theta_min >= 1:
            return 1
        return 1 + int(np.ceil(np.log(self.theta_min) / np.log(s) - 1e-9))

    def cutoff_levels(self, piece, n_pieces, ratio=0.7):
        """(plateau, support) of the xi-cutoff used by parallel step number ``piece``.

        The zones (a/2, 0.9 a) and (b + 0.1, b + 1) are cut into ``n_pieces``
        slices with geometrically shrinking widths; step k ramps up across
        slice k, so every support lies inside the plateau of the step before.
        Late steps get thin slices close to the window, where the error they
        remove lives.
        """
        if not 0 <= piece < n_pieces:
            raise ValueError("cutoff piece out of range")
        w = ratio ** np.arange(n_pieces)
        w /= w.sum()
        lo_room = 0.4 * self.a
        hi_room = 0.9
        s_lo = 0.5 * self.a + lo_room * w[:piece].sum()
        s_hi = self.b + 1.0 - hi_room * w[:piece].sum()
        return (s_lo + lo_room * w[piece], s_hi - hi_room * w[piece]), (s_lo, s_hi)


@dataclass
class Layer:
    index: int
    radius: float
    floor: float
    g: sc.WeylSymbol
    residuals: list
    steps: int
    remainder: float
    class_norm: float
    converged: bool

    def is_trivial(self):
        return not np.any(self.g.values)


@dataclass
class GaugeLog:
    config: PeelConfig
    hbar: float
    layers: list = field(default_factory=list)
    final: sc.WeylSymbol = None

    def effective(self):
        return [l for l in self.layers if not l.is_trivial()]

    def generators(self):
        return [l.g for l in self.layers]

    def final_residual(self):
        return residual_norm(self.final, (self.config.a, self.config.b), 0.0, exclude_zero=True)

    def manifest(self):
        return {
            "config": asdict(self.config),
            "hbar": self.hbar,
            "layers": [
                {"index": l.index, "radius": l.radius, "floor": l.floor, "steps": l.steps,
                 "residuals": [float(r) for r in l.residuals], "remainder": l.remainder,
                 "class_norm": l.class_norm, "converged": l.converged, "file": f"g_{i:02d}.txt"}
                for i, l in enumerate(self.layers)
            ],
        }

    def save(self, directory):
        os.makedirs(directory, exist_ok=True)
        man = self.manifest()
        for entry, l in zip(man["layers"], self.layers):
            with open(os.path.join(directory, entry["file"]), "w") as fh:
                fh.write(sc.dumps(l.g))
        if self.final is not None:
            with open(os.path.join(directory, "final.txt"), "w") as fh:
                fh.write(sc.dumps(self.final))
        with open(os.path.join(directory, "manifest.json"), "w") as fh:
            json.dump(man, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, directory):
        with open(os.path.join(directory, "manifest.json")) as fh:
            man = json.load(fh)
        cfg = PeelConfig(**man["config"])
        layers = []
        for e in man["layers"]:
            with open(os.path.join(directory, e["file"])) as fh:
                g = sc.loads(fh.read())
            layers.append(Layer(e["index"], e["radius"], e["floor"], g, e["residuals"], e["steps"],
                                e["remainder"], e["class_norm"], e["converged"]))
        final = None
        path = os.path.join(directory, "final.txt")
        if os.path.exists(path):
            with open(path) as fh:
                final = sc.loads(fh.read())
        return cls(cfg, man["hbar"], layers, final)


def residual_norm(a, window, theta_floor, exclude_zero=False):
    """max |ahat(theta, xi)| over a <= |xi| <= b and |theta| >= theta_floor."""
    lo, hi = window
    xi = np.abs(a.grid.points)
    cols = (xi >= lo) & (xi <= hi)
    theta = np.abs(a.grid.theta(a.modes))
    rows = theta >= theta_floor * (1 - 1e-12)
    if exclude_zero:
        rows &= a.modes != 0
    if not rows.any() or not cols.any():
        return 0.0
    return float(np.abs(a.values[np.ix_(rows, cols)]).max(initial=0.0))


def _theta_cut(scale):
    # 1 - varsigma(theta / scale): varsigma = 1 on [-1/2, 1/2], supported in (-1, 1)
    return lambda th: 1.0 - plateau(np.asarray(th) / scale, 0.5, 1.0)


def _class_guard(g, radius):
    rep = sc.class_norm_report(g, radius)
    worst = float(rep.table[:, 0].max())
    if worst > CLASS_NORM_LIMIT:
        raise NonConvergence(f"generator class norm {worst:.3g} exceeds {CLASS_NORM_LIMIT:g} at radius {radius:g}")
    return worst


def _run_layer(q, cfg, index, radius, scale, floor, first_piece, n_pieces, tau, strict):
    hbar = q.grid.hbar
    window = (cfg.a, cfg.b)
    cut = _theta_cut(scale)
    h = q * hbar
    G = sc.WeylSymbol.zeros(q.grid, 0, True)
    e = q
    res = residual_norm(e, window, floor)
    residuals = [res]
    remainder = 0.0
    steps = 0
    while res > tau and steps < cfg.Kp:
        high = e.filter_modes(cut)
        band, support = cfg.cutoff_levels(first_piece + steps, n_pieces)
        dg = sc.solve_homological(high, band, (0.5 * scale, np.inf), support=support)
        G_new = (G + dg).trimmed(cfg.trim * max(dg.sup(), 1e-300))
        c, rem = sc.conjugate_series(h, G_new, cfg.K)
        e_new = (c * (1.0 / hbar)).trimmed(cfg.trim * q.sup())
        new = residual_norm(e_new, window, floor)
        residuals.append(new)
        if new > 0.5 * res and new > tau:
            msg = (f"layer {index}: residual {res:.3e} -> {new:.3e} at step {steps + 1} (needs a factor 2 "
                   f"decrease); history {', '.join(f'{r:.3e}' for r in residuals)}")
            if strict:
                raise NonConvergence(msg)
            # keep the best iterate
            residuals.pop()
            break
        G, e, remainder, res = G_new, e_new, rem, new
        steps += 1
    norm = _class_guard(G, radius) if np.any(G.values) else 0.0
    layer = Layer(index, float(radius), float(floor), G, residuals, steps, float(remainder / hbar), norm, res <= tau)
    return e, layer


def _tau(q, cfg):
    return cfg.tau * q.sup() if cfg.relative_tau else cfg.tau


def _pieces(cfg, hbar):
    return cfg.layer_count(hbar) * cfg.Kp + 1


def peel_layer0(q, cfg, tau=None, n_pieces=None, strict=True):
    """Clear |theta| >= 1 from q on the window; returns (q1, g, layer report)."""
    if not q.real:
        raise ValueError("q must be real-flagged")
    tau = _tau(q, cfg) if tau is None else tau
    n_pieces = _pieces(cfg, q.grid.hbar) if n_pieces is None else n_pieces
    q1, layer = _run_layer(q, cfg, -1, 1.0, 1.0, 1.0, 0, n_pieces, tau, strict)
    return q1, layer.g, layer


def peel_layer(q, r, sn, cfg, index=0, tau=None, n_pieces=None, strict=True):
    """Clear r sn <= |theta| < r on the window, assuming |theta| >= r is already clean.

    Layer ``index`` = 0, 1, ... uses the cutoff slices after those of layer -1
    and of the layers before it.
    """
    tau = _tau(q, cfg) if tau is None else tau
    n_pieces = _pieces(cfg, q.grid.hbar) if n_pieces is None else n_pieces
    pre = residual_norm(q, (cfg.a, cfg.b), r)
    if pre > tau and strict:
        raise ValueError(f"input residual {pre:.3e} at |theta| >= {r:g} exceeds tau = {tau:.3e}")
    first = (index + 1) * cfg.Kp
    if first + cfg.Kp > n_pieces - 1:
        raise LayerBudgetExhausted("no cutoff slices left for this layer")
    q1, layer = _run_layer(q, cfg, index, r, r * sn, r * sn, first, n_pieces, tau, strict)
    return q1, layer.g, layer


def onion_peel(q, cfg, strict=True):
    """Full layered reduction; returns (FourierMultiplier, GaugeLog).

    With ``strict=False`` a layer that stops improving keeps its best iterate
    and the peel carries on; the log then records ``converged=False`` instead
    of raising.
    """
    hbar = q.grid.hbar
    tau = _tau(q, cfg)
    log = GaugeLog(cfg, hbar)
    n_pieces = _pieces(cfg, hbar)
    cur, _, layer = peel_layer0(q, cfg, tau, n_pieces, strict)
    log.layers.append(layer)
    floors = [1.0]
    s = cfg.shrink(hbar)
    r = 1.0
    j = 0
    while r > cfg.theta_min * (1 + 1e-12):
        if j >= cfg.max_layers:
            raise LayerBudgetExhausted(f"{cfg.max_layers} layers used before reaching theta_min={cfg.theta_min:g}")
        cur, _, layer = peel_layer(cur, r, s, cfg, index=j, tau=tau, n_pieces=n_pieces, strict=strict)
        log.layers.append(layer)
        # cleaned annuli must stay clean
        for f in floors:
            back = residual_norm(cur, (cfg.a, cfg.b), f)
            if back > tau and strict:
                raise NonConvergence(f"layer {j} reintroduced residual {back:.3e} at |theta| >= {f:g}")
        floors.append(r * s)
        r *= s
        j += 1
    log.final = cur
    if strict:
        for l in log.layers:
            if not l.converged:
                raise NonConvergence(
                    f"layer {l.index} stopped after {l.steps} steps at residual {l.residuals[-1]:.3e} > tau {tau:.3e}")
        final = log.final_residual()
        if final > tau:
            raise NonConvergence(f"final residual {final:.3e} at theta != 0 exceeds tau {tau:.3e}")
    return extract_multiplier(cur, cfg), log


def window_cutoff(xi, cfg):
    return band_cutoff(xi, cfg.a, cfg.b, 0.5 * cfg.a, cfg.b + 1.0)


def extract_multiplier(q, cfg):
    """qt(xi) = window cutoff times the theta = 0 slice."""
    xi = q.grid.points
    vals = window_cutoff(xi, cfg) * q.zero_mode()
    return FourierMultiplier(q.grid, vals.real, (cfg.a, cfg.b))
