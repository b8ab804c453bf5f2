"""Waiting-time distributions for the jump process.

The general route evaluates the total jump rate away from a decomposition
state on the tabulated grid and exponentiates its integral. The special
cases (Markovian norm form, source-only form, region-wise and product
forms) are separate code paths so they can be cross-checked against the
general one.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson
from scipy.interpolate import CubicSpline

from .jump_process import DecompositionState, resolve_jump_edges, \
    total_jump_rate
from .linalg import PureState, normalize
from .deterministic import PropagationResult
from .master_equation import DecompositionHistory
from .rates import sign_segments
from .systems import SystemModel

NO_JUMP = None  # sentinel returned by sample_waiting_time


@dataclass
class WTDCurve:
    """Conditional distribution F(tau | psi^a, T) on a tau grid.

    ``defective`` is true when F never reaches 1 on the grid: the residual
    mass is the probability of no jump in the window, which is a legal
    outcome. ``truncated_at`` is set when a rate divergence forced F to 1
    at a finite tau.
    """

    source_label: int
    T: float
    taus: np.ndarray
    values: np.ndarray
    defective: bool
    truncated_at: float | None = None

    def __post_init__(self):
        f = self.values
        if abs(f[0]) > 1e-12:
            raise ValueError(f"F(0) = {f[0]}, expected 0")
        if np.any(np.diff(f) < -1e-12):
            raise ValueError("waiting-time distribution must be non-decreasing")
        if np.any(f > 1.0 + 1e-10):
            raise ValueError("waiting-time distribution exceeds 1")

    def at(self, tau) -> float | np.ndarray:
        out = np.interp(tau, self.taus, self.values)
        return out if np.ndim(tau) else float(out)

    @property
    def tau_max(self) -> float:
        return float(self.taus[-1])


def _finalize(f: np.ndarray) -> tuple[np.ndarray, bool]:
    """Clip round-off, enforce monotonicity at round-off scale only."""
    f = np.clip(f, 0.0, 1.0)
    f = np.maximum.accumulate(f)
    return f, bool(f[-1] < 1.0)


def gamma_on_grid(model: SystemModel, history: DecompositionHistory,
                  source_label: int, i0: int, i1: int) -> np.ndarray:
    """Total jump rate away from a label at grid nodes i0..i1 inclusive.

    Nodes where a negative channel diverges (drained source) get +inf.
    """
    out = np.empty(i1 - i0 + 1)
    for j, i in enumerate(range(i0, i1 + 1)):
        decomp = history.decomposition_at(i, strict=False)
        edges, divergent = resolve_jump_edges(model, decomp,
                                              float(history.times[i]))
        if any(e.source_label == source_label for e in divergent):
            out[j] = np.inf
            continue
        out[j] = sum(e.rate_weight for e in edges
                     if e.source_label == source_label)
    return out


class _GammaEvaluator:
    """Rate evaluation off the tabulated grid.

    The tabulated history is smooth in time (the rate sign splitting, not
    the probabilities, carries the kinks), so cubic splines of the stored
    amplitudes and probabilities give node-grade accuracy at arbitrary
    times while the channel rates are evaluated exactly.
    """

    def __init__(self, model: SystemModel, history: DecompositionHistory,
                 source_label: int):
        self.model = model
        self.history = history
        self.source_label = source_label
        self._amps = CubicSpline(history.times, history.psi0_amplitudes,
                                 axis=0)
        self._probs = CubicSpline(history.times, history.probabilities,
                                  axis=0)

    def at_time(self, t: float) -> float:
        psi0 = normalize(PureState(self._amps(t), label=0))
        probs = self._probs(t)
        entries = tuple(
            (lab,
             psi0 if lab == 0 else self.model.state_of_label(lab, None),
             float(probs[lab]))
            for lab in self.model.labels
        )
        decomp = DecompositionState(entries, time=float(t),
                                    mode=self.history.mode, strict=False)
        edges, divergent = resolve_jump_edges(self.model, decomp, float(t))
        if any(e.source_label == self.source_label for e in divergent):
            return np.inf
        return sum(e.rate_weight for e in edges
                   if e.source_label == self.source_label)

    def boundaries_in(self, t_a: float, t_b: float) -> list[float]:
        """Rate sign-change times of any channel inside (t_a, t_b)."""
        cuts = []
        for k, ch in enumerate(self.model.channels):
            seg = sign_segments(ch.rate, k, (t_a, t_b))
            cuts.extend(seg.boundaries)
        return sorted(c for c in cuts if t_a < c < t_b)


def _cell_integrals(ev: _GammaEvaluator, times: np.ndarray,
                    gam: np.ndarray) -> np.ndarray:
    """Per-cell integral of the rate, splitting cells at rate sign changes.

    Away from sign changes the rate is smooth and per-cell Simpson (with
    the midpoint evaluated off-grid) is fourth order; a cell containing a
    kink is split there first so every Simpson panel sees smooth data.
    """
    cuts = ev.boundaries_in(float(times[0]), float(times[-1]))
    out = np.empty(len(times) - 1)
    for i in range(len(times) - 1):
        a, b = float(times[i]), float(times[i + 1])
        inner = [c for c in cuts if a < c < b]
        nodes = [a] + inner + [b]
        total = 0.0
        for lo, hi in zip(nodes[:-1], nodes[1:]):
            g_lo = gam[i] if lo == a else ev.at_time(lo)
            g_hi = gam[i + 1] if hi == b else ev.at_time(hi)
            g_mid = ev.at_time(0.5 * (lo + hi))
            total += (hi - lo) / 6.0 * (g_lo + 4.0 * g_mid + g_hi)
        out[i] = total
    return out


def wtd_solve(model: SystemModel, history: DecompositionHistory,
              source_label: int, T: float, tau_max: float) -> WTDCurve:
    """F(tau) = 1 - exp(-int_T^{T+tau} Gamma) by composite quadrature.

    If the rate diverges inside the window (Ladder breakdown) the curve is
    pinned at 1 from the divergence time on; the distribution then is not
    defective.
    """
    i0 = history.index_of(T)
    i1 = history.index_of(T + tau_max)
    gam = gamma_on_grid(model, history, source_label, i0, i1)
    taus = history.times[i0:i1 + 1] - history.times[i0]

    finite = np.isfinite(gam)
    truncated_at = None
    if not np.all(finite):
        cut = int(np.argmin(finite))
        truncated_at = float(taus[cut])
        gam_f = gam[:cut + 1].copy()
        gam_f[-1] = gam_f[-2] if cut > 0 else 0.0
        integral = cumulative_simpson(gam_f, x=taus[:cut + 1], initial=0.0)
        f = np.ones_like(taus)
        f[:cut + 1] = 1.0 - np.exp(-integral)
        f[cut:] = 1.0
    else:
        ev = _GammaEvaluator(model, history, source_label)
        cells = _cell_integrals(ev, history.times[i0:i1 + 1], gam)
        integral = np.concatenate([[0.0], np.cumsum(cells)])
        f = 1.0 - np.exp(-np.clip(integral, 0.0, None))

    f, defective = _finalize(f)
    return WTDCurve(source_label, T, taus, f, defective,
                    truncated_at=truncated_at)


def wtd_solve_ode(model: SystemModel, history: DecompositionHistory,
                  source_label: int, T: float, tau_max: float) -> WTDCurve:
    """Direct RK4 solution of dF/dtau = (1 - F) Gamma.

    Independent of the exponential route in :func:`wtd_solve`: the same
    rate samples enter a Runge-Kutta recursion instead of a quadrature.
    Cells containing a rate sign change are split there so every RK4 step
    sees a smooth rate.
    """
    i0 = history.index_of(T)
    i1 = history.index_of(T + tau_max)
    gam = gamma_on_grid(model, history, source_label, i0, i1)
    if not np.all(np.isfinite(gam)):
        raise ValueError("rate diverges in window; use wtd_solve")
    taus = history.times[i0:i1 + 1] - history.times[i0]

    ev = _GammaEvaluator(model, history, source_label)
    cuts = ev.boundaries_in(float(history.times[i0]),
                            float(history.times[i1]))
    f_vals = [0.0]
    f = 0.0
    for i in range(len(taus) - 1):
        a = float(history.times[i0 + i])
        b = float(history.times[i0 + i + 1])
        inner = [c for c in cuts if a < c < b]
        nodes = [a] + inner + [b]
        for lo, hi in zip(nodes[:-1], nodes[1:]):
            h = hi - lo
            g0 = gam[i] if lo == a else ev.at_time(lo)
            g1 = gam[i + 1] if hi == b else ev.at_time(hi)
            gm = ev.at_time(0.5 * (lo + hi))
            k1 = (1.0 - f) * g0
            k2 = (1.0 - (f + 0.5 * h * k1)) * gm
            k3 = (1.0 - (f + 0.5 * h * k2)) * gm
            k4 = (1.0 - (f + h * k3)) * g1
            f = f + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        f_vals.append(f)
    f_arr, defective = _finalize(np.array(f_vals))
    return WTDCurve(source_label, T, taus, f_arr, defective)


def wtd_markovian(result: PropagationResult, model: SystemModel) -> WTDCurve:
    """Markovian norm form F = (n(0) - n(tau)) / n(0).

    Only valid when every channel rate is non-negative over the window;
    called with a negative rate present this raises.
    """
    for k, ch in enumerate(model.channels):
        vals = np.asarray(ch.rate(result.times), dtype=float)
        if np.any(vals < -1e-12):
            raise ValueError(
                f"channel {k} rate is negative in the window; the Markovian "
                "form does not apply"
            )
    n = result.norm_sq_history
    f = (n[0] - n) / n[0]
    f, defective = _finalize(f)
    taus = result.times - result.times[0]
    return WTDCurve(result.label, float(result.times[0]), taus, f, defective)


def wtd_source_only(model: SystemModel, history: DecompositionHistory,
                    source_label: int, T: float, tau):
    """F(tau) = (P(T) - P(T+tau)) / P(T) for a pure source state.

    Valid only while the label has no inflow: its probability then changes
    by outgoing jumps alone. Inflow on the window is detected and raises.
    Accepts scalar or array tau.
    """
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    i0 = history.index_of(T)
    i1 = history.index_of(T + float(tau_arr.max()))
    for i in range(i0, i1 + 1):
        decomp = history.decomposition_at(i, strict=False)
        edges, _ = resolve_jump_edges(model, decomp, float(history.times[i]))
        for e in edges:
            if e.target_label == source_label and e.rate_weight > 1e-12:
                raise ValueError(
                    f"label {source_label} has inflow at t = "
                    f"{history.times[i]:.6g}; source-only form invalid"
                )
    p_T = history.probability_of(source_label, T)
    if p_T <= 0.0:
        raise ValueError(f"P_{source_label}(T) must be positive")
    p_tau = np.interp(T + tau_arr, history.times,
                      history.probabilities[:, source_label])
    f = (p_T - p_tau) / p_T
    return f if np.ndim(tau) else float(f[0])


def wtd_tla_regions(result: PropagationResult, region: str,
                    region_start: float, region_end: float) -> WTDCurve:
    """Region-wise two-level forms from the deterministic norm history.

    ``result`` must be the propagation of psi^0 from the initial time.
    Positive region starting at the propagation origin:
    F = (n(0) - n(tau)) / n(0). Negative region starting at t1:
    F = (n(t1 + tau) - n(t1)) / (1 - n(t1)); the norm increase replaces
    the norm decrease and the denominator is complemented.
    """
    t0 = float(result.times[0])
    times = result.times
    n_hist = result.norm_sq_history
    length = region_end - region_start
    if length <= 0:
        raise ValueError("empty region")
    step = float(times[1] - times[0])
    taus = np.arange(0.0, length + 0.5 * step, step)
    taus[-1] = min(taus[-1], length)

    if region == "positive":
        if abs(region_start - t0) > 0.5 * step:
            raise ValueError("positive branch must start at the propagation "
                             "origin")
        n_tau = np.interp(region_start + taus, times, n_hist)
        f = (n_hist[0] - n_tau) / n_hist[0]
    elif region == "negative":
        n_t1 = float(np.interp(region_start, times, n_hist))
        denom = 1.0 - n_t1
        if denom < 1e-12:
            raise ValueError("no population outside the deterministic state")
        n_tau = np.interp(region_start + taus, times, n_hist)
        f = (n_tau - n_t1) / denom
    else:
        raise ValueError(f"region must be 'positive' or 'negative', got {region!r}")

    f, defective = _finalize(f)
    label = 0 if region == "positive" else 1
    return WTDCurve(label, region_start, taus, f, defective)


def wtd_product_negative_regions(history: DecompositionHistory,
                                 source_label: int,
                                 negative_intervals, T: float, tau):
    """Product form over negative-rate intervals.

    F = 1 - prod P(s_end)/P(s_start) over completed intervals after T,
    with a partial last factor P(T+tau)/P(s_start) when T+tau falls inside
    an interval. Between intervals F is constant. If the probability
    reaches zero the product vanishes and F reaches 1 in finite time.
    Accepts scalar or array tau.
    """
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    intervals = [(float(a), float(b)) for a, b in negative_intervals
                 if b > T]
    for a, _ in intervals:
        if a < T - 1e-12:
            raise ValueError("T must precede the negative intervals")

    def prob(t):
        return float(history.probability_of(source_label, t))

    out = np.empty_like(tau_arr)
    for m, tv in enumerate(tau_arr):
        t_end = T + tv
        product = 1.0
        for a, b in intervals:
            if t_end <= a:
                break
            p_a = prob(a)
            if p_a <= 0.0:
                raise ValueError(
                    f"P_{source_label}({a}) = 0 at interval start"
                )
            p_stop = prob(min(b, t_end))
            product *= max(p_stop, 0.0) / p_a
            if product == 0.0:
                break
        out[m] = min(max(1.0 - product, 0.0), 1.0)
    return out if np.ndim(tau) else float(out[0])


def sample_waiting_time(curve: WTDCurve, eta: float):
    """Inverse-transform sample: smallest tau with F(tau) > eta.

    The bracketing grid cell is refined by linear interpolation. Returns
    the no-jump sentinel (None) when F(tau_max) <= eta, which is the legal
    outcome for a defective distribution.
    """
    if not 0.0 <= eta < 1.0:
        raise ValueError("eta must be in [0, 1)")
    f = curve.values
    if f[-1] <= eta:
        return NO_JUMP
    idx = int(np.searchsorted(f, eta, side="right"))
    if idx == 0:
        return float(curve.taus[0])
    f0, f1 = f[idx - 1], f[idx]
    t0, t1 = curve.taus[idx - 1], curve.taus[idx]
    if f1 == f0:
        return float(t1)
    return float(t0 + (eta - f0) / (f1 - f0) * (t1 - t0))


def short_time_rate(model: SystemModel, decomp: DecompositionState,
                    source_label: int, T: float, dt: float) -> float:
    """First-order jump probability Gamma * dt for one step.

    This is exactly the stepwise jump probability; warns when the product
    is too large for the linearization to be meaningful.
    """
    gamma = total_jump_rate(model, decomp, source_label, T)
    p = gamma * dt
    if p > 0.1:
        warnings.warn(
            f"Gamma*dt = {p:.3g} > 0.1: step too coarse for the short-time "
            "approximation", RuntimeWarning, stacklevel=2,
        )
    return p


def write_curve_csv(curve: WTDCurve, path, params: dict | None = None):
    """Export a curve as CSV: comment header, then ``tau,F`` rows."""
    with open(path, "w") as fh:
        fh.write(f"# source_label={curve.source_label} T={float(curve.T):.17g} "
                 f"defective={curve.defective}\n")
        if params:
            items = " ".join(f"{k}={v}" for k, v in sorted(params.items()))
            fh.write(f"# {items}\n")
        fh.write("tau,F\n")
        for t, v in zip(curve.taus, curve.values):
            fh.write(f"{t:.17g},{v:.17g}\n")
