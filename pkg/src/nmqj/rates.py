"""Decay-rate functions for a Lorentzian reservoir.

Provides the closed-form fourth-order perturbative decay rate, the
positive/negative rate split, cumulative (integrated) rates and the
segmentation of the time axis into intervals of constant rate sign.

All rates are expressed in units of the Lorentzian width ``lam`` and times
in units of ``1/lam``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import quad

RateFunction = Callable[[float], float]


@dataclass(frozen=True)
class SpectralDensityParams:
    """Parameters of the Lorentzian reservoir coupling.

    gamma0: coupling constant (units of lam)
    lam: Lorentzian width, the reference rate unit
    delta: detuning of the transition from the reservoir peak (units of lam)
    """

    gamma0: float
    lam: float = 1.0
    delta: float = 0.0

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("lam must be positive")
        if self.gamma0 < 0:
            raise ValueError("gamma0 must be non-negative")


def tcl2_decay_rate(t, params: SpectralDensityParams):
    """Second-order (lowest-order) part of the decay rate.

    Accepts scalar or array ``t``.
    """
    g0, lam, d = params.gamma0, params.lam, params.delta
    t = np.asarray(t, dtype=float)
    out = (
        g0 * lam**2 / (lam**2 + d**2)
        * (1.0 - np.exp(-lam * t) * (np.cos(d * t) - (d / lam) * np.sin(d * t)))
    )
    return out if out.ndim else float(out)


def tcl4_decay_rate(t, params: SpectralDensityParams):
    """Fourth-order perturbative decay rate for a Lorentzian reservoir.

    Two-term closed form: the second-order rate plus the fourth-order
    correction. Vanishes identically at t = 0 and approaches a constant
    as t -> infinity. Accepts scalar or array ``t``.
    """
    g0, lam, d = params.gamma0, params.lam, params.delta
    t = np.asarray(t, dtype=float)
    r = d / lam
    elt = np.exp(-lam * t)
    correction = (
        g0**2 * lam**5 * elt / (2.0 * (lam**2 + d**2) ** 3)
        * (
            (1.0 - 3.0 * r**2) * (np.exp(lam * t) - elt * np.cos(2.0 * d * t))
            - 2.0 * (1.0 - r**4) * lam * t * np.cos(d * t)
            + 4.0 * (1.0 + r**2) * d * t * np.sin(d * t)
            + r * (3.0 - r**2) * elt * np.sin(2.0 * d * t)
        )
    )
    out = tcl2_decay_rate(t, params) + correction
    return out if out.ndim else float(out)


def tcl4_asymptotic_rate(params: SpectralDensityParams) -> float:
    """t -> infinity limit of :func:`tcl4_decay_rate` in closed form."""
    g0, lam, d = params.gamma0, params.lam, params.delta
    return g0 * lam**2 / (lam**2 + d**2) + g0**2 * lam**5 * (
        1.0 - 3.0 * (d / lam) ** 2
    ) / (2.0 * (lam**2 + d**2) ** 3)


def make_tcl4_rate(params: SpectralDensityParams) -> RateFunction:
    """Bind parameters into a rate callable of time."""
    def rate(t):
        return tcl4_decay_rate(t, params)
    return rate


def constant_rate(value: float) -> RateFunction:
    def rate(t):
        t = np.asarray(t, dtype=float)
        out = np.full_like(t, value)
        return out if out.ndim else float(out)
    return rate


def split_rate(delta):
    """Split a rate into its non-negative components (plus, minus).

    plus - minus reconstructs the rate, plus + minus is its absolute
    value, and at most one of the two is nonzero.
    """
    delta = np.asarray(delta, dtype=float)
    plus = 0.5 * (np.abs(delta) + delta)
    minus = 0.5 * (np.abs(delta) - delta)
    if delta.ndim:
        return plus, minus
    return float(plus), float(minus)


def cumulative_rate(rate: RateFunction, t0: float, t: float,
                    abs_tol: float = 1e-9) -> float:
    """Integral of ``rate`` over [t0, t] by adaptive quadrature."""
    if t < t0:
        raise ValueError("t must be >= t0")
    if t == t0:
        return 0.0
    val, _ = quad(rate, t0, t, epsabs=abs_tol, epsrel=1e-11, limit=500)
    return val


@dataclass(frozen=True)
class SignSegmentation:
    """Partition of a window into intervals of constant rate sign.

    ``boundaries`` are the interior sign-change times, strictly increasing;
    ``signs`` holds one entry (+1, -1 or 0) per interval, so
    ``len(signs) == len(boundaries) + 1``.
    """

    channel: int
    window: tuple[float, float]
    boundaries: tuple[float, ...]
    signs: tuple[int, ...]

    def intervals(self) -> list[tuple[float, float, int]]:
        """(start, end, sign) triples covering the window."""
        edges = (self.window[0],) + self.boundaries + (self.window[1],)
        return [
            (edges[i], edges[i + 1], self.signs[i])
            for i in range(len(self.signs))
        ]

    def negative_intervals(self) -> list[tuple[float, float]]:
        return [(a, b) for a, b, s in self.intervals() if s < 0]


def sign_segments(rate: RateFunction, channel: int, window: Sequence[float],
                  scan_step: float | None = None) -> SignSegmentation:
    """Locate the sign-change times of ``rate`` on a window.

    Sign changes are bracketed on a scan grid and refined by bisection to
    1e-10 of the window length. A tangential zero touch (no sign flip
    across the bracket) is not a boundary: the jump-rate branch in force
    does not change there.
    """
    t0, tend = float(window[0]), float(window[1])
    if tend <= t0:
        raise ValueError("window must have tend > t0")
    if scan_step is None:
        scan_step = (tend - t0) / 2000.0
    if scan_step <= 0:
        raise ValueError("scan_step must be positive")
    n = max(2, int(np.ceil((tend - t0) / scan_step)) + 1)
    grid = np.linspace(t0, tend, n)
    vals = np.array([float(rate(t)) for t in grid])
    signs_grid = np.sign(vals)

    tol = 1e-10 * (tend - t0)
    boundaries = []
    for i in range(n - 1):
        a, b = grid[i], grid[i + 1]
        fa, fb = vals[i], vals[i + 1]
        if fa == 0.0 or fb == 0.0:
            continue
        if np.sign(fa) == np.sign(fb):
            continue
        while b - a > tol:
            m = 0.5 * (a + b)
            fm = float(rate(m))
            if fm == 0.0:
                a = b = m
                break
            if np.sign(fm) == np.sign(fa):
                a, fa = m, fm
            else:
                b = m
        boundaries.append(0.5 * (a + b))

    edges = [t0] + boundaries + [tend]
    signs = []
    for lo, hi in zip(edges[:-1], edges[1:]):
        # sample away from the refined zeros
        probes = np.linspace(lo, hi, 7)[1:-1]
        sgn = 0
        for p in probes:
            v = float(rate(p))
            if v != 0.0:
                sgn = 1 if v > 0 else -1
                break
        signs.append(sgn)
    return SignSegmentation(
        channel=channel,
        window=(t0, tend),
        boundaries=tuple(boundaries),
        signs=tuple(signs),
    )


def rate_table(times: Sequence[float], values: Sequence[float]) -> RateFunction:
    """Piecewise-linear rate interpolated from sampled values.

    Times must be strictly increasing; queries are clamped to the table
    range.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    if times.ndim != 1 or times.shape != values.shape:
        raise ValueError("times and values must be equal-length 1-d arrays")
    if times.size < 2:
        raise ValueError("rate table needs at least two samples")
    if np.any(np.diff(times) <= 0):
        raise ValueError("table times must be strictly increasing")

    def rate(t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, times, values)
        return out if out.ndim else float(out)

    return rate


def load_rate_table(path) -> RateFunction:
    """Load a two-column whitespace-separated ``t delta`` rate table file."""
    data = np.loadtxt(path, comments="#")
    if data.ndim != 2 or data.shape[1] != 2:
        raise ValueError(f"{path}: expected two columns 't delta'")
    return rate_table(data[:, 0], data[:, 1])
