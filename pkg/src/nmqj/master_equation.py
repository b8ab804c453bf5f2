"""Master-equation oracle and closed-form decomposition probabilities.

Two independent routes to the reduced state: direct fixed-step integration
of the local-in-time master equation, and the per-system closed forms for
the pure-state decomposition probabilities (scalar exponentials plus
quadrature). Agreement of the two is the central correctness anchor of the
package.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import cumulative_simpson

from .deterministic import DEFAULT_STEP, propagate
from .jump_process import DecompositionState
from .linalg import DensityMatrix, PureState, hermitian_eigenvalues, \
    hermiticity_error, normalize
from .systems import SystemModel


@dataclass
class MasterEqSolution:
    """Density-matrix trajectory with per-point diagnostics.

    Negative eigenvalues are recorded, never suppressed: for the Ladder
    system they are a real feature of the approximate master equation.
    """

    times: np.ndarray
    rhos: np.ndarray  # (n_times, d, d)
    trace_error: np.ndarray
    hermiticity_error: np.ndarray
    min_eigenvalue: np.ndarray

    def rho_at(self, i: int) -> DensityMatrix:
        return DensityMatrix(self.rhos[i])

    def populations(self) -> np.ndarray:
        return np.real(np.einsum("tii->ti", self.rhos))


def _lindblad_rhs(t: float, rho: np.ndarray, model: SystemModel) -> np.ndarray:
    h = model.h_s(t)
    out = -1j * (h @ rho - rho @ h)
    for ch in model.channels:
        c = ch.operator
        cdc = c.conj().T @ c
        out = out + float(ch.rate(t)) * (
            c @ rho @ c.conj().T - 0.5 * (rho @ cdc + cdc @ rho)
        )
    return out


def integrate_tcl(model: SystemModel, rho0: np.ndarray,
                  window=(0.0, 5.0), step: float = DEFAULT_STEP) -> MasterEqSolution:
    """Fixed-step RK4 integration of the TCL master equation."""
    rho0 = np.asarray(rho0, dtype=complex)
    if hermiticity_error(rho0) > 1e-10:
        raise ValueError("rho0 must be Hermitian")
    if abs(np.real(np.trace(rho0)) - 1.0) > 1e-10:
        raise ValueError("rho0 must have unit trace")

    t0, tend = float(window[0]), float(window[1])
    n = int(np.round((tend - t0) / step))
    times = t0 + step * np.arange(n + 1)
    rhos = np.empty((n + 1, *rho0.shape), dtype=complex)
    rhos[0] = rho0
    rho = rho0
    for i in range(n):
        t = times[i]
        k1 = _lindblad_rhs(t, rho, model)
        k2 = _lindblad_rhs(t + 0.5 * step, rho + 0.5 * step * k1, model)
        k3 = _lindblad_rhs(t + 0.5 * step, rho + 0.5 * step * k2, model)
        k4 = _lindblad_rhs(t + step, rho + step * k3, model)
        rho = rho + (step / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        rhos[i + 1] = rho

    traces = np.abs(np.real(np.trace(rhos, axis1=1, axis2=2)) - 1.0)
    herm = np.array([hermiticity_error(r) for r in rhos])
    # hermitize before the eigenvalue closed form; round-off only
    mineig = np.array([
        float(min(hermitian_eigenvalues(0.5 * (r + r.conj().T)))) for r in rhos
    ])
    return MasterEqSolution(times, rhos, traces, herm, mineig)


@dataclass
class DecompositionHistory:
    """Pure-state decomposition {psi^a(t), P_a(t)} tabulated on a grid.

    Label 0 is the propagated deterministic state (stored unnormalized);
    the remaining labels are the fixed states of the model. In the Ladder
    breakdown regime the closed forms can drive a probability negative;
    the history records that faithfully and downstream code treats an
    empty-or-negative source as divergent.
    """

    model: SystemModel
    times: np.ndarray
    psi0_amplitudes: np.ndarray  # unnormalized, (n_times, d)
    norm_sq: np.ndarray
    probabilities: np.ndarray  # (n_times, n_labels)
    mode: str = "analytic"

    @property
    def step(self) -> float:
        return float(self.times[1] - self.times[0])

    def index_of(self, t: float) -> int:
        i = int(np.round((t - self.times[0]) / self.step))
        if i < 0 or i >= len(self.times) or abs(self.times[i] - t) > 0.5 * self.step:
            raise ValueError(f"time {t} outside tabulated grid")
        return i

    def state_of(self, label: int, i: int) -> PureState:
        if label == 0:
            return normalize(PureState(self.psi0_amplitudes[i], label=0))
        return self.model.state_of_label(label, None)

    def decomposition_at(self, i: int, strict: bool = True) -> DecompositionState:
        entries = tuple(
            (lab, self.state_of(lab, i), float(self.probabilities[i, lab]))
            for lab in self.model.labels
        )
        return DecompositionState(entries, time=float(self.times[i]),
                                  mode=self.mode, strict=strict)

    def probability_of(self, label: int, t) -> float | np.ndarray:
        out = np.interp(t, self.times, self.probabilities[:, label])
        return out if np.ndim(t) else float(out)

    def density_matrix(self, i: int) -> DensityMatrix:
        from .linalg import outer_product_sum
        return outer_product_sum(
            (self.state_of(lab, i), float(self.probabilities[i, lab]))
            for lab in self.model.labels
        )


def analytic_history(model: SystemModel, window=(0.0, 5.0),
                     step: float = DEFAULT_STEP) -> DecompositionHistory:
    """Closed-form decomposition probabilities on a grid.

    Uses the scalar solution of the deterministic branch plus composite
    quadrature for the channel-fed probabilities; independent of
    :func:`integrate_tcl` apart from sharing the rate functions.
    """
    t0, tend = float(window[0]), float(window[1])
    prop = propagate(model.initial_state(), t0, tend - t0, model, step=step)
    times = prop.times
    amps = prop.amplitudes
    p0 = prop.norm_sq_history

    n_labels = model.n_labels
    probs = np.zeros((len(times), n_labels))
    probs[:, 0] = p0

    if model.family == "tla":
        probs[:, 1] = 1.0 - p0
    elif model.family == "lambda":
        c0_sq = np.abs(amps[:, 0]) ** 2
        for j, ch in enumerate(model.channels):
            rate_vals = np.asarray(ch.rate(times), dtype=float)
            probs[:, j + 1] = cumulative_simpson(rate_vals * c0_sq, x=times,
                                                 initial=0.0)
    elif model.family == "ladder":
        c0_sq = np.abs(amps[:, 0]) ** 2
        r1 = np.asarray(model.channels[0].rate(times), dtype=float)
        r2 = np.asarray(model.channels[1].rate(times), dtype=float)
        d2 = cumulative_simpson(r2, x=times, initial=0.0)
        # P1' = Delta_1 |c0~|^2 - Delta_2 P1, solved by integrating factor
        probs[:, 1] = np.exp(-d2) * cumulative_simpson(
            r1 * c0_sq * np.exp(d2), x=times, initial=0.0
        )
        probs[:, 2] = 1.0 - probs[:, 0] - probs[:, 1]
    else:
        raise ValueError(
            f"no closed-form decomposition for family {model.family!r}"
        )

    return DecompositionHistory(
        model=model, times=times, psi0_amplitudes=amps, norm_sq=p0,
        probabilities=probs, mode="analytic",
    )


def ladder_ground_probability_ode(history: DecompositionHistory) -> np.ndarray:
    """Cross-check for the Ladder ground-state probability.

    Integrates dP2/dt = Delta_2 (|c1~|^2 + P1) directly; the closure form
    1 - P0 - P1 must agree with this.
    """
    model = history.model
    if model.family != "ladder":
        raise ValueError("only defined for the ladder family")
    times = history.times
    c1_sq = np.abs(history.psi0_amplitudes[:, 1]) ** 2
    r2 = np.asarray(model.channels[1].rate(times), dtype=float)
    return cumulative_simpson(r2 * (c1_sq + history.probabilities[:, 1]),
                              x=times, initial=0.0)


def analytic_probabilities(model: SystemModel, t: float, t0: float = 0.0,
                           step: float = DEFAULT_STEP) -> np.ndarray:
    """Decomposition probabilities P_a(t) starting from the model's psi^0."""
    if t < t0:
        raise ValueError("t must be >= t0")
    if t == t0:
        out = np.zeros(model.n_labels)
        out[0] = 1.0
        return out
    hist = analytic_history(model, window=(t0, t), step=min(step, (t - t0) / 16))
    return hist.probabilities[-1].copy()
