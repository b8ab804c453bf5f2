"""Deterministic evolution between jumps.

The unnormalized state obeys a linear Schroedinger equation generated by a
non-Hermitian effective Hamiltonian; its squared norm decays (or grows, for
negative rates) and is recorded at every step because the analytic
waiting-time formulas are pure functions of that history.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import PureState, normalize
from .systems import SystemModel

DEFAULT_STEP = 1e-3


def effective_hamiltonian(t: float, model: SystemModel) -> np.ndarray:
    """H_S(t) - (i/2) sum_k Delta_k(t) C_k^dag C_k."""
    h = model.h_s(t).astype(complex)
    for ch in model.channels:
        h = h - 0.5j * float(ch.rate(t)) * (ch.operator.conj().T @ ch.operator)
    return h


@dataclass
class PropagationResult:
    """Unnormalized state history on the integrator grid.

    ``times`` are absolute times T + k*step; ``amplitudes`` has shape
    (n_times, d); ``norm_sq_history`` is the squared norm at each time.
    """

    times: np.ndarray
    amplitudes: np.ndarray
    norm_sq_history: np.ndarray
    label: int = 0

    @property
    def unnormalized(self) -> PureState:
        return PureState(self.amplitudes[-1], label=self.label, normalized=False)

    def state_at(self, i: int, normalized: bool = True) -> PureState:
        st = PureState(self.amplitudes[i], label=self.label)
        return normalize(st) if normalized else st

    def norm_sq_at(self, t: float) -> float:
        return float(np.interp(t, self.times, self.norm_sq_history))


def propagate(state: PureState, T: float, tau: float, model: SystemModel,
              step: float = DEFAULT_STEP) -> PropagationResult:
    """Integrate d psi/ds = -i H_eff(T+s) psi over s in [0, tau].

    Classical fixed-step RK4; the final step is shortened so the grid ends
    exactly at T + tau. Raises if the squared norm becomes non-positive
    (step too large for the local decay).
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    if step <= 0:
        raise ValueError("step must be positive")

    psi = np.array(state.amplitudes, dtype=complex)
    times = [T]
    amps = [psi.copy()]
    norms = [float(np.real(np.vdot(psi, psi)))]

    n_full = int(np.floor(tau / step + 1e-12))
    rest = tau - n_full * step
    steps = [step] * n_full + ([rest] if rest > 1e-15 * max(1.0, tau) else [])

    t = T
    for h in steps:
        psi = _rk4_step(psi, t, h, model)
        t += h
        nsq = float(np.real(np.vdot(psi, psi)))
        if not np.isfinite(nsq) or nsq <= 0.0:
            raise ArithmeticError(
                f"norm^2 = {nsq} at t = {t}: propagation step too large"
            )
        times.append(t)
        amps.append(psi.copy())
        norms.append(nsq)

    return PropagationResult(
        times=np.array(times),
        amplitudes=np.array(amps),
        norm_sq_history=np.array(norms),
        label=state.label,
    )


def _rk4_step(psi: np.ndarray, t: float, h: float, model: SystemModel) -> np.ndarray:
    def f(tt, y):
        return -1j * (effective_hamiltonian(tt, model) @ y)

    k1 = f(t, psi)
    k2 = f(t + 0.5 * h, psi + 0.5 * h * k1)
    k3 = f(t + 0.5 * h, psi + 0.5 * h * k2)
    k4 = f(t + h, psi + h * k3)
    return psi + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
