"""Small complex linear algebra: pure states, operators, density matrices.

Everything here works for arbitrary finite dimension, but the predefined
systems only use d = 2 and d = 3, so no attempt is made at sparse or
large-scale efficiency.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

NORM_TOL = 1e-12
HERM_TOL = 1e-10


class ZeroNormError(ValueError):
    """Raised when a state with (numerically) zero norm is normalized.

    For deterministic branches this signals that the branch has decayed
    completely and the propagation step is too coarse.
    """


@dataclass(frozen=True)
class PureState:
    """Complex amplitude vector tagged with its decomposition label.

    ``normalized`` is a tag, not a promise enforced on construction; use
    :func:`normalize` to obtain a unit-norm state.
    """

    amplitudes: np.ndarray
    label: int = 0
    normalized: bool = False

    def __post_init__(self):
        amps = np.asarray(self.amplitudes, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(self, "amplitudes", amps)

    @property
    def dim(self) -> int:
        return self.amplitudes.shape[0]

    def norm_sq(self) -> float:
        return float(np.real(np.vdot(self.amplitudes, self.amplitudes)))

    def norm(self) -> float:
        return float(np.sqrt(self.norm_sq()))


def basis_state(dim: int, index: int, label: int | None = None) -> PureState:
    amps = np.zeros(dim, dtype=complex)
    amps[index] = 1.0
    return PureState(amps, label=index if label is None else label, normalized=True)


def normalize(state: PureState) -> PureState:
    """Return the unit-norm state with the same direction and label."""
    n = state.norm()
    if n <= 0.0 or not np.isfinite(n):
        raise ZeroNormError(f"cannot normalize state with norm {n}")
    if abs(n - 1.0) <= 1e-15:
        return replace(state, normalized=True)
    return replace(state, amplitudes=state.amplitudes / n, normalized=True)


def dagger(op: np.ndarray) -> np.ndarray:
    return op.conj().T


def is_hermitian(op: np.ndarray, tol: float = HERM_TOL) -> bool:
    return bool(np.max(np.abs(op - dagger(op))) <= tol)


def hermiticity_error(op: np.ndarray) -> float:
    return float(np.max(np.abs(op - dagger(op))))


@dataclass
class DensityMatrix:
    """d x d density matrix with diagnostic accessors.

    Positivity is *not* enforced: for the Ladder system the TCL master
    equation genuinely produces negative eigenvalues in certain parameter
    regimes, and the diagnostics are the whole point.
    """

    entries: np.ndarray

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=complex)

    @property
    def dim(self) -> int:
        return self.entries.shape[0]

    def trace(self) -> float:
        return float(np.real(np.trace(self.entries)))

    def trace_error(self) -> float:
        return abs(self.trace() - 1.0)

    def hermiticity_error(self) -> float:
        return hermiticity_error(self.entries)

    def min_eigenvalue(self) -> float:
        return float(min(hermitian_eigenvalues(self.entries)))


def outer_product_sum(entries) -> DensityMatrix:
    """Assemble rho = sum_a P_a |psi_a><psi_a| from (state, probability) pairs.

    ``entries`` is an iterable of (PureState, float). Probabilities must be
    non-negative; the trace equals the probability sum exactly up to
    round-off.
    """
    rho = None
    for state, prob in entries:
        if prob < 0:
            raise ValueError(f"negative decomposition probability {prob}")
        amps = state.amplitudes
        term = prob * np.outer(amps, amps.conj())
        rho = term if rho is None else rho + term
    if rho is None:
        raise ValueError("empty decomposition")
    # exact hermitization: outer products are Hermitian only up to round-off
    rho = 0.5 * (rho + dagger(rho))
    return DensityMatrix(rho)


def hermitian_eigenvalues(op: np.ndarray) -> np.ndarray:
    """Eigenvalues of a Hermitian matrix, ascending, closed forms for d <= 3.

    Avoids a general eigensolver: for d = 2 the quadratic formula, for
    d = 3 the trigonometric solution of the characteristic cubic.
    """
    d = op.shape[0]
    if d == 1:
        return np.array([float(np.real(op[0, 0]))])
    if d == 2:
        a = float(np.real(op[0, 0]))
        c = float(np.real(op[1, 1]))
        m = 0.5 * (a + c)
        r = np.hypot(0.5 * (a - c), abs(op[0, 1]))
        return np.array([m - r, m + r])
    if d == 3:
        q = float(np.real(np.trace(op))) / 3.0
        b = op - q * np.eye(3)
        p_sq = float(np.real(np.trace(b @ b))) / 6.0
        if p_sq <= 0.0:
            return np.array([q, q, q])
        p = np.sqrt(p_sq)
        det_b = float(np.real(_det3(b)))
        r = np.clip(det_b / (2.0 * p**3), -1.0, 1.0)
        phi = np.arccos(r) / 3.0
        eigs = q + 2.0 * p * np.cos(phi + 2.0 * np.pi * np.arange(3) / 3.0)
        return np.sort(eigs)
    raise ValueError(f"closed-form eigenvalues only for d <= 3, got d={d}")


def _det3(m: np.ndarray) -> complex:
    return (
        m[0, 0] * (m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1])
        - m[0, 1] * (m[1, 0] * m[2, 2] - m[1, 2] * m[2, 0])
        + m[0, 2] * (m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0])
    )
