"""Stochastic part of the process: jump edges, total rates, target choice.

A jump "edge" is one resolved term of the conditional jump density over a
finite pure-state decomposition. Positive-rate edges depend only on the
source state; negative-rate edges run backwards along the channel and are
weighted by the probability ratio P_target / P_source, which couples the
realizations to the ensemble.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .linalg import PureState
from .rates import split_rate
from .systems import SystemModel

# below this probability a negative-channel source is treated as empty
P_EMPTY = 1e-12


class DivergenceError(ArithmeticError):
    """Negative-channel jump rate diverging: the source state has been
    drained while the channel still demands outflow from it.

    For the Ladder system this is the positivity-breakdown signal, so the
    offending time, channel and labels are carried for diagnostics.
    """

    def __init__(self, t: float, channel: int, source_label: int,
                 target_label: int):
        self.t = t
        self.channel = channel
        self.source_label = source_label
        self.target_label = target_label
        super().__init__(
            f"negative-channel rate diverges at t={t:.6g}: channel {channel}, "
            f"P[psi^{source_label}] = 0 with nonzero demand toward "
            f"psi^{target_label}"
        )


@dataclass(frozen=True)
class DecompositionState:
    """Finite pure-state decomposition {psi^a, P_a} of rho at one time."""

    entries: tuple[tuple[int, PureState, float], ...]
    time: float
    mode: str = "analytic"  # "analytic" | "empirical"
    # strict=False skips the P_a >= 0 check: past a Ladder positivity
    # breakdown the closed forms genuinely drive a probability negative,
    # and the edge builder needs to see that to flag the divergence.
    strict: bool = True

    def __post_init__(self):
        if self.strict:
            for label, _, p in self.entries:
                if p < -1e-12:
                    raise ValueError(
                        f"negative probability {p} for label {label}"
                    )
        total = sum(p for _, _, p in self.entries)
        if abs(total - 1.0) > 1e-10:
            raise ValueError(f"decomposition probabilities sum to {total}")

    def probability(self, label: int) -> float:
        for lab, _, p in self.entries:
            if lab == label:
                return p
        raise KeyError(label)

    def state(self, label: int) -> PureState:
        for lab, st, _ in self.entries:
            if lab == label:
                return st
        raise KeyError(label)

    @property
    def labels(self) -> list[int]:
        return [lab for lab, _, _ in self.entries]


@dataclass(frozen=True)
class JumpEdge:
    channel: int
    source_label: int
    target_label: int
    direction: str  # "positive" | "negative"
    rate_weight: float

    def __post_init__(self):
        if self.rate_weight < 0:
            raise ValueError("edge weight must be non-negative")


def build_jump_edges(model: SystemModel, decomp: DecompositionState,
                     t: float) -> list[JumpEdge]:
    """Resolve the jump density at time t into a finite edge list.

    Positive channels: one edge per source with nonzero C_k psi^a, weight
    Delta+ ||C_k psi^a||^2. Negative channels: the adjacency is reversed
    and each edge beta -> alpha gets weight
    Delta- (P_alpha / P_beta) ||C_k psi^alpha||^2.

    Raises :class:`DivergenceError` if a negative channel demands outflow
    from a state whose probability has vanished.
    """
    edges, divergent = resolve_jump_edges(model, decomp, t)
    if divergent:
        e = divergent[0]
        raise DivergenceError(t, e.channel, e.source_label, e.target_label)
    return edges


def resolve_jump_edges(model: SystemModel, decomp: DecompositionState,
                       t: float) -> tuple[list[JumpEdge], list[JumpEdge]]:
    """Like :func:`build_jump_edges`, but collects divergent negative edges
    instead of raising.

    Returns (edges, divergent). Divergent edges carry the *numerator*
    Delta- P_alpha ||C_k psi^alpha||^2 as their weight; the true rate is
    infinite, but the numerators still fix the relative target
    probabilities when the whole remaining population must leave at once.
    """
    edges: list[JumpEdge] = []
    divergent: list[JumpEdge] = []
    for k, ch in enumerate(model.channels):
        delta = float(ch.rate(t))
        plus, minus = split_rate(delta)
        if plus > 0.0:
            for label, state, _ in decomp.entries:
                target = ch.positive_map.get(label)
                if target is None:
                    continue
                w = plus * float(
                    np.real(np.vdot(ch.operator @ state.amplitudes,
                                    ch.operator @ state.amplitudes))
                )
                if w > 0.0:
                    edges.append(JumpEdge(k, label, target, "positive", w))
        if minus > 0.0:
            for fwd_src, fwd_tgt in ch.positive_map.items():
                # reverse edge: fwd_tgt -> fwd_src
                if fwd_src not in decomp.labels or fwd_tgt not in decomp.labels:
                    continue
                st = decomp.state(fwd_src)
                csq = float(
                    np.real(np.vdot(ch.operator @ st.amplitudes,
                                    ch.operator @ st.amplitudes))
                )
                numer = minus * decomp.probability(fwd_src) * csq
                if numer <= P_EMPTY * minus:
                    continue
                p_src = decomp.probability(fwd_tgt)
                if p_src <= P_EMPTY:
                    divergent.append(
                        JumpEdge(k, fwd_tgt, fwd_src, "negative", numer)
                    )
                    continue
                edges.append(
                    JumpEdge(k, fwd_tgt, fwd_src, "negative", numer / p_src)
                )
    return edges, divergent


def total_jump_rate(model: SystemModel, decomp: DecompositionState,
                    source_label: int, t: float) -> float:
    """Total rate away from one decomposition state at time t."""
    edges = build_jump_edges(model, decomp, t)
    return sum(e.rate_weight for e in edges if e.source_label == source_label)


@dataclass(frozen=True)
class TargetDistribution:
    """Discrete distribution over (channel, target label) pairs."""

    edges: tuple[JumpEdge, ...]
    probabilities: np.ndarray

    def choose(self, v: float) -> JumpEdge:
        """Pick an edge from a uniform variate v in [0, 1)."""
        cum = np.cumsum(self.probabilities)
        idx = int(np.searchsorted(cum, v, side="right"))
        return self.edges[min(idx, len(self.edges) - 1)]


def target_distribution(edges: Sequence[JumpEdge]) -> TargetDistribution:
    """Normalize the edges of one source into a target distribution."""
    weights = np.array([e.rate_weight for e in edges], dtype=float)
    total = weights.sum()
    if total <= 0.0:
        raise ValueError("no jump possible: total rate is zero")
    return TargetDistribution(tuple(edges), weights / total)


def edges_from(edges: Sequence[JumpEdge], source_label: int) -> list[JumpEdge]:
    return [e for e in edges if e.source_label == source_label]
