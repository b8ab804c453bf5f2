"""Predefined open-system models: two-level atom, Lambda and Ladder.

A :class:`SystemModel` bundles the jump operators, per-channel decay-rate
functions and the label-level channel topology. The topology (which
decomposition label a channel maps to, and hence which reverse jumps are
possible when a rate turns negative) cannot be recovered from the master
equation alone, so the model carries it explicitly.

Labels: 0 is always the deterministically evolving state; labels >= 1 are
fixed basis states.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import PureState, basis_state, normalize
from .rates import RateFunction, SpectralDensityParams, make_tcl4_rate


@dataclass(frozen=True)
class Channel:
    """One decay channel: jump operator, rate and label adjacency.

    ``positive_map`` maps source label -> target label for jumps when the
    rate is non-negative. Reverse (negative-rate) jumps use the same map
    with the roles of source and target exchanged.
    """

    operator: np.ndarray
    rate: RateFunction
    positive_map: dict[int, int]
    params: SpectralDensityParams | None = None

    def __post_init__(self):
        op = np.asarray(self.operator, dtype=complex)
        op.setflags(write=False)
        object.__setattr__(self, "operator", op)


@dataclass(frozen=True)
class SystemModel:
    name: str
    family: str  # "tla" | "lambda" | "ladder" | "custom"
    dim: int
    channels: tuple[Channel, ...]
    # label -> fixed representative amplitudes; label 0 is the propagated state
    fixed_states: dict[int, np.ndarray]
    initial_amplitudes: np.ndarray
    lam: float = 1.0
    hamiltonian: RateFunction | None = None  # t -> d x d Hermitian matrix

    def __post_init__(self):
        amps = np.asarray(self.initial_amplitudes, dtype=complex)
        amps.setflags(write=False)
        object.__setattr__(self, "initial_amplitudes", amps)

    @property
    def n_labels(self) -> int:
        return 1 + len(self.fixed_states)

    @property
    def labels(self) -> list[int]:
        return list(range(self.n_labels))

    def initial_state(self) -> PureState:
        return normalize(PureState(self.initial_amplitudes, label=0))

    def state_of_label(self, label: int, psi0: PureState) -> PureState:
        """Representative pure state of a label; ``psi0`` is the current
        (normalized) deterministic state that label 0 refers to."""
        if label == 0:
            return psi0
        amps = self.fixed_states[label]
        return PureState(amps, label=label, normalized=True)

    def h_s(self, t: float) -> np.ndarray:
        if self.hamiltonian is None:
            return np.zeros((self.dim, self.dim), dtype=complex)
        return np.asarray(self.hamiltonian(t), dtype=complex)

    def validate_adjacency(self, psi0: PureState, tol: float = 1e-12):
        """Check that each declared edge alpha -> beta satisfies
        C_k psi^alpha parallel to psi^beta."""
        for k, ch in enumerate(self.channels):
            for src, tgt in ch.positive_map.items():
                v = ch.operator @ self.state_of_label(src, psi0).amplitudes
                n = np.linalg.norm(v)
                if n == 0.0:
                    continue

                w = self.state_of_label(tgt, psi0).amplitudes
                overlap = abs(np.vdot(w, v)) / (n * np.linalg.norm(w))
                if abs(overlap - 1.0) > tol:
                    raise ValueError(
                        f"channel {k}: C psi^{src} not parallel to psi^{tgt}"
                    )


def _lower(dim: int, i: int, j: int) -> np.ndarray:
    """|i><j| in dimension dim."""
    op = np.zeros((dim, dim), dtype=complex)
    op[i, j] = 1.0
    return op


def two_level_atom(params: SpectralDensityParams,
                   initial=None, name: str = "tla") -> SystemModel:
    """Two-level atom: |0> excited, |1> ground, single channel |1><0|."""
    if initial is None:
        initial = basis_state(2, 0).amplitudes
    ch = Channel(
        operator=_lower(2, 1, 0),
        rate=make_tcl4_rate(params),
        positive_map={0: 1},
        params=params,
    )
    return SystemModel(
        name=name, family="tla", dim=2, channels=(ch,),
        fixed_states={1: basis_state(2, 1).amplitudes},
        initial_amplitudes=initial, lam=params.lam,
    )


def lambda_system(params1: SpectralDensityParams, params2: SpectralDensityParams,
                  initial=None, name: str = "lambda") -> SystemModel:
    """Lambda system: |0> excited, |1>, |2> ground; channels |1><0|, |2><0|."""
    if initial is None:
        initial = basis_state(3, 0).amplitudes
    ch1 = Channel(_lower(3, 1, 0), make_tcl4_rate(params1), {0: 1}, params1)
    ch2 = Channel(_lower(3, 2, 0), make_tcl4_rate(params2), {0: 2}, params2)
    return SystemModel(
        name=name, family="lambda", dim=3, channels=(ch1, ch2),
        fixed_states={1: basis_state(3, 1).amplitudes,
                      2: basis_state(3, 2).amplitudes},
        initial_amplitudes=initial, lam=params1.lam,
    )


def ladder_system(params1: SpectralDensityParams, params2: SpectralDensityParams,
                  initial=None, name: str = "ladder") -> SystemModel:
    """Ladder system: |0> excited, |1> middle, |2> ground.

    Channel 1 is |1><0|, channel 2 is |2><1|. Channel 2 touches two source
    labels, so its reverse jump is one-to-many: psi^2 can return to psi^1
    or psi^0.
    """
    if initial is None:
        initial = basis_state(3, 0).amplitudes
    ch1 = Channel(_lower(3, 1, 0), make_tcl4_rate(params1), {0: 1}, params1)
    ch2 = Channel(_lower(3, 2, 1), make_tcl4_rate(params2), {0: 2, 1: 2}, params2)
    return SystemModel(
        name=name, family="ladder", dim=3, channels=(ch1, ch2),
        fixed_states={1: basis_state(3, 1).amplitudes,
                      2: basis_state(3, 2).amplitudes},
        initial_amplitudes=initial, lam=params1.lam,
    )


@dataclass(frozen=True)
class RunPreset:
    model: SystemModel
    n_samples: int
    window: tuple[float, float] = (0.0, 5.0)
    dt: float = 1e-3


def preset(name: str) -> RunPreset:
    """Figure-parameter presets. Times in 1/lam, rates in lam."""
    lam = 1.0
    if name == "tla_fig2":
        model = two_level_atom(SpectralDensityParams(gamma0=5.0, lam=lam, delta=8.0))
        return RunPreset(model=model, n_samples=10**5)
    if name == "lambda_fig3":
        model = lambda_system(
            SpectralDensityParams(gamma0=5.0, lam=lam, delta=4.0),
            SpectralDensityParams(gamma0=5.0, lam=lam, delta=8.0),
        )
        return RunPreset(model=model, n_samples=10**5)
    if name == "ladder_fig4":
        model = ladder_system(
            SpectralDensityParams(gamma0=5.0, lam=lam, delta=8.0),
            SpectralDensityParams(gamma0=5.0, lam=lam, delta=4.0),
        )
        return RunPreset(model=model, n_samples=10**6)
    raise ValueError(f"unknown preset {name!r}")


PRESET_NAMES = ("tla_fig2", "lambda_fig3", "ladder_fig4")

_FAMILY_BUILDERS = {
    "tla": two_level_atom,
    "lambda": lambda_system,
    "ladder": ladder_system,
}


def load_model_file(path) -> SystemModel:
    """Build a model from a JSON definition file.

    Schema: {"name", "family", "channels": [{"gamma0", "delta", "lam"}...],
    "initial_state": [[re, im], ...] (optional)}. The family selects the
    jump operators and adjacency; only the rate parameters and initial
    state are free.
    """
    with open(path) as fh:
        cfg = json.load(fh)
    family = cfg.get("family")
    if family not in _FAMILY_BUILDERS:
        raise ValueError(f"unknown model family {family!r}")
    builder = _FAMILY_BUILDERS[family]
    chans = [
        SpectralDensityParams(
            gamma0=float(c["gamma0"]),
            lam=float(c.get("lam", 1.0)),
            delta=float(c.get("delta", 0.0)),
        )
        for c in cfg["channels"]
    ]
    n_expected = 1 if family == "tla" else 2
    if len(chans) != n_expected:
        raise ValueError(f"family {family!r} needs {n_expected} channel(s)")
    initial = None
    if "initial_state" in cfg:
        initial = np.array([complex(re, im) for re, im in cfg["initial_state"]])
    name = cfg.get("name", family)
    return builder(*chans, initial=initial, name=name)
