"""Shared helpers for the test suite."""

import numpy as np
import pytest

from nmqj.linalg import basis_state
from nmqj.rates import SpectralDensityParams, constant_rate
from nmqj.systems import Channel, SystemModel, preset


def constant_tla(gamma: float) -> SystemModel:
    """Two-level decay model with a constant (Markovian) rate."""
    op = np.zeros((2, 2), dtype=complex)
    op[1, 0] = 1.0
    ch = Channel(operator=op, rate=constant_rate(gamma), positive_map={0: 1})
    return SystemModel(
        name=f"tla-const-{gamma}", family="tla", dim=2, channels=(ch,),
        fixed_states={1: basis_state(2, 1).amplitudes},
        initial_amplitudes=basis_state(2, 0).amplitudes,
    )


def constant_ladder(gamma1: float, gamma2: float) -> SystemModel:
    """Three-level cascade model with constant channel rates."""
    c1 = np.zeros((3, 3), dtype=complex)
    c1[1, 0] = 1.0
    c2 = np.zeros((3, 3), dtype=complex)
    c2[2, 1] = 1.0
    ch1 = Channel(c1, constant_rate(gamma1), {0: 1})
    ch2 = Channel(c2, constant_rate(gamma2), {0: 2, 1: 2})
    return SystemModel(
        name="ladder-const", family="ladder", dim=3, channels=(ch1, ch2),
        fixed_states={1: basis_state(3, 1).amplitudes,
                      2: basis_state(3, 2).amplitudes},
        initial_amplitudes=basis_state(3, 0).amplitudes,
    )


FIG2_PARAMS = SpectralDensityParams(gamma0=5.0, lam=1.0, delta=8.0)


@pytest.fixture(scope="session")
def tla_model():
    return preset("tla_fig2").model


@pytest.fixture(scope="session")
def lambda_model():
    return preset("lambda_fig3").model


@pytest.fixture(scope="session")
def ladder_model():
    return preset("ladder_fig4").model
