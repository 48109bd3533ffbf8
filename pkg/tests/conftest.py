import os

import numpy as np
import pytest

os.environ.setdefault("OMP_NUM_THREADS", "1")

from romforge.dynsys import make_duffing, make_vk_beam  # noqa: E402
from romforge.hb import phase_sweep  # noqa: E402
from romforge.pod import build_snapshots, compute_pod, project_system  # noqa: E402

SNAPSHOT_PHASES = np.linspace(0.1714, 3.1344, 10)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def duffing():
    """Hardening Duffing resonator (w0=1, xi=0.05, k3=0.5, eps=1)."""
    return make_duffing(1.0, 0.05, 0.5, 1.0)


@pytest.fixture(scope="session")
def linear_oscillator():
    return make_duffing(1.0, 0.05, 0.0, 1.0)


@pytest.fixture(scope="session")
def small_beam():
    return make_vk_beam(8)


@pytest.fixture(scope="session")
def beam():
    return make_vk_beam(64)


@pytest.fixture(scope="session")
def beam_snapshots(beam):
    """Ten phase-sampled full-order orbits at beta = 0.5, 50 samples each."""
    mon = beam.meta["monitor_dof"]
    orbits = phase_sweep(beam, 0.5, SNAPSHOT_PHASES, dof=mon)
    return orbits, build_snapshots([(o, 0.5) for o in orbits], 50, dof=mon)


@pytest.fixture(scope="session")
def beam_rom(beam, beam_snapshots):
    """Four-mode POD-Galerkin model of the beam."""
    basis = compute_pod(beam_snapshots[1], 4)
    return basis, project_system(beam, basis)
