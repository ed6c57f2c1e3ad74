"""Shared fixtures: small deterministic grids and families.

Heavy objects (reference Gabor configuration, refinement ladder) are
session-scoped so the acceptance tests and module tests share one build.
"""
import numpy as np
import pytest

from coorbit.measure_space import SignalGrid, build_quad_grid, \
    trivial_admissible_weight
from coorbit.frame_families import default_index_grid, make_family


@pytest.fixture(scope="session")
def rng():
    return np.random.default_rng(np.random.PCG64(1234))


@pytest.fixture(scope="session")
def unit_grid_1d():
    """Lebesgue midpoint grid on [0, 1] with 64 nodes."""
    return build_quad_grid([[0.0, 1.0]], [64])


@pytest.fixture(scope="session")
def wide_grid_1d():
    """Lebesgue grid on [-8, 8], fine enough for Gaussian-kernel oracles."""
    return build_quad_grid([[-8.0, 8.0]], [320])


@pytest.fixture(scope="session")
def m_trivial():
    return trivial_admissible_weight()


@pytest.fixture(scope="session")
def gabor_small():
    """Small Gabor configuration used across module tests."""
    sg = SignalGrid(8.0, 64)
    fam = make_family("gabor", None, sg)
    grid = default_index_grid(fam, bounds=[[-5.0, 5.0], [-5.0, 5.0]],
                              resolution=[56, 56])
    return fam, grid


@pytest.fixture(scope="session")
def gabor_reference():
    """The reference configuration: T=10, n=512, box [-8,8]x[-16,16] @ 64x64."""
    sg = SignalGrid(10.0, 512)
    fam = make_family("gabor", None, sg)
    grid = default_index_grid(fam)
    return fam, grid


@pytest.fixture(scope="session")
def cwt_reference():
    sg = SignalGrid(16.0, 512)
    fam = make_family("cwt", None, sg)
    grid = default_index_grid(fam)
    return fam, grid


@pytest.fixture(scope="session")
def sinc_reference():
    sg = SignalGrid(10.0, 512)
    fam = make_family("sinc_rkhs", {"bandlimit": np.pi / 2}, sg)
    grid = default_index_grid(fam)
    return fam, grid


@pytest.fixture(scope="session")
def gabor_ladder():
    """Dyadic refinement of the small Gabor box down to the full flag.

    Used by the oscillation, discretization and acceptance tests; runs once.
    """
    from coorbit.oscillation import refine_until
    sg = SignalGrid(8.0, 64)
    fam = make_family("gabor", None, sg)
    domain = [[-4.0, 4.0], [-4.0, 4.0]]
    cov, rep, traj = refine_until(fam, domain, trivial_admissible_weight(),
                                  target="full", max_levels=8,
                                  initial_cell=0.9, z_per_cell=3,
                                  seed=0, rel_cut=0.2)
    return {"family": fam, "domain": domain, "covering": cov, "report": rep,
            "trajectory": traj, "rel_cut": 0.2, "signal_grid": sg}
