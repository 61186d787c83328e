"""Shared fixtures; the expensive solves are session-scoped."""

import numpy as np
import pytest

from penningsim import (CA40_ION, PadArraySpec, PadArraySystem, TwoWireSpec,
                        build_two_plate, plan_hop, rasterize, solve_laplace,
                        trapping_assignment)
from penningsim.trap_protocols import two_plate_domain

MM = 1e-3


@pytest.fixture(scope="session")
def two_wire_spec():
    return TwoWireSpec(a=0.5 * MM, z0=2 * MM, reference_radius=100 * MM,
                       v_plus=4.0)


@pytest.fixture(scope="session")
def two_plate_grid():
    """Solved two-plate trap, z0=5 mm, R-r=10 mm, +-5 V."""
    els = build_two_plate(z0=5 * MM, r_outer=15 * MM, r_inner=5 * MM,
                          v_top=-5.0, v_bottom=+5.0)
    grid = rasterize(els, two_plate_domain(5 * MM, 15 * MM), h=0.25 * MM)
    solved, _ = solve_laplace(grid)
    return solved


@pytest.fixture(scope="session")
def pad_site_system():
    """Single pad-trap site at the default geometry (gamma = 0.9)."""
    return PadArraySystem(PadArraySpec(), h=0.2 * MM)


@pytest.fixture(scope="session")
def pad_site_trap_grid(pad_site_system):
    assignment = trapping_assignment(pad_site_system, (0, 0), 10.0, -10.0)
    return pad_site_system.solve_assignment(assignment)


@pytest.fixture(scope="session")
def pad_hop_bundle():
    """Two shared-pad sites with the electrode basis solved, plus the
    calibrated hop plan between them (the expensive fixture)."""
    spec = PadArraySpec(trap_sites=((0, 0), (1, 0)))
    system = PadArraySystem(spec, h=0.2 * MM)
    plan = plan_hop(system, (0, 0), (1, 0), CA40_ION, 1.0)
    return system, plan
