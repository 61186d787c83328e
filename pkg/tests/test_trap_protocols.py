import warnings

import numpy as np
import pytest

from penningsim import (CA40_ION, GridField, PadArraySpec, PadArraySystem,
                        SixWireSpec, VoltageSchedule, build_pad_array,
                        build_ring_transport, build_six_wire, build_two_plate,
                        cyclotron_period, execute_hop, load_trap_spec,
                        plan_hop, rasterize, ring_transport_voltages,
                        ring_trap_voltages, sample_potential, six_wire_field,
                        solve_laplace, trapping_assignment)
from penningsim.core import TrajectoryState
from penningsim.exceptions import GeometryConflictError, SpecFileError
from penningsim.trap_protocols import (HopPlan, ring_guide_domain,
                                       two_plate_domain, with_voltages)

MM = 1e-3


# --- six-wire builder -----------------------------------------------------------

def test_build_six_wire_default_matches_spec_field():
    rng = np.random.default_rng(20)
    pts = rng.uniform(-1 * MM, 1 * MM, size=(50, 3))
    a = build_six_wire().potential(pts)
    b = six_wire_field(SixWireSpec()).potential(pts)
    np.testing.assert_array_equal(a, b)


def test_six_wire_three_axial_minima():
    # confining drive for a positive ion: minima between, above and below
    fld = build_six_wire(SixWireSpec(delta_v=+1.3))
    zs = np.linspace(-40 * MM, 40 * MM, 4001)
    keep = (np.abs(np.abs(zs) - 2 * MM) > 0.8 * MM)  # avoid wire planes
    zs = zs[keep]
    pts = np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=-1)
    phi = fld.potential(pts, check=False)
    interior = (phi[1:-1] < phi[:-2]) & (phi[1:-1] <= phi[2:])
    # merge plateau detections within each continuous segment
    min_zs = zs[1:-1][interior]
    clusters = np.split(min_zs, np.where(np.diff(min_zs) > 1 * MM)[0] + 1)
    assert len(clusters) == 3
    centers = [c.mean() for c in clusters]
    assert min(abs(c) for c in centers) < 0.1 * MM          # between the planes
    assert sum(1 for c in centers if c > 2 * MM) == 1       # above
    assert sum(1 for c in centers if c < -2 * MM) == 1      # below


def test_six_wire_drive_sign_flips_center():
    zs = np.linspace(-0.4 * MM, 0.4 * MM, 81)
    pts = np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=-1)
    phi_pos = build_six_wire(SixWireSpec(delta_v=+1.3)).potential(pts)
    phi_neg = build_six_wire(SixWireSpec(delta_v=-1.3)).potential(pts)
    k = len(zs) // 2
    assert np.argmin(phi_pos) == k
    assert np.argmax(phi_neg) == k
    np.testing.assert_allclose(phi_neg, -phi_pos, rtol=1e-12)


# --- two-plate builder ------------------------------------------------------------

def test_build_two_plate_validation():
    with pytest.raises(ValueError):
        build_two_plate(5 * MM, 5 * MM, 15 * MM, -5.0, 5.0)
    with pytest.raises(ValueError):
        build_two_plate(-1 * MM, 15 * MM, 5 * MM, -5.0, 5.0)


def test_two_plate_axial_minimum_above_ring(two_plate_grid):
    zs = np.linspace(5.8 * MM, 14 * MM, 160)
    pts = np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=-1)
    phi = sample_potential(two_plate_grid, pts)
    k = int(np.argmin(phi))
    assert 0 < k < len(zs) - 1          # interior minimum above the plane
    assert zs[k] > 5 * MM
    # single minimum: profile decreases then increases
    assert np.all(np.diff(phi[:k]) < 0)
    assert np.all(np.diff(phi[k:]) > 0)


def test_two_plate_equal_voltages_no_well():
    els = build_two_plate(5 * MM, 15 * MM, 5 * MM, v_top=5.0, v_bottom=5.0)
    grid = rasterize(els, two_plate_domain(5 * MM, 15 * MM), h=0.5 * MM)
    solved, _ = solve_laplace(grid)
    zs = np.linspace(5.8 * MM, 14 * MM, 120)
    pts = np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=-1)
    phi = sample_potential(solved, pts)
    k = int(np.argmin(phi))
    assert k in (0, len(zs) - 1)        # no interior minimum


# --- ring guide ---------------------------------------------------------------------

@pytest.fixture(scope="module")
def ring_guide_grids():
    els = build_ring_transport()
    domain = ring_guide_domain()
    grids = {}
    for mode, assignment in (("trap", ring_trap_voltages()),
                             ("transport", ring_transport_voltages())):
        grid = rasterize(with_voltages(els, assignment), domain, h=0.3 * MM)
        grids[mode], _ = solve_laplace(grid)
    return grids


def arc_profile(grid, radius, z, n=121, span=np.pi):
    phis = np.linspace(-span / 2, span / 2, n)
    pts = np.stack([radius * np.cos(phis), radius * np.sin(phis),
                    np.full_like(phis, z)], axis=-1)
    return phis, sample_potential(grid, pts)


def crossing_minimum(grid):
    """Potential minimum above the right-hand ring/wire crossing."""
    zs = np.linspace(2.8 * MM, 7.5 * MM, 60)
    pts = np.stack([np.full_like(zs, 9 * MM), np.zeros_like(zs), zs], axis=-1)
    phi = sample_potential(grid, pts)
    k = int(np.argmin(phi))
    return zs[k], phi[k]


def test_ring_guide_trap_mode_minimum(ring_guide_grids):
    grid = ring_guide_grids["trap"]
    z_min, _ = crossing_minimum(grid)
    assert 2.8 * MM < z_min < 7.0 * MM
    # along the guide arc at that height the crossing is a potential minimum
    phis, arc = arc_profile(grid, 9 * MM, z_min)
    k = int(np.argmin(arc))
    assert abs(phis[k]) < 0.15


def test_ring_guide_transport_mode_gradient(ring_guide_grids):
    trap = ring_guide_grids["trap"]
    trans = ring_guide_grids["transport"]
    z_min, _ = crossing_minimum(trap)
    phis, arc_t = arc_profile(trans, 9 * MM, z_min, span=0.9 * np.pi)
    # the crossing-region minimum is gone: potential now slopes through it
    k = int(np.argmin(np.abs(phis)))
    grad = np.gradient(arc_t, phis)
    assert abs(grad[k]) > 0.2  # V per radian along the guide
    # and the well along the arc is displaced away from the crossing
    assert abs(phis[int(np.argmin(arc_t))]) > 0.3


def test_ring_guide_mirror_symmetry(ring_guide_grids):
    grid = ring_guide_grids["trap"]
    rng = np.random.default_rng(21)
    pts = rng.uniform([-10 * MM, -10 * MM, 3 * MM], [10 * MM, 10 * MM, 6 * MM],
                      size=(40, 3))
    mirrored = pts * np.array([1.0, -1.0, 1.0])
    np.testing.assert_allclose(sample_potential(grid, pts),
                               sample_potential(grid, mirrored),
                               rtol=0, atol=2e-5)


def test_ring_guide_radii_validation():
    with pytest.raises(ValueError):
        build_ring_transport(ring_radii=(9 * MM, 6 * MM, 12 * MM))


# --- pad arrays ------------------------------------------------------------------

def test_pad_array_single_site_has_14_electrodes():
    assert len(build_pad_array(PadArraySpec())) == 14


def test_pad_array_far_sites_28_adjacent_24():
    far = PadArraySpec(trap_sites=((0, 0), (2, 0)))
    assert len(build_pad_array(far)) == 28
    shared = PadArraySpec(trap_sites=((0, 0), (1, 0)))
    assert len(build_pad_array(shared)) == 24  # four electrodes deduplicated


def test_pad_array_three_site_topology():
    spec = PadArraySpec(trap_sites=((0, 0), (1, 0), (0, 1)))
    system = PadArraySystem(spec)
    # expected pad count from brute-force union of the site patterns
    positions = set()
    for site in spec.trap_sites:
        c = spec.site_center(site)
        positions.add((round(c[0], 9), round(c[1], 9)))
        for k in range(6):
            ang = spec.ring_angle + k * np.pi / 3
            q = c + spec.pad_pitch * np.array([np.cos(ang), np.sin(ang)])
            positions.add((round(q[0], 9), round(q[1], 9)))
    assert len(system.electrodes) == 2 * len(positions)
    for site in spec.trap_sites:
        assert len(system.ring_labels(site)) == 12
        assert len(system.endcap_labels(site)) == 2


def test_pad_array_compact_tiling_shares_center():
    spec = PadArraySpec.compact(trap_sites=((0, 0), (1, 0)))
    system = PadArraySystem(spec)
    # neighbour's endcap doubles as a ring pad of the first site
    ring_a = set(system.ring_labels((0, 0)))
    ec_b = set(system.endcap_labels((1, 0)))
    assert ec_b <= ring_a


def test_pad_array_overlap_rejected():
    # sites closer than the lattice allows -> overlapping pads
    spec = PadArraySpec(trap_sites=((0, 0), (1, 0)),
                        trap_center_spacing=6e-3)
    with pytest.raises(GeometryConflictError):
        PadArraySystem(spec)


def test_pad_spec_validation():
    with pytest.raises(ValueError):
        PadArraySpec(gamma=-0.1)
    with pytest.raises(ValueError):
        PadArraySpec(endcap_hole_diameter=5e-3)
    with pytest.raises(ValueError):
        PadArraySpec(pad_diameter=6e-3)


def test_trapping_assignment_quadrupole(pad_site_trap_grid, pad_site_system):
    # Hessian at the site center: axial confining, radial anti-confining
    d = 0.4 * MM
    p0 = sample_potential(pad_site_trap_grid, np.zeros(3))

    def second(axis):
        e = np.zeros(3)
        e[axis] = d
        return (sample_potential(pad_site_trap_grid, e) - 2 * p0 +
                sample_potential(pad_site_trap_grid, -e)) / d**2

    q = CA40_ION.charge
    assert q * second(2) > 0
    assert q * second(0) < 0
    assert q * second(1) < 0
    # near-Laplacian consistency of the three curvatures
    assert abs(second(0) + second(1) + second(2)) < 0.1 * abs(second(2))


def test_trapping_assignment_warns_on_sign_violation(pad_site_system):
    with pytest.warns(UserWarning):
        trapping_assignment(pad_site_system, (0, 0), -10.0, -10.0)


def test_all_zero_assignment_gives_zero_field(pad_hop_bundle):
    system, _ = pad_hop_bundle
    assignment = {lab: 0.0 for lab in system.labels}
    fld = system.field_for(assignment, prefer_basis=True)
    rng = np.random.default_rng(22)
    pts = rng.uniform(-2 * MM, 2 * MM, size=(20, 3))
    assert np.abs(fld.potential(pts)).max() == 0.0


# --- hop planning and execution ----------------------------------------------------

def test_hop_plan_duration_exact(pad_hop_bundle):
    _, plan = pad_hop_bundle
    expect = 2 * np.pi * CA40_ION.mass / (CA40_ION.charge * 1.0)
    assert abs(plan.duration - expect) / expect < 1e-12
    assert plan.duration == pytest.approx(2.6e-6, rel=0.02)


def test_hop_plan_voltage_scale(pad_hop_bundle):
    # tens of volts for a cm-scale structure
    _, plan = pad_hop_bundle
    vmax = max(abs(v) for v in plan.hop_assignment.values())
    assert 5.0 < vmax < 100.0


def test_hop_plan_needs_x_adjacency(pad_hop_bundle):
    system, _ = pad_hop_bundle
    with pytest.raises(ValueError):
        plan_hop(system, (0, 0), (0, 1), CA40_ION, 1.0)


def test_hop_lands_on_target(pad_hop_bundle):
    system, plan = pad_hop_bundle
    report = execute_hop(system, plan, CA40_ION, 1.0)
    assert not report.failed
    assert report.dxy < 0.05 * system.spec.spacing
    assert report.z_final < 0.05 * MM


def test_hop_midpoint_has_no_drift_normal_velocity(pad_hop_bundle):
    # the symmetry condition behind exact centering: v_y ~ 0 when the ion
    # crosses the inter-trap midplane
    system, plan = pad_hop_bundle
    report = execute_hop(system, plan, CA40_ION, 1.0, record_stride=2)
    traj = report.trajectory
    x_mid = 0.5 * (system.site_center3((0, 0)) + system.site_center3((1, 0)))[0]
    k = int(np.argmin(np.abs(traj.r[:, 0] - x_mid)))
    v_drift = plan.target_e_field / 1.0
    assert abs(traj.v[k, 1]) < 0.05 * v_drift


def test_hop_reverse_plan_mirrors_assignment(pad_hop_bundle):
    system, _ = pad_hop_bundle
    fwd = plan_hop(system, (0, 0), (1, 0), CA40_ION, 1.0, calibrate=False)
    rev = plan_hop(system, (1, 0), (0, 0), CA40_ION, 1.0, calibrate=False)
    # reversing maps each electrode onto its 180-degree partner about the
    # channel midpoint
    mid = 0.5 * (system.site_center3((0, 0)) + system.site_center3((1, 0)))
    vmax = max(abs(v) for v in fwd.hop_assignment.values())
    for el in system.electrodes:
        lo, hi = el.shape.bounds()
        c = 0.5 * (lo + hi)
        partner = np.array([2 * mid[0] - c[0], -c[1], c[2]])
        partner_label = None
        for el2 in system.electrodes:
            lo2, hi2 = el2.shape.bounds()
            c2 = 0.5 * (lo2 + hi2)
            if np.allclose(c2, partner, atol=1e-9):
                partner_label = el2.label
                break
        assert partner_label is not None
        assert fwd.hop_assignment[el.label] == pytest.approx(
            rev.hop_assignment[partner_label], abs=0.02 * vmax)


def test_zero_field_plan_closes_orbit(pad_hop_bundle):
    system, plan = pad_hop_bundle
    zero = {lab: 0.0 for lab in system.labels}
    null_plan = HopPlan(
        from_site=(0, 0), to_site=(0, 0), duration=plan.duration,
        hop_assignment=zero, expected_landing=system.site_center3((0, 0)),
        target_e_field=0.0, kappa=0.0,
        schedule=VoltageSchedule(((0.0, zero), (plan.duration, zero))))
    v0 = 150.0
    start = TrajectoryState(0.0, system.site_center3((0, 0)),
                            [v0, 0.0, 0.0])
    report = execute_hop(system, null_plan, CA40_ION, 1.0, state0=start)
    gyro_radius = CA40_ION.mass * v0 / (CA40_ION.charge * 1.0)
    # one full cyclotron loop returns to the launch point
    assert report.dxy < 1e-3 * gyro_radius


# --- schedules and spec files -------------------------------------------------------

def test_voltage_schedule_validation():
    with pytest.raises(ValueError):
        VoltageSchedule(((0.0, {}), (0.0, {})))
    sched = VoltageSchedule(((0.0, {"t0": 1.0}), (1e-6, {"t0": 0.0})))
    assert sched.assignment_at(5e-7) == {"t0": 1.0}
    assert sched.assignment_at(2e-6) == {"t0": 0.0}
    with pytest.raises(KeyError):
        sched.validate_labels([])


def test_with_voltages_unknown_label():
    els = build_two_plate(5 * MM, 15 * MM, 5 * MM, -5.0, 5.0)
    with pytest.raises(KeyError):
        with_voltages(els, {"nonexistent": 1.0})


def test_load_trap_spec_roundtrip(tmp_path):
    path = tmp_path / "trap.cfg"
    path.write_text("""
# a pad array with a schedule
trap.kind = pad_array
b_field_T = 1.0
species.amu = 40
species.charge = 1
pad.diameter_mm = 4
pad.pitch_mm = 5
pad.gamma = 0.9
hole.diameter_mm = 1
pad.sites = 0,0;1,0
grid.h_mm = 0.4
voltages.t0 = 10.0
schedule.0.t_us = 0
schedule.0.t0_V = 10.0
schedule.1.t_us = 2.6
schedule.1.t0_V = 0.0
""")
    setup = load_trap_spec(str(path))
    assert setup.kind == "pad_array"
    assert setup.species.mass == pytest.approx(40 * 1.66053906660e-27)
    assert setup.params["spec"].trap_sites == ((0, 0), (1, 0))
    assert setup.h == pytest.approx(0.4 * MM)
    assert setup.voltages == {"t0": 10.0}
    assert len(setup.schedule.segments) == 2
    assert setup.schedule.segments[1][0] == pytest.approx(2.6e-6)


def test_load_trap_spec_unknown_keys_listed(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("trap.kind = six_wire\nwire.dd_mm = 3\nbogus = 1\n")
    with pytest.raises(SpecFileError) as err:
        load_trap_spec(str(path))
    assert "wire.dd_mm" in str(err.value)
    assert "bogus" in str(err.value)


def test_load_trap_spec_duplicate_key(tmp_path):
    path = tmp_path / "dup.cfg"
    path.write_text("trap.kind = six_wire\nwire.d_mm = 3\nwire.d_mm = 4\n")
    with pytest.raises(SpecFileError):
        load_trap_spec(str(path))


def test_load_trap_spec_bad_kind(tmp_path):
    path = tmp_path / "kind.cfg"
    path.write_text("trap.kind = hyperbolic\n")
    with pytest.raises(SpecFileError):
        load_trap_spec(str(path))
