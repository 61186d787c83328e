import numpy as np
import pytest

from penningsim import (CA40_ION, ELECTRON, SixWireSpec, TwoWireSpec,
                        UniformField, QuadrupoleField, axial_frequency_two_wire,
                        cyclotron_frequency, cyclotron_period, efield,
                        mode_frequencies, six_wire_field, six_wire_potential,
                        two_wire_field, two_wire_potential, two_wire_quadratic,
                        species_from_amu)
from penningsim.analytic_fields import LogWire, LogWireSet
from penningsim.exceptions import (NoAxialConfinementError, SingularPointError,
                                   UnstableTrapError)

MM = 1e-3


def random_clear_points(rng, n, spec_kind="six", min_clearance=1.5e-3):
    """Random sample points at least min_clearance from every wire axis."""
    pts = []
    while len(pts) < n:
        r = rng.uniform(-8e-3, 8e-3, size=3)
        if spec_kind == "six":
            axes = [(r[0] - dx, r[2] + 2e-3) for dx in (-3e-3, 0, 3e-3)] + \
                   [(r[1] - dy, r[2] - 2e-3) for dy in (-3e-3, 0, 3e-3)]
        else:
            axes = [(r[1], r[2] - 2e-3), (r[0], r[2] + 2e-3)]
        if min(u * u + w * w for u, w in axes) > min_clearance**2:
            pts.append(r)
    return np.array(pts)


# --- six-wire potential -----------------------------------------------------

def test_six_wire_swap_symmetry():
    # phi(x, y, z) == phi(y, x, -z) when both sets carry the same drive
    spec = SixWireSpec()
    rng = np.random.default_rng(3)
    pts = random_clear_points(rng, 100)
    swapped = np.stack([pts[:, 1], pts[:, 0], -pts[:, 2]], axis=-1)
    a = six_wire_potential(spec, pts)
    b = six_wire_potential(spec, swapped)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)


def test_six_wire_zero_drive():
    spec = SixWireSpec(delta_v=0.0)
    rng = np.random.default_rng(4)
    pts = random_clear_points(rng, 50)
    assert np.allclose(six_wire_potential(spec, pts), 0.0, atol=1e-15)


def test_six_wire_axial_extremum_at_center():
    # 1-D scan of the axial profile: stationary point between the planes
    spec = SixWireSpec(delta_v=-1.3)
    zs = np.linspace(-0.5 * MM, 0.5 * MM, 101)
    pts = np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=-1)
    phi = six_wire_potential(spec, pts)
    k = len(zs) // 2
    dphi = (phi[k + 1] - phi[k - 1]) / (zs[k + 1] - zs[k - 1])
    assert abs(dphi) < 1e-9 * abs(phi[k]) / MM
    assert np.argmax(phi) == k  # delta_v < 0: central extremum (a maximum)


def test_six_wire_singular_guard():
    spec = SixWireSpec()
    with pytest.raises(SingularPointError):
        six_wire_potential(spec, np.array([0.0, 0.0, -2e-3]))
    with pytest.raises(SingularPointError):
        # within a/2 of the central lower wire
        six_wire_potential(spec, np.array([2e-4, 0.0, -2e-3]))


def test_wire_set_reference_radius_invariant():
    with pytest.raises(ValueError):
        LogWireSet([LogWire("x", 0.0, 2e-3, 1.0)], reference_radius=0.01)


# --- two-wire potential -----------------------------------------------------

def test_two_wire_origin_value(two_wire_spec):
    # direct substitution of x=y=z=0: phi = 2 V+ ln(R^2/z0^2) / ln(R^2/(a z0))
    expect = 2.0 * 4.0 * np.log(0.1**2 / 0.002**2) / np.log(0.1**2 / (0.0005 * 0.002))
    got = two_wire_potential(two_wire_spec, np.zeros(3))
    assert got == pytest.approx(expect, rel=1e-12)
    # hand evaluation of the same expression, frozen
    assert got == pytest.approx(6.795880017344074, rel=1e-12)


def test_quadratic_constant_matches_origin(two_wire_spec):
    quad = two_wire_quadratic(two_wire_spec)
    assert quad.phi0 == pytest.approx(
        two_wire_potential(two_wire_spec, np.zeros(3)), rel=1e-12)


def test_quadratic_matches_finite_differences(two_wire_spec):
    # second-order finite differences of the exact potential at the origin
    h = 1e-7
    phi0 = two_wire_potential(two_wire_spec, np.zeros(3))

    def second(axis):
        e = np.zeros(3)
        e[axis] = h
        return (two_wire_potential(two_wire_spec, e) - 2 * phi0 +
                two_wire_potential(two_wire_spec, -e)) / h**2

    d2 = np.array([second(0), second(1), second(2)])
    # Hessian diagonal proportional to (1, 1, -2)
    assert d2[1] == pytest.approx(d2[0], rel=1e-6)
    assert d2[2] == pytest.approx(-2.0 * d2[0], rel=1e-6)
    quad = two_wire_quadratic(two_wire_spec)
    assert quad.curvature_coefficient == pytest.approx(d2[0] / 2.0, rel=1e-6)


def test_quadratic_zero_drive():
    spec = TwoWireSpec(v_plus=0.0)
    quad = two_wire_quadratic(spec)
    assert quad.phi0 == 0.0
    assert quad.curvature_coefficient == 0.0


def test_quadratic_approximates_potential(two_wire_spec):
    # |phi_quad - phi| / |phi - phi(0)| < 0.05 inside r < 0.05 z0.
    # Directions near the quadrupole null cone (x^2 + y^2 = 2 z^2) are
    # excluded: there the reference difference itself vanishes.
    quad = two_wire_quadratic(two_wire_spec)

    def rel_error(pts):
        phi = two_wire_potential(two_wire_spec, pts)
        phi_quad = quad.phi0 + quad.curvature_coefficient * (
            pts[:, 0]**2 + pts[:, 1]**2 - 2 * pts[:, 2]**2)
        return np.abs(phi_quad - phi), np.abs(phi - quad.phi0)

    # along the well's principal directions (the axial bounce and the
    # radial displacements the mode frequencies are built from)
    s = np.linspace(-0.05, 0.05, 41) * two_wire_spec.z0
    s = s[np.abs(s) > 1e-3 * two_wire_spec.z0]
    for u in ([1, 0, 0], [0, 1, 0], [0, 0, 1],
              [np.sqrt(0.5), np.sqrt(0.5), 0]):
        pts = s[:, None] * np.asarray(u, dtype=float)
        err, denom = rel_error(pts)
        assert np.all(err / denom < 0.05)
    # arbitrary directions: the odd cross term (y^2 - x^2) z caps the
    # pointwise ratio, so random points are held to the ball-wide scale
    rng = np.random.default_rng(5)
    dirs = rng.normal(size=(400, 3))
    dirs /= np.linalg.norm(dirs, axis=1)[:, None]
    radii = 0.05 * two_wire_spec.z0 * rng.random(len(dirs)) ** (1 / 3)
    err, denom = rel_error(dirs * radii[:, None])
    assert np.all(err < 0.05 * denom.max())


def test_axial_frequency_scaling(two_wire_spec):
    from dataclasses import replace
    w1 = axial_frequency_two_wire(two_wire_spec, CA40_ION)
    w2 = axial_frequency_two_wire(replace(two_wire_spec, v_plus=8.0), CA40_ION)
    assert w2 == pytest.approx(np.sqrt(2.0) * w1, rel=1e-12)


def test_axial_frequency_against_simulated_bounce(two_wire_spec):
    # independent oracle: a small-amplitude bounce on the trap axis
    # (leapfrog on the exact axial field), zero-crossing timing
    q, m = CA40_ION.charge, CA40_ION.mass
    fld = two_wire_field(two_wire_spec)
    w_formula = axial_frequency_two_wire(two_wire_spec, CA40_ION)
    z = 0.01 * two_wire_spec.z0
    v = 0.0
    dt = 2 * np.pi / w_formula / 1000
    zs, ts = [], []
    t = 0.0
    for _ in range(30000):
        e = fld.efield(np.array([0.0, 0.0, z]))[2]
        v += q * e / m * dt
        z += v * dt
        t += dt
        zs.append(z)
        ts.append(t)
    zs = np.array(zs)
    ts = np.array(ts)
    flips = np.where(np.sign(zs[1:]) != np.sign(zs[:-1]))[0]
    crossings = ts[flips] - zs[flips] * (ts[flips + 1] - ts[flips]) / \
        (zs[flips + 1] - zs[flips])
    w_sim = 2 * np.pi / (2 * np.mean(np.diff(crossings)))
    assert w_formula == pytest.approx(w_sim, rel=0.02)
    # frozen from that oracle at the Fig.-3 style geometry
    assert w_formula == pytest.approx(1.0235e6, rel=1e-3)


def test_axial_frequency_wrong_polarity(two_wire_spec):
    with pytest.raises(NoAxialConfinementError):
        axial_frequency_two_wire(two_wire_spec, ELECTRON)


# --- cyclotron and modes ----------------------------------------------------

def test_cyclotron_period_calcium():
    assert cyclotron_period(CA40_ION, 1.0) == pytest.approx(2.6e-6, rel=0.02)
    assert cyclotron_period(CA40_ION, 10.0) == pytest.approx(260e-9, rel=0.02)


def test_cyclotron_mass_scaling():
    s1 = species_from_amu(20, 1)
    s2 = species_from_amu(40, 1)
    assert cyclotron_frequency(s1, 1.0) == pytest.approx(
        2.0 * cyclotron_frequency(s2, 1.0), rel=1e-12)


def test_cyclotron_invalid_field():
    with pytest.raises(ValueError):
        cyclotron_frequency(CA40_ION, 0.0)
    with pytest.raises(ValueError):
        cyclotron_period(CA40_ION, -1.0)


def test_mode_frequencies_limits():
    modes = mode_frequencies(0.0, 1e6)
    assert modes.omega_plus == pytest.approx(1e6, rel=1e-12)
    assert modes.omega_minus == pytest.approx(0.0, abs=1e-6)
    # stability boundary: degenerate modes at omega_c / 2
    wc = 2e6
    modes = mode_frequencies(wc / np.sqrt(2.0), wc)
    assert modes.omega_plus == pytest.approx(wc / 2, rel=1e-6)
    assert modes.omega_minus == pytest.approx(wc / 2, rel=1e-6)


def test_mode_frequencies_identities():
    rng = np.random.default_rng(6)
    for _ in range(100):
        wc = rng.uniform(1e5, 1e7)
        wz = rng.uniform(0.0, wc / np.sqrt(2.0) * 0.999)
        modes = mode_frequencies(wz, wc)
        assert modes.omega_plus + modes.omega_minus == pytest.approx(wc, rel=1e-12)
        assert modes.omega_plus * modes.omega_minus == pytest.approx(
            wz**2 / 2.0, rel=1e-9, abs=1e-3)


def test_mode_frequencies_instability():
    with pytest.raises(UnstableTrapError):
        mode_frequencies(1e6, 1e6)


# --- fields -----------------------------------------------------------------

def test_efield_independent_of_reference_radius():
    rng = np.random.default_rng(7)
    pts = random_clear_points(rng, 100)
    e1 = six_wire_field(SixWireSpec(reference_radius=0.1)).efield(pts)
    e2 = six_wire_field(SixWireSpec(reference_radius=0.35)).efield(pts)
    assert np.allclose(e1, e2, rtol=1e-12, atol=1e-9)


def test_efield_zero_at_center():
    e = six_wire_field(SixWireSpec()).efield(np.zeros(3))
    assert np.allclose(e, 0.0, atol=1e-8)


def test_efield_matches_finite_differences():
    # Richardson-extrapolated central differences of the potential
    spec = SixWireSpec()
    fld = six_wire_field(spec)
    rng = np.random.default_rng(8)
    pts = random_clear_points(rng, 100, min_clearance=2e-3)
    e = fld.efield(pts)

    def central(h):
        out = np.zeros_like(pts)
        for k in range(3):
            d = np.zeros(3)
            d[k] = h
            out[:, k] = (fld.potential(pts - d, check=False) -
                         fld.potential(pts + d, check=False)) / (2 * h)
        return out

    fd = (4.0 * central(5e-7) - central(1e-6)) / 3.0
    scale = np.linalg.norm(e, axis=1)
    assert np.all(np.linalg.norm(fd - e, axis=1) <= 1e-8 * scale + 1e-12)


@pytest.mark.parametrize("build", [
    lambda: six_wire_field(SixWireSpec()),
    lambda: two_wire_field(TwoWireSpec()),
])
def test_potentials_are_harmonic(build):
    fld = build()
    rng = np.random.default_rng(9)
    pts = random_clear_points(rng, 60, min_clearance=2e-3)

    def laplacian(h):
        lap = np.zeros(len(pts))
        scale = np.zeros(len(pts))
        phi0 = fld.potential(pts, check=False)
        for k in range(3):
            d = np.zeros(3)
            d[k] = h
            second = (fld.potential(pts + d, check=False) - 2 * phi0 +
                      fld.potential(pts - d, check=False)) / h**2
            lap += second
            scale = np.maximum(scale, np.abs(second))
        return lap, scale

    # Richardson-extrapolated second differences (h^4 truncation)
    lap_h, scale = laplacian(8e-6)
    lap_h2, _ = laplacian(4e-6)
    lap = (4.0 * lap_h2 - lap_h) / 3.0
    assert np.all(np.abs(lap) <= 1e-6 * scale + 1e-4)


def test_uniform_field():
    fld = UniformField([0.0, 100.0, 0.0])
    pts = np.array([[0.0, 0.0, 0.0], [0.0, 2e-3, 0.0]])
    assert np.allclose(fld.efield(pts), [[0, 100, 0], [0, 100, 0]])
    assert fld.potential(pts)[1] == pytest.approx(-0.2)


def test_quadrupole_field_gradient():
    fld = QuadrupoleField(1.0, -1e5)
    pts = np.random.default_rng(10).normal(scale=1e-3, size=(50, 3))
    h = 1e-8
    for k in range(3):
        d = np.zeros(3)
        d[k] = h
        fd = (fld.potential(pts - d) - fld.potential(pts + d)) / (2 * h)
        assert np.allclose(fd, fld.efield(pts)[:, k], rtol=1e-6, atol=1e-4)


def test_efield_helper_delegates():
    fld = UniformField([1.0, 0.0, 0.0])
    assert np.allclose(efield(fld, np.zeros(3)), [1.0, 0.0, 0.0])
