"""Closed-form wire-trap potentials and ideal Penning-trap frequencies.

A straight-wire trap is a superposition of 2-D logarithmic line
potentials: each wire parallel to x or y contributes
``c * ln(R^2 / rho^2)`` with ``rho`` the distance to its axis and ``R``
the (configurable) radius at which the potential is referenced to zero.
The six-wire and crossed-two-wire traps below are specific wire sets
with their coefficients fixed by the drive voltages.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import Species, as_vec3
from .exceptions import NoAxialConfinementError, SingularPointError, UnstableTrapError

DEFAULT_REFERENCE_RADIUS = 0.1  # m; ground reference distance R


@dataclass(frozen=True)
class LogWire:
    """One infinite straight wire parallel to the x or y axis.

    ``transverse_offset`` is the wire position along the in-plane axis it
    does not run along (y for a wire parallel to x, x for one parallel
    to y); ``z_offset`` is its height.  ``coefficient`` is the prefactor
    of ``ln(R^2 / rho^2)`` in volts.
    """

    orientation: str  # "x" or "y": the axis the wire runs along
    transverse_offset: float
    z_offset: float
    coefficient: float

    def __post_init__(self):
        if self.orientation not in ("x", "y"):
            raise ValueError("orientation must be 'x' or 'y'")

    def transverse_displacement(self, r):
        """In-plane displacement (du, dz) from the wire axis, shape (..., 2)."""
        r = np.asarray(r, dtype=float)
        u = r[..., 1] if self.orientation == "x" else r[..., 0]
        return u - self.transverse_offset, r[..., 2] - self.z_offset


class LogWireSet:
    """A superposition of logarithmic wire potentials with a common R."""

    def __init__(self, wires, reference_radius=DEFAULT_REFERENCE_RADIUS,
                 guard_radius=0.0):
        if reference_radius <= 0:
            raise ValueError("reference radius must be positive")
        offsets = [max(abs(w.transverse_offset), abs(w.z_offset)) for w in wires]
        largest = max(offsets) if offsets else 0.0
        # the logarithmic superposition assumes R well outside the wire set
        if largest > 0 and reference_radius <= 10.0 * largest:
            raise ValueError(
                "reference radius %.3g m must exceed 10x the largest wire "
                "offset %.3g m" % (reference_radius, largest))
        self.wires = tuple(wires)
        self.reference_radius = float(reference_radius)
        self.guard_radius = float(guard_radius)
        # flat arrays for vectorised evaluation over all wires at once
        self._coord = np.array([1 if w.orientation == "x" else 0
                                for w in self.wires])
        self._t_off = np.array([w.transverse_offset for w in self.wires])
        self._z_off = np.array([w.z_offset for w in self.wires])
        self._coef = np.array([w.coefficient for w in self.wires])
        self._to_x = (self._coord == 0).astype(float)  # wires parallel to y push x
        self._to_y = (self._coord == 1).astype(float)

    def _displacements(self, r):
        """(du, dz) to every wire axis, shapes (..., n_wires)."""
        u = r[..., self._coord] - self._t_off
        dz = r[..., 2:3] - self._z_off
        return u, dz

    def _check_clear(self, r):
        guard = max(self.guard_radius, 1e-15)
        du, dz = self._displacements(r)
        if np.any(du * du + dz * dz <= guard * guard):
            raise SingularPointError(
                "point within %.3g m of a wire axis" % guard)

    def potential(self, r, check=True):
        """Potential in volts at r, shape (..., 3) -> (...)."""
        r = np.asarray(r, dtype=float)
        if check:
            self._check_clear(r)
        du, dz = self._displacements(r)
        return np.log(self.reference_radius**2 / (du * du + dz * dz)) @ self._coef

    def efield(self, r, check=True):
        """E = -grad(potential) in V/m, shape (..., 3) -> (..., 3).

        Independent of the reference radius: R only shifts the potential
        by an additive constant.
        """
        r = np.asarray(r, dtype=float)
        if check:
            self._check_clear(r)
        du, dz = self._displacements(r)
        scale = (2.0 * self._coef) / (du * du + dz * dz)
        su = scale * du
        e = np.empty(r.shape)
        e[..., 0] = su @ self._to_x
        e[..., 1] = su @ self._to_y
        e[..., 2] = (scale * dz).sum(axis=-1)
        return e

    def strikes(self, r):
        """Boolean mask: within the guard radius of any wire axis."""
        r = np.asarray(r, dtype=float)
        du, dz = self._displacements(r)
        return np.any(du * du + dz * dz <= self.guard_radius**2, axis=-1)

    def in_domain(self, r):
        r = np.asarray(r, dtype=float)
        return np.ones(r.shape[:-1], dtype=bool)


@dataclass(frozen=True)
class SixWireSpec:
    """Two perpendicular sets of three parallel wires.

    d is the in-set wire pitch, 2*z0 the separation of the two sets, a
    the wire diameter (taken literally as a diameter) and delta_v the
    voltage of the central wires relative to the outer ones.  For a
    positive species the central minimum confines when delta_v > 0.
    """

    d: float = 3e-3
    z0: float = 2e-3
    a: float = 1e-3
    reference_radius: float = DEFAULT_REFERENCE_RADIUS
    delta_v: float = 1.3

    def __post_init__(self):
        if self.d <= 0 or self.z0 <= 0 or self.a <= 0:
            raise ValueError("six-wire dimensions must be positive")
        # thin-wire model: wires must at least be clearly separated
        if self.a >= self.d / 2:
            raise ValueError("wire diameter a=%.3g too large for pitch d=%.3g"
                             % (self.a, self.d))

    @property
    def log_norm(self):
        """ln(d^2 / (2 a^2)), the drive normalisation."""
        return float(np.log(self.d**2 / (2.0 * self.a**2)))


@dataclass(frozen=True)
class TwoWireSpec:
    """Two crossed wires at +-z0, both at v_plus volts relative to R."""

    a: float = 0.5e-3
    z0: float = 2e-3
    reference_radius: float = DEFAULT_REFERENCE_RADIUS
    v_plus: float = 4.0

    def __post_init__(self):
        if self.a <= 0 or self.z0 <= 0:
            raise ValueError("two-wire dimensions must be positive")
        if self.reference_radius**2 <= self.a * self.z0:
            raise ValueError("need R^2 > a*z0 for a positive normalisation")

    @property
    def log_norm(self):
        """ln(R^2 / (a z0)), the drive normalisation."""
        return float(np.log(self.reference_radius**2 / (self.a * self.z0)))


def six_wire_field(spec):
    """Wire set realising the six-wire trap potential.

    The lower set (wires parallel to y at z = -z0, x in {-d, 0, +d}) and
    the upper set (parallel to x at z = +z0, y in {-d, 0, +d}) carry
    per-wire coefficients -+ delta_v / (2 ln(d^2/2a^2)): outer wires
    negative, central wires positive.
    """
    k = spec.delta_v / (2.0 * spec.log_norm)
    wires = []
    for off, c in ((-spec.d, -k), (0.0, +k), (spec.d, -k)):
        wires.append(LogWire("y", off, -spec.z0, c))
    for off, c in ((-spec.d, -k), (0.0, +k), (spec.d, -k)):
        wires.append(LogWire("x", off, +spec.z0, c))
    return LogWireSet(wires, spec.reference_radius, guard_radius=spec.a / 2)


def two_wire_field(spec):
    """Wire set for two crossed wires: one parallel to x at z=+z0, one
    parallel to y at z=-z0, both with coefficient v_plus / ln(R^2/az0)."""
    c = spec.v_plus / spec.log_norm
    wires = [LogWire("x", 0.0, +spec.z0, c),
             LogWire("y", 0.0, -spec.z0, c)]
    return LogWireSet(wires, spec.reference_radius, guard_radius=spec.a / 2)


def six_wire_potential(spec, r):
    """Potential of the six-wire trap at r (V)."""
    return six_wire_field(spec).potential(r)


def two_wire_potential(spec, r):
    """Potential of the crossed two-wire trap at r (V)."""
    return two_wire_field(spec).potential(r)


@dataclass(frozen=True)
class QuadraticExpansion:
    """Second-order expansion phi0 + c_quad * (x^2 + y^2 - 2 z^2)."""

    phi0: float
    curvature_coefficient: float  # V/m^2


def two_wire_quadratic(spec):
    """Quadratic expansion of the two-wire potential about the origin.

    Returns the constant term and the coefficient of (x^2 + y^2 - 2z^2).
    Both follow from the exact Taylor expansion of the crossed-wire
    potential, so second-order finite differences of
    :func:`two_wire_potential` at the origin reproduce them.
    """
    norm = spec.log_norm
    phi0 = 2.0 * spec.v_plus * np.log(spec.reference_radius**2 / spec.z0**2) / norm
    c_quad = -spec.v_plus / (spec.z0**2 * norm)
    return QuadraticExpansion(phi0=float(phi0), curvature_coefficient=float(c_quad))


def axial_frequency_two_wire(spec, species):
    """Small-amplitude axial angular frequency in the two-wire trap.

    omega_z = sqrt(4 q V+ / (m z0^2 ln(R^2/az0))), i.e. the frequency of
    the quadratic well actually present in the crossed-wire potential.
    Requires the confining polarity q*V+ > 0.
    """
    if species.charge * spec.v_plus <= 0:
        raise NoAxialConfinementError(
            "q*V+ = %.3g <= 0 does not confine axially"
            % (species.charge * spec.v_plus))
    c_quad = two_wire_quadratic(spec).curvature_coefficient
    # axial well: phi(z) = phi0 - 2 c_quad z^2  ->  m omega_z^2 = -4 q c_quad
    return float(np.sqrt(-4.0 * species.charge * c_quad / species.mass))


def cyclotron_frequency(species, b_field):
    """Angular cyclotron frequency q B / m (signed with the charge)."""
    if b_field <= 0:
        raise ValueError("magnetic field must be positive, got %r" % (b_field,))
    return species.charge * b_field / species.mass


def cyclotron_period(species, b_field):
    """Cyclotron period 2 pi m / (|q| B)."""
    return 2.0 * np.pi / abs(cyclotron_frequency(species, b_field))


@dataclass(frozen=True)
class ModeFrequencies:
    """The three normal-mode angular frequencies of an ideal Penning trap.

    Satisfies omega_plus + omega_minus = omega_c and
    omega_plus * omega_minus = omega_z^2 / 2.
    """

    omega_z: float
    omega_c: float
    omega_plus: float
    omega_minus: float


def mode_frequencies(omega_z, omega_c):
    """Radial mode frequencies omega_+- = omega_c/2 +- sqrt(omega_c^2/4 - omega_z^2/2).

    Raises UnstableTrapError when omega_z^2 > omega_c^2 / 2 (no radial
    confinement).  The boundary case is allowed and gives the degenerate
    omega_+ = omega_- = omega_c / 2.
    """
    omega_z = float(omega_z)
    omega_c = float(omega_c)
    if omega_z < 0 or omega_c <= 0:
        raise ValueError("need omega_z >= 0 and omega_c > 0")
    disc = omega_c**2 / 4.0 - omega_z**2 / 2.0
    if disc < 0 and not np.isclose(disc, 0.0, atol=1e-12 * omega_c**2):
        raise UnstableTrapError(omega_z, omega_c)
    root = np.sqrt(max(disc, 0.0))
    return ModeFrequencies(omega_z=omega_z, omega_c=omega_c,
                           omega_plus=omega_c / 2.0 + root,
                           omega_minus=omega_c / 2.0 - root)


def efield(source, r):
    """E-field of any analytic source at r; exact negative gradient."""
    return source.efield(np.asarray(r, dtype=float))


class UniformField:
    """A spatially uniform electric field; potential is -E.r."""

    def __init__(self, e_vector):
        self.e_vector = as_vec3(e_vector)

    def potential(self, r, check=True):
        r = np.asarray(r, dtype=float)
        return -(r @ self.e_vector)

    def efield(self, r, check=True):
        r = np.asarray(r, dtype=float)
        return np.broadcast_to(self.e_vector, r.shape).copy()

    def strikes(self, r):
        r = np.asarray(r, dtype=float)
        return np.zeros(r.shape[:-1], dtype=bool)

    def in_domain(self, r):
        r = np.asarray(r, dtype=float)
        return np.ones(r.shape[:-1], dtype=bool)


class QuadrupoleField:
    """Ideal quadrupole phi = c0 + c_quad * (x^2 + y^2 - 2 z^2) about a center."""

    def __init__(self, c0, c_quad, center=(0.0, 0.0, 0.0)):
        self.c0 = float(c0)
        self.c_quad = float(c_quad)
        self.center = as_vec3(center)

    def potential(self, r, check=True):
        d = np.asarray(r, dtype=float) - self.center
        return self.c0 + self.c_quad * (d[..., 0]**2 + d[..., 1]**2
                                        - 2.0 * d[..., 2]**2)

    def efield(self, r, check=True):
        d = np.asarray(r, dtype=float) - self.center
        e = np.empty_like(d)
        e[..., 0] = -2.0 * self.c_quad * d[..., 0]
        e[..., 1] = -2.0 * self.c_quad * d[..., 1]
        e[..., 2] = +4.0 * self.c_quad * d[..., 2]
        return e

    def strikes(self, r):
        r = np.asarray(r, dtype=float)
        return np.zeros(r.shape[:-1], dtype=bool)

    def in_domain(self, r):
        r = np.asarray(r, dtype=float)
        return np.ones(r.shape[:-1], dtype=bool)
