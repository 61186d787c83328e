"""Builders for the trap geometries and their voltage protocols.

Covers the analytic six-wire trap, the two-plate (single-endcap) trap,
the circular three-ring transport guide and the two-layer pad arrays,
plus the time-dependent protocols: trapping mode, ring-guide transport
and the single-cyclotron-loop "hop" between adjacent pad traps.

Pad-array fields are obtained by superposition: the Laplace problem is
solved once per electrode at 1 V (the basis) and any voltage assignment
is composed as a weighted sum, so planning and sweeps reuse the same
solves.
"""

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .core import Species, TrajectoryState, as_vec3
from .analytic_fields import SixWireSpec, cyclotron_period, six_wire_field
from .dynamics import (FieldStack, IntegratorConfig, hop_field_magnitude,
                       integrate, integrate_batch)
from .exceptions import GeometryConflictError, PlanInfeasibleError
from .grid_solver import (DEFAULT_SPACING, MARGIN_CELLS, Annulus, Disk,
                          Electrode, GridField, PotentialGrid, Rod, Torus,
                          rasterize, sample_efield, sample_potential,
                          solve_laplace)

log = logging.getLogger("penningsim")


# ---------------------------------------------------------------------------
# simple builders

def build_six_wire(spec=None):
    """Analytic field source for the six-wire trap; prototype geometry
    (d = 3 mm, 2 z0 = 4 mm, a = 1 mm) when no spec is given."""
    if spec is None:
        spec = SixWireSpec()
    return six_wire_field(spec)


def build_two_plate(z0, r_outer, r_inner, v_top, v_bottom,
                    thickness=0.4e-3):
    """Electrodes of the two-plate trap: a full disk whose top face lies
    in the plane z = 0 and a ring (inner radius r_inner) whose bottom
    face lies in the plane z = z0.  Oppositely charged plates trap above
    the ring; for positive ions use v_bottom > 0 > v_top."""
    if not (0 < r_inner < r_outer):
        raise ValueError("need 0 < r_inner < r_outer")
    if z0 <= 0:
        raise ValueError("z0 must be positive")
    return [
        Electrode(Disk((0.0, 0.0, -thickness / 2), r_outer, thickness),
                  v_bottom, "bottom_disk"),
        Electrode(Annulus((0.0, 0.0, z0 + thickness / 2), r_inner, r_outer,
                          thickness), v_top, "top_ring"),
    ]


def two_plate_domain(z0, r_outer, clearance=5e-3, height=11e-3):
    """Grounded-box corners that leave room for the trap above the ring."""
    w = r_outer + clearance
    return ((-w, -w, -4e-3), (w, w, z0 + height))


RING_LABELS = ("ring_inner", "ring_mid", "ring_outer")
GUIDE_WIRE_LABELS = ("wire_lo", "wire_mid", "wire_hi")


def build_ring_transport(ring_radii=(6e-3, 9e-3, 12e-3), wire_radius=0.5e-3,
                         z_gap=4e-3):
    """Circular ion guide: three concentric wire rings above a straight
    set of three wires.

    The rings lie in the plane z = +z_gap/2; the straight wires run
    along x at z = -z_gap/2 with the same pitch as the ring spacing, so
    the two sets cross at (+-r_mid, 0).  Each electrode is biasable on
    its own label.
    """
    r1, r2, r3 = ring_radii
    if not (0 < r1 < r2 < r3):
        raise ValueError("ring radii must be strictly increasing")
    s = (r3 - r1) / 2.0
    zr = +z_gap / 2.0
    zw = -z_gap / 2.0
    length = r3 + 2e-3
    els = [Electrode(Torus((0, 0, zr), r, wire_radius), 0.0, lab)
           for r, lab in zip((r1, r2, r3), RING_LABELS)]
    for off, lab in zip((-s, 0.0, +s), GUIDE_WIRE_LABELS):
        els.append(Electrode(Rod((-length, off, zw), (+length, off, zw),
                                 wire_radius), 0.0, lab))
    return els


def ring_guide_domain(ring_radii=(6e-3, 9e-3, 12e-3), z_gap=4e-3):
    w = ring_radii[2] + 4e-3
    return ((-w, -w, -z_gap / 2 - 4e-3), (w, w, z_gap / 2 + 8e-3))


def ring_trap_voltages(v_center=5.0, v_outer=-5.0):
    """Trapping mode: central ring and wire positive, outer ones negative
    (confines positive ions at the crossing regions)."""
    out = {"ring_mid": v_center, "wire_mid": v_center}
    for lab in ("ring_inner", "ring_outer", "wire_lo", "wire_hi"):
        out[lab] = v_outer
    return out


def ring_transport_voltages(lower=(-3.0, 0.0, 5.0), v_center=5.0,
                            v_outer=-5.0):
    """Transport mode: rings keep their trapping bias, the straight wires
    get a graded bias that removes the crossing minimum and pushes ions
    around the guide."""
    out = {"ring_mid": v_center, "ring_inner": v_outer, "ring_outer": v_outer}
    for lab, v in zip(GUIDE_WIRE_LABELS, lower):
        out[lab] = v
    return out


def with_voltages(electrodes, assignment):
    """Copy of an electrode list with voltages set from a label->V map.

    Labels that do not resolve in the geometry raise KeyError.
    """
    known = {el.label for el in electrodes}
    unknown = set(assignment) - known
    if unknown:
        raise KeyError("unknown electrode labels: %s" % ", ".join(sorted(unknown)))
    return [replace(el, voltage=float(assignment.get(el.label, el.voltage)))
            for el in electrodes]


# ---------------------------------------------------------------------------
# voltage schedules

@dataclass(frozen=True)
class VoltageSchedule:
    """Piecewise-constant electrode voltages: (t_start, label->V) segments
    with strictly increasing start times."""

    segments: tuple

    def __post_init__(self):
        ts = [t for t, _ in self.segments]
        if any(t1 <= t0 for t0, t1 in zip(ts, ts[1:])):
            raise ValueError("segment start times must be strictly increasing")

    def validate_labels(self, electrodes):
        known = {el.label for el in electrodes}
        for t, assignment in self.segments:
            unknown = set(assignment) - known
            if unknown:
                raise KeyError("schedule at t=%g uses unknown labels: %s"
                               % (t, ", ".join(sorted(unknown))))

    def assignment_at(self, t):
        current = {}
        for t0, assignment in self.segments:
            if t >= t0:
                current = assignment
        return current


# ---------------------------------------------------------------------------
# pad arrays

RING_STEPS = ((1, 0), (0, 1), (-1, 0), (0, -1), (1, -1), (-1, 1))


@dataclass(frozen=True)
class PadArraySpec:
    """Two-layer array of circular pads forming hexagonal micro-traps.

    A trap site is a central pad (the endcap, with a loading hole) plus
    a hexagonal ring of six pads, mirrored on both layers: 14 electrodes
    per isolated site.  ``gamma`` is the layer separation divided by the
    in-plane pad pitch.  ``trap_center_spacing`` defaults to sqrt(3) x
    pitch, the tiling in which adjacent traps share two ring pads per
    layer; ``PadArraySpec.compact`` gives the one-pitch tiling where a
    trap's ring pad is its neighbour's endcap.
    """

    pad_diameter: float = 4e-3
    pad_pitch: float = 5e-3
    gamma: float = 0.9
    endcap_hole_diameter: float = 1e-3
    pad_thickness: float = 0.4e-3
    trap_sites: tuple = ((0, 0),)
    trap_center_spacing: float = None
    ring_angle_deg: float = None

    def __post_init__(self):
        if self.gamma <= 0:
            raise ValueError("gamma must be positive")
        if not (0 < self.endcap_hole_diameter < self.pad_diameter):
            raise ValueError("endcap hole must be smaller than the pad")
        if self.pad_diameter > self.pad_pitch:
            raise ValueError("pads overlap: diameter exceeds pitch")
        if self.pad_thickness <= 0:
            raise ValueError("pad thickness must be positive")
        object.__setattr__(self, "trap_sites",
                           tuple((int(i), int(j)) for i, j in self.trap_sites))

    @classmethod
    def compact(cls, **kw):
        kw.setdefault("trap_center_spacing", kw.get("pad_pitch", 5e-3))
        kw.setdefault("ring_angle_deg", 0.0)
        return cls(**kw)

    @property
    def spacing(self):
        if self.trap_center_spacing is not None:
            return float(self.trap_center_spacing)
        return float(np.sqrt(3.0) * self.pad_pitch)

    @property
    def ring_angle(self):
        if self.ring_angle_deg is not None:
            return float(np.deg2rad(self.ring_angle_deg))
        # shared-pad tiling wants the pointy orientation; anything else
        # defaults to a flat hexagon
        if abs(self.spacing - np.sqrt(3.0) * self.pad_pitch) < 1e-9 * self.pad_pitch:
            return np.deg2rad(30.0)
        return 0.0

    @property
    def layer_gap(self):
        """Separation of the facing pad surfaces."""
        return self.gamma * self.pad_pitch

    def site_center(self, site):
        """Physical xy center of a lattice site (i adjacent along x)."""
        i, j = site
        s = self.spacing
        return np.array([i * s + j * s / 2.0, j * s * np.sqrt(3.0) / 2.0])

    def pad_positions(self):
        """All pad xy positions with endcap flags, deduplicating pads
        shared between sites.  Keys are positions rounded to nm."""
        pads = {}
        for site in self.trap_sites:
            c = self.site_center(site)
            key = (round(c[0], 9), round(c[1], 9))
            pads.setdefault(key, {"xy": c, "endcap": False})
            pads[key]["endcap"] = True
            for k in range(6):
                ang = self.ring_angle + k * np.pi / 3.0
                q = c + self.pad_pitch * np.array([np.cos(ang), np.sin(ang)])
                qkey = (round(q[0], 9), round(q[1], 9))
                pads.setdefault(qkey, {"xy": q, "endcap": False})
        return [pads[k] for k in sorted(pads)]


class PadArraySystem:
    """A pad-array geometry bound to a solver grid.

    Electrode labels are ``t<k>``/``b<k>`` (top/bottom layer) with k the
    index of the pad in x,y-sorted order; ``endcap_labels`` and
    ``ring_labels`` map a trap site onto its electrodes.  The per-
    electrode basis solutions and composed assignment fields are cached.
    """

    def __init__(self, spec, h=DEFAULT_SPACING, domain=None,
                 solver_tol=None, max_sweeps=None):
        self.spec = spec
        self.h = float(h)
        self.solver_tol = solver_tol
        self.max_sweeps = max_sweeps
        pads = spec.pad_positions()
        self._check_overlaps(pads)
        zc = spec.layer_gap / 2.0 + spec.pad_thickness / 2.0
        self.electrodes = []
        self._pad_index = {}
        for k, pad in enumerate(pads):
            x, y = pad["xy"]
            self._pad_index[(round(x, 9), round(y, 9))] = k
            for sgn, layer in ((+1, "t"), (-1, "b")):
                center = (x, y, sgn * zc)
                if pad["endcap"]:
                    shape = Annulus(center, spec.endcap_hole_diameter / 2.0,
                                    spec.pad_diameter / 2.0, spec.pad_thickness)
                else:
                    shape = Disk(center, spec.pad_diameter / 2.0,
                                 spec.pad_thickness)
                self.electrodes.append(
                    Electrode(shape, 0.0, "%s%d" % (layer, k)))
        self.domain = domain if domain is not None else self._auto_domain()
        self._base = None
        self._basis = None
        self._field_cache = {}

    def _check_overlaps(self, pads):
        xy = np.array([p["xy"] for p in pads])
        for i in range(len(xy)):
            d = np.hypot(*(xy[i + 1:] - xy[i]).T) if i + 1 < len(xy) else []
            if len(d) and d.min() < self.spec.pad_diameter * (1 - 1e-9):
                raise GeometryConflictError(
                    "pad overlap: sites place distinct pads %.3g m apart "
                    "(diameter %.3g m)" % (d.min(), self.spec.pad_diameter))

    def _auto_domain(self, clearance_xy=2e-3, clearance_z=3.3e-3):
        los, his = [], []
        for el in self.electrodes:
            lo, hi = el.shape.bounds()
            los.append(lo)
            his.append(hi)
        lo = np.min(los, axis=0)
        hi = np.max(his, axis=0)
        pad_xy = max(clearance_xy, (MARGIN_CELLS + 2) * self.h)
        pad_z = max(clearance_z, (MARGIN_CELLS + 2) * self.h)
        margin = np.array([pad_xy, pad_xy, pad_z])
        return (lo - margin, hi + margin)

    @property
    def labels(self):
        return [el.label for el in self.electrodes]

    def pad_label(self, xy, layer):
        k = self._pad_index.get((round(xy[0], 9), round(xy[1], 9)))
        if k is None:
            raise KeyError("no pad at %r" % (xy,))
        return "%s%d" % (layer, k)

    def endcap_labels(self, site):
        c = self.spec.site_center(site)
        return (self.pad_label(c, "t"), self.pad_label(c, "b"))

    def ring_labels(self, site):
        c = self.spec.site_center(site)
        out = []
        for k in range(6):
            ang = self.spec.ring_angle + k * np.pi / 3.0
            q = c + self.spec.pad_pitch * np.array([np.cos(ang), np.sin(ang)])
            out.extend((self.pad_label(q, "t"), self.pad_label(q, "b")))
        return out

    def site_center3(self, site):
        x, y = self.spec.site_center(site)
        return np.array([x, y, 0.0])

    def base_grid(self):
        if self._base is None:
            self._base = rasterize(self.electrodes, self.domain, self.h)
        return self._base

    def basis(self):
        """Unit-voltage solution per electrode (solved lazily, cached)."""
        if self._basis is None:
            base = self.base_grid()
            sols = []
            for k, el in enumerate(self.electrodes):
                g = base.copy()
                g.values[:] = 0.0
                g.values[g.mask == k] = 1.0
                g.voltages = [1.0 if i == k else 0.0
                              for i in range(len(g.voltages))]
                solved, sweeps = solve_laplace(
                    g, tol=self.solver_tol or 1e-6,
                    max_sweeps=self.max_sweeps or 50000)
                log.info("pad basis %d/%d (%s): %d sweeps",
                         k + 1, len(self.electrodes), el.label, sweeps)
                sols.append(solved.values)
            self._basis = sols
        return self._basis

    def compose(self, assignment):
        """Superpose basis solutions into the grid for an assignment."""
        self._check_labels(assignment)
        basis = self.basis()
        base = self.base_grid()
        values = np.zeros_like(base.values)
        voltages = [0.0] * len(base.voltages)
        for label, v in assignment.items():
            k = self.labels.index(label)
            if v:
                values += float(v) * basis[k]
            voltages[k] = float(v)
        return PotentialGrid(base.origin, base.h, values, base.mask,
                             base.labels, voltages, solids=base.solids,
                             meta={"assignment": dict(assignment)})

    def solve_assignment(self, assignment):
        """Direct single solve of one assignment (no basis required)."""
        self._check_labels(assignment)
        els = with_voltages(self.electrodes, assignment)
        grid = rasterize(els, self.domain, self.h)
        solved, _ = solve_laplace(grid, tol=self.solver_tol,
                                  max_sweeps=self.max_sweeps or 50000)
        return solved

    def field_for(self, assignment, prefer_basis=None):
        """GridField for an assignment; cached per assignment.

        Uses basis superposition when the basis has been built (or when
        ``prefer_basis`` forces it), otherwise one direct solve.
        """
        key = tuple(sorted(assignment.items()))
        if key not in self._field_cache:
            use_basis = prefer_basis if prefer_basis is not None \
                else self._basis is not None
            grid = self.compose(assignment) if use_basis \
                else self.solve_assignment(assignment)
            self._field_cache[key] = GridField(grid)
        return self._field_cache[key]

    def _check_labels(self, assignment):
        unknown = set(assignment) - set(self.labels)
        if unknown:
            raise KeyError("unknown electrode labels: %s"
                           % ", ".join(sorted(unknown)))


def build_pad_array(spec, h=DEFAULT_SPACING, domain=None):
    """Electrode list for a pad-array spec (14 per isolated site; shared
    pads deduplicated)."""
    return PadArraySystem(spec, h=h, domain=domain).electrodes


def trapping_assignment(system, site, v_endcap=10.0, v_ring=-10.0):
    """Trapping mode for one site: both endcaps at v_endcap, all twelve
    ring pads at v_ring.

    Confinement of positive ions needs v_endcap > 0 > v_ring; other sign
    combinations are allowed for exploration but carry a warning.
    """
    if np.sign(v_endcap) != -np.sign(v_ring) or v_endcap == 0:
        import warnings
        warnings.warn("assignment endcap=%g V ring=%g V is not a confining "
                      "polarity" % (v_endcap, v_ring), stacklevel=2)
    out = {}
    for lab in system.endcap_labels(site):
        out[lab] = float(v_endcap)
    for lab in system.ring_labels(site):
        out[lab] = float(v_ring)
    return out


# ---------------------------------------------------------------------------
# the hop protocol

@dataclass(frozen=True)
class HopPlan:
    """Voltage plan moving an ion between adjacent sites in one cyclotron
    loop; ``duration`` is exactly 2 pi m / (q B) for the planned species."""

    from_site: tuple
    to_site: tuple
    duration: float
    hop_assignment: dict
    expected_landing: np.ndarray
    target_e_field: float
    kappa: float
    schedule: VoltageSchedule
    meta: dict = field(default_factory=dict)


def _hop_frame(system, from_site, to_site):
    c0 = system.site_center3(from_site)
    c1 = system.site_center3(to_site)
    span = c1 - c0
    dist = float(np.linalg.norm(span))
    ex = span / dist
    ey = np.array([-ex[1], ex[0], 0.0])  # z x ex
    return c0, c1, dist, ex, ey


def plan_hop(system, from_site, to_site, species, b_mag, kappa=2e5,
             curvature_weight=4.0, ridge=1e-9, calibrate=True,
             max_kappa_retries=3):
    """Fit pad voltages that carry the species across one cycloid loop.

    Least squares over all electrode voltages against a uniform drive
    field sampled on a tube around the nominal loop, with weighted rows
    demanding positive axial curvature (kappa) along the straight
    channel so the ion stays z-confined throughout.  The fitted pattern
    is then scaled so the simulated drift of an ion starting at rest
    lands it on the target center after exactly one cyclotron period.

    Raises PlanInfeasibleError when no kappa escalation yields positive
    axial curvature along the whole channel.
    """
    di = (to_site[0] - from_site[0], to_site[1] - from_site[1])
    if di not in ((1, 0), (-1, 0)):
        raise ValueError("hop sites must be adjacent along the lattice "
                         "x-axis, got step %r" % (di,))
    c0, c1, dist, ex, ey = _hop_frame(system, from_site, to_site)
    e_hop = hop_field_magnitude(dist, b_mag, species)
    period = cyclotron_period(species, b_mag)
    omega = abs(species.charge) * b_mag / species.mass
    v_d = e_hop / b_mag

    # nominal loop in the local frame (u along the hop, w = drift normal)
    tj = np.linspace(0.0, period, 41)
    u_path = -(v_d / omega) * np.sin(omega * tj) + v_d * tj
    w_path = np.sign(species.charge) * (v_d / omega) * (1.0 - np.cos(omega * tj))
    useg = np.linspace(0.0, dist, 41)

    def to_global(u, w, dz):
        return c0 + np.outer(u, ex) + np.outer(w, ey) \
            + np.outer(np.full_like(u, dz), [0.0, 0.0, 1.0])

    pts = []
    for u, w in ((u_path, w_path), (useg, np.zeros_like(useg))):
        for dw in (-1e-3, 0.0, 1e-3):
            for dz in (-0.6e-3, 0.0, 0.6e-3):
                pts.append(to_global(u, w + dw, dz))
    pts = np.concatenate(pts)
    e_target = np.zeros_like(pts)
    e_target += e_hop * ey

    basis = system.basis()
    base = system.base_grid()
    n_el = len(system.electrodes)

    def basis_grid(k):
        return PotentialGrid(base.origin, base.h, basis[k], base.mask,
                             base.labels, [0.0] * len(base.voltages))

    a_field = np.zeros((pts.shape[0] * 3, n_el))
    for k in range(n_el):
        a_field[:, k] = sample_efield(basis_grid(k), pts).reshape(-1)
    b_field_rows = e_target.reshape(-1)

    seg_pts = to_global(np.linspace(0.0, dist, 23), np.zeros(23), 0.0)
    dzz = 2 * system.h
    a_curv = np.zeros((len(seg_pts), n_el))
    for k in range(n_el):
        g = basis_grid(k)
        up = sample_potential(g, seg_pts + [0, 0, dzz])
        dn = sample_potential(g, seg_pts - [0, 0, dzz])
        mid = sample_potential(g, seg_pts)
        a_curv[:, k] = (up - 2 * mid + dn) / dzz**2

    kappa_used = float(kappa)
    weights = None
    for attempt in range(max_kappa_retries + 1):
        wc = curvature_weight * e_hop / kappa_used
        a = np.vstack([a_field, wc * a_curv])
        rhs = np.concatenate([b_field_rows,
                              wc * np.full(len(seg_pts), kappa_used)])
        ata = a.T @ a
        lam = ridge * ata.diagonal().max()
        weights = np.linalg.solve(ata + lam * np.eye(n_el), a.T @ rhs)
        curv = a_curv @ weights
        if curv.min() > 0:
            break
        kappa_used *= 2.0
    else:
        worst = seg_pts[int(np.argmin(curv))]
        raise PlanInfeasibleError(
            "axial curvature %.3g V/m^2 at %s remains non-confining after "
            "%d kappa escalations" % (curv.min(), worst, max_kappa_retries),
            point=worst)

    assignment = {lab: float(w) for lab, w in zip(system.labels, weights)}
    meta = {"kappa_used": kappa_used, "fit_rms_e": float(np.sqrt(np.mean(
        (a_field @ weights - b_field_rows) ** 2))), "calibration_scale": 1.0}

    plan = HopPlan(
        from_site=tuple(from_site), to_site=tuple(to_site), duration=period,
        hop_assignment=assignment, expected_landing=c1,
        target_e_field=e_hop, kappa=kappa_used,
        schedule=VoltageSchedule(((0.0, assignment),
                                  (period, trapping_assignment(system, to_site)))),
        meta=meta)

    if calibrate:
        plan = _calibrate_hop(system, plan, species, b_mag)
    return plan


def _hop_landing_error(system, plan, species, b_mag, scale=1.0):
    assignment = {k: v * scale for k, v in plan.hop_assignment.items()}
    # composed directly (not via the assignment cache): calibration probes
    # many scales and the grids are large
    fld = GridField(system.compose(assignment))
    stack = FieldStack.static(fld, [0.0, 0.0, b_mag])
    cfg = IntegratorConfig(dt=plan.duration / 800.0, t_end=plan.duration,
                           record_stride=8)
    start = TrajectoryState(0.0, system.site_center3(plan.from_site),
                            np.zeros(3))
    traj = integrate(start, stack, cfg, species)
    fin = traj.r[-1]
    err = fin - plan.expected_landing
    return float(np.hypot(err[0], err[1])), fin


def _calibrate_hop(system, plan, species, b_mag, drift_rounds=3,
                   golden_iters=10):
    """Scale the fitted pattern so the simulated loop lands on target.

    First matches the drift length, then a golden-section refinement of
    the scale minimising the in-plane landing error.  Scaling preserves
    the sign of the axial curvature, so feasibility is unaffected.
    """
    c0, c1, dist, ex, _ = _hop_frame(system, plan.from_site, plan.to_site)
    scale = 1.0
    for _ in range(drift_rounds):
        _, fin = _hop_landing_error(system, plan, species, b_mag, scale)
        drift = float((fin - c0) @ ex)
        corr = dist / drift
        if abs(corr - 1.0) < 5e-4:
            break
        scale *= corr

    lo, hi = 0.99 * scale, 1.01 * scale
    gr = (np.sqrt(5.0) - 1.0) / 2.0
    c = hi - gr * (hi - lo)
    d = lo + gr * (hi - lo)
    fc = _hop_landing_error(system, plan, species, b_mag, c)[0]
    fd = _hop_landing_error(system, plan, species, b_mag, d)[0]
    for _ in range(golden_iters):
        if fc < fd:
            hi, d, fd = d, c, fc
            c = hi - gr * (hi - lo)
            fc = _hop_landing_error(system, plan, species, b_mag, c)[0]
        else:
            lo, c, fc = c, d, fd
            d = lo + gr * (hi - lo)
            fd = _hop_landing_error(system, plan, species, b_mag, d)[0]
    scale = (lo + hi) / 2.0

    assignment = {k: v * scale for k, v in plan.hop_assignment.items()}
    meta = dict(plan.meta, calibration_scale=scale)
    return replace(plan, hop_assignment=assignment,
                   schedule=VoltageSchedule(((0.0, assignment),
                                             plan.schedule.segments[1])),
                   meta=meta)


@dataclass
class HopReport:
    """Outcome of one executed hop."""

    final_state: TrajectoryState
    dxy: float            # in-plane distance from the target center, m
    z_final: float        # |z| at the end of the hop, m
    v_final: float        # speed at the end of the hop, m/s
    gc_dxy: float         # in-plane guiding-center error, m
    trajectory: object
    failed: bool = False


def execute_hop(system, plan, species, b_mag, state0=None, dt=None,
                record_stride=4):
    """Run one hop: the hop assignment for exactly plan.duration, after
    which the schedule restores trapping at the target site.

    Returns a HopReport with the landing error; an electrode strike or
    domain exit marks the report failed instead of raising.
    """
    hop_field = system.field_for(plan.hop_assignment, prefer_basis=True)
    trap_after = system.field_for(plan.schedule.segments[1][1])
    stack = FieldStack([(hop_field, 0.0, plan.duration),
                        (trap_after, plan.duration, None)],
                       [0.0, 0.0, b_mag])
    if state0 is None:
        state0 = TrajectoryState(0.0, system.site_center3(plan.from_site),
                                 np.zeros(3))
    cfg = IntegratorConfig(dt=dt or plan.duration / 800.0,
                           t_end=plan.duration, record_stride=record_stride)
    traj = integrate(state0, stack, cfg, species)
    return _hop_report(traj, plan, species, b_mag)


def execute_hop_batch(system, plan, species, b_mag, velocities, dt=None,
                      record_stride=4):
    """Hop a batch of ions launched from the source center with the given
    initial velocities (n, 3); returns the BatchResult of the sweep."""
    hop_field = system.field_for(plan.hop_assignment, prefer_basis=True)
    stack = FieldStack([(hop_field, 0.0, plan.duration)], [0.0, 0.0, b_mag])
    v = np.asarray(velocities, dtype=float).reshape(-1, 3)
    r = np.tile(system.site_center3(plan.from_site), (v.shape[0], 1))
    cfg = IntegratorConfig(dt=dt or plan.duration / 800.0,
                           t_end=plan.duration, record_stride=record_stride)
    return integrate_batch(r, v, stack, cfg, species)


def _hop_report(traj, plan, species, b_mag):
    fin = traj.final_state
    err = fin.r - plan.expected_landing
    omega = species.charge * b_mag / species.mass
    gc = fin.r + np.cross(fin.v, [0.0, 0.0, b_mag]) / (omega * b_mag)
    gc_err = gc - plan.expected_landing
    return HopReport(
        final_state=fin,
        dxy=float(np.hypot(err[0], err[1])),
        z_final=float(abs(fin.r[2])),
        v_final=float(np.linalg.norm(fin.v)),
        gc_dxy=float(np.hypot(gc_err[0], gc_err[1])),
        trajectory=traj,
        failed=traj.termination != traj.COMPLETED)


# ---------------------------------------------------------------------------
# trap specification files (flat "key = value" text)

TRAP_KINDS = ("six_wire", "two_wire", "two_plate", "ring_guide", "pad_array")

_COMMON_KEYS = {"trap.kind", "b_field_T", "species.amu", "species.charge",
                "grid.h_mm", "sim.start_mm"}
_KIND_KEYS = {
    "six_wire": {"wire.d_mm", "wire.z0_mm", "wire.a_mm", "wire.delta_v",
                 "wire.r_mm"},
    "two_wire": {"wire.a_mm", "wire.z0_mm", "wire.v_plus", "wire.r_mm"},
    "two_plate": {"plate.z0_mm", "plate.r_outer_mm", "plate.r_inner_mm"},
    "ring_guide": {"ring.radii_mm", "ring.wire_radius_mm", "ring.z_gap_mm"},
    "pad_array": {"pad.diameter_mm", "pad.pitch_mm", "pad.gamma",
                  "hole.diameter_mm", "pad.thickness_mm",
                  "pad.center_spacing_mm", "pad.sites"},
}


@dataclass
class TrapSetup:
    """Parsed contents of a trap specification file."""

    kind: str
    species: Species
    b_field: float
    params: dict
    voltages: dict
    schedule: VoltageSchedule = None
    h: float = None
    start: np.ndarray = None


def load_trap_spec(path):
    """Parse a flat key = value trap specification file.

    Unknown keys are rejected with a message listing all of them; '#'
    starts a comment.
    """
    from .core import species_from_amu
    from .exceptions import SpecFileError

    raw = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise SpecFileError("%s:%d: expected 'key = value', got %r"
                                    % (path, lineno, line))
            key, value = (part.strip() for part in line.split("=", 1))
            if key in raw:
                raise SpecFileError("%s:%d: duplicate key %r" % (path, lineno, key))
            raw[key] = value

    kind = raw.get("trap.kind")
    if kind not in TRAP_KINDS:
        raise SpecFileError("%s: trap.kind must be one of %s, got %r"
                            % (path, ", ".join(TRAP_KINDS), kind))

    def is_known(key):
        if key in _COMMON_KEYS or key in _KIND_KEYS[kind]:
            return True
        if key.startswith("voltages."):
            return True
        if key.startswith("schedule."):
            parts = key.split(".")
            return len(parts) == 3 and parts[1].isdigit()
        return False

    unknown = sorted(k for k in raw if not is_known(k))
    if unknown:
        raise SpecFileError("%s: unknown keys: %s" % (path, ", ".join(unknown)))

    def fget(key, default=None):
        if key in raw:
            return float(raw[key])
        return default

    amu = fget("species.amu", 40.0)
    charge = int(fget("species.charge", 1.0))
    species = species_from_amu(amu, charge)
    b_field = fget("b_field_T", 1.0)
    h = fget("grid.h_mm")
    start = None
    if "sim.start_mm" in raw:
        start = np.array([float(v) for v in raw["sim.start_mm"].split(",")]) * 1e-3
        if start.shape != (3,):
            raise SpecFileError("sim.start_mm needs three comma-separated values")

    params = {}
    if kind == "six_wire":
        params["spec"] = SixWireSpec(
            d=fget("wire.d_mm", 3.0) * 1e-3,
            z0=fget("wire.z0_mm", 2.0) * 1e-3,
            a=fget("wire.a_mm", 1.0) * 1e-3,
            reference_radius=fget("wire.r_mm", 100.0) * 1e-3,
            delta_v=fget("wire.delta_v", 1.3))
    elif kind == "two_wire":
        from .analytic_fields import TwoWireSpec
        params["spec"] = TwoWireSpec(
            a=fget("wire.a_mm", 0.5) * 1e-3,
            z0=fget("wire.z0_mm", 2.0) * 1e-3,
            reference_radius=fget("wire.r_mm", 100.0) * 1e-3,
            v_plus=fget("wire.v_plus", 4.0))
    elif kind == "two_plate":
        params.update(z0=fget("plate.z0_mm", 5.0) * 1e-3,
                      r_outer=fget("plate.r_outer_mm", 15.0) * 1e-3,
                      r_inner=fget("plate.r_inner_mm", 5.0) * 1e-3)
    elif kind == "ring_guide":
        radii = raw.get("ring.radii_mm", "6,9,12")
        params.update(
            ring_radii=tuple(float(v) * 1e-3 for v in radii.split(",")),
            wire_radius=fget("ring.wire_radius_mm", 0.5) * 1e-3,
            z_gap=fget("ring.z_gap_mm", 4.0) * 1e-3)
    elif kind == "pad_array":
        sites = raw.get("pad.sites", "0,0")
        trap_sites = tuple(tuple(int(v) for v in s.split(","))
                           for s in sites.split(";"))
        spacing = fget("pad.center_spacing_mm")
        params["spec"] = PadArraySpec(
            pad_diameter=fget("pad.diameter_mm", 4.0) * 1e-3,
            pad_pitch=fget("pad.pitch_mm", 5.0) * 1e-3,
            gamma=fget("pad.gamma", 0.9),
            endcap_hole_diameter=fget("hole.diameter_mm", 1.0) * 1e-3,
            pad_thickness=fget("pad.thickness_mm", 0.4) * 1e-3,
            trap_sites=trap_sites,
            trap_center_spacing=None if spacing is None else spacing * 1e-3)

    voltages = {key.split(".", 1)[1]: float(val)
                for key, val in raw.items() if key.startswith("voltages.")}

    schedule = None
    seg_index = sorted({int(k.split(".")[1]) for k in raw
                        if k.startswith("schedule.")})
    if seg_index:
        segments = []
        for n in seg_index:
            prefix = "schedule.%d." % n
            t_key = prefix + "t_us"
            if t_key not in raw:
                raise SpecFileError("schedule segment %d lacks %s" % (n, t_key))
            assignment = {}
            for k, v in raw.items():
                if k.startswith(prefix) and k != t_key:
                    label = k[len(prefix):]
                    if not label.endswith("_V"):
                        raise SpecFileError(
                            "schedule voltage key %r must end in _V" % k)
                    assignment[label[:-2]] = float(v)
            segments.append((float(raw[t_key]) * 1e-6, assignment))
        schedule = VoltageSchedule(tuple(segments))

    return TrapSetup(kind=kind, species=species, b_field=b_field,
                     params=params, voltages=voltages, schedule=schedule,
                     h=None if h is None else h * 1e-3, start=start)
