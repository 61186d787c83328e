"""Time integration of ion motion under q(E + v x B).

The pusher is the Boris scheme (half electric kick, magnetic rotation,
half kick): it preserves gyration speed exactly in a pure magnetic field
and keeps energy errors bounded over the multi-period trajectories the
trap protocols need.  Electrode voltages may switch during a run through
a FieldStack of time-windowed sources; the magnetic field is uniform and
constant.
"""

from dataclasses import dataclass, field

import numpy as np

from .core import Species, Trajectory, TrajectoryState, as_vec3
from .analytic_fields import cyclotron_period


class FieldStack:
    """Superposition of field sources, each active on a time window.

    Windows are half-open ``[t_on, t_off)``; ``None`` means unbounded on
    that side.  The total E at (r, t) is the sum over active sources.
    The magnetic field is a single constant vector.
    """

    def __init__(self, sources, b_field):
        # sources: iterable of (source, t_on, t_off)
        self.entries = []
        for entry in sources:
            try:
                src, t_on, t_off = entry
            except (TypeError, ValueError):
                src, t_on, t_off = entry, None, None
            self.entries.append((src, t_on, t_off))
        self.b_field = as_vec3(b_field)

    @classmethod
    def static(cls, source, b_field):
        return cls([(source, None, None)], b_field)

    def active_sources(self, t):
        out = []
        for src, t_on, t_off in self.entries:
            if (t_on is None or t >= t_on) and (t_off is None or t < t_off):
                out.append(src)
        return out

    def switch_times(self):
        times = set()
        for _, t_on, t_off in self.entries:
            if t_on is not None:
                times.add(float(t_on))
            if t_off is not None:
                times.add(float(t_off))
        return sorted(times)

    def efield(self, r, t, check=False):
        r = np.asarray(r, dtype=float)
        e = np.zeros(r.shape)
        for src in self.active_sources(t):
            e += src.efield(r, check=check)
        return e

    def potential(self, r, t, check=False):
        r = np.asarray(r, dtype=float)
        phi = np.zeros(r.shape[:-1])
        for src in self.active_sources(t):
            phi = phi + src.potential(r, check=check)
        return phi

    def strikes(self, r, t):
        r = np.asarray(r, dtype=float)
        hit = np.zeros(r.shape[:-1], dtype=bool)
        for src in self.active_sources(t):
            hit |= src.strikes(r)
        return hit

    def in_domain(self, r, t):
        r = np.asarray(r, dtype=float)
        ok = np.ones(r.shape[:-1], dtype=bool)
        for src in self.active_sources(t):
            ok &= src.in_domain(r)
        return ok


@dataclass(frozen=True)
class IntegratorConfig:
    """Fixed-step integration parameters.

    The step must resolve the gyration: dt <= cyclotron period / 100,
    checked at run start for the species and B in use.  Samples are
    recorded every ``record_stride`` steps; electrode-strike and
    domain-exit tests also run at that cadence.
    """

    dt: float
    t_end: float
    record_stride: int = 10
    t_start: float = 0.0

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError("dt must be positive")
        if self.t_end <= self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.record_stride < 1:
            raise ValueError("record_stride must be >= 1")


def default_timestep(species, b_mag, steps_per_turn=400):
    """Cyclotron period divided by steps_per_turn (default 400)."""
    return cyclotron_period(species, b_mag) / steps_per_turn


def boris_step(state, e_field, b_field, dt, species):
    """One synchronized Boris update of a TrajectoryState.

    The velocity gets the standard half electric kick, exact-norm
    magnetic rotation and second half kick; the position drifts half a
    step before and half a step after the kick, which keeps the scheme
    second order with synchronized (r, v) samples.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    r_mid = state.r + state.v * (0.5 * dt)
    v_new = _boris_kick(state.v[None, :], as_vec3(e_field)[None, :],
                        as_vec3(b_field), dt,
                        species.charge / species.mass)[0]
    return TrajectoryState(t=state.t + dt, r=r_mid + v_new * (0.5 * dt),
                           v=v_new)


def _cross_rows(a, b):
    """Row-wise cross product of (n, 3) with (3,) without np.cross overhead."""
    out = np.empty_like(a)
    out[:, 0] = a[:, 1] * b[2] - a[:, 2] * b[1]
    out[:, 1] = a[:, 2] * b[0] - a[:, 0] * b[2]
    out[:, 2] = a[:, 0] * b[1] - a[:, 1] * b[0]
    return out


def _boris_kick(v, e, b, dt, q_over_m):
    """Half-kick / rotate / half-kick velocity update on (n, 3) arrays."""
    half = 0.5 * dt * q_over_m
    v_minus = v + half * e
    t_vec = half * b
    t2 = float(t_vec @ t_vec)
    s_vec = t_vec * (2.0 / (1.0 + t2))
    v_prime = v_minus + _cross_rows(v_minus, t_vec)
    v_plus = v_minus + _cross_rows(v_prime, s_vec)
    return v_plus + half * e


def _snap_windows(fields, t0, dt, n_steps):
    """Snap source windows to step boundaries; returns per-entry step
    ranges and a report of (requested, snapped) times that moved."""
    ranges = []
    snaps = []
    for src, t_on, t_off in fields.entries:
        k_on = 0
        k_off = n_steps + 1
        if t_on is not None:
            k_on = int(round((t_on - t0) / dt))
            k_on = min(max(k_on, 0), n_steps + 1)
            snapped = t0 + k_on * dt
            if abs(snapped - t_on) > 1e-12 * max(abs(t_on), dt):
                snaps.append((float(t_on), float(snapped)))
        if t_off is not None:
            k_off = int(round((t_off - t0) / dt))
            k_off = min(max(k_off, 0), n_steps + 1)
            snapped = t0 + k_off * dt
            if abs(snapped - t_off) > 1e-12 * max(abs(t_off), dt):
                snaps.append((float(t_off), float(snapped)))
        ranges.append((src, k_on, k_off))
    return ranges, snaps


class BatchResult:
    """Trajectories of a batch of particles integrated together.

    Arrays are time-major: r and v have shape (n_records, n_particles, 3).
    ``termination`` holds a per-particle tag and ``final_record`` the
    record index at which each particle stopped being advanced.
    """

    def __init__(self, t, r, v, ke, pe, termination, final_record, meta):
        self.t = t
        self.r = r
        self.v = v
        self.ke = ke
        self.pe = pe
        self.termination = termination
        self.final_record = final_record
        self.meta = meta

    @property
    def n_particles(self):
        return self.r.shape[1]

    def trajectory(self, i):
        stop = self.final_record[i] + 1
        return Trajectory(self.t[:stop], self.r[:stop, i], self.v[:stop, i],
                          ke=self.ke[:stop, i], pe=self.pe[:stop, i],
                          termination=self.termination[i], meta=self.meta)

    def final_state(self, i):
        k = self.final_record[i]
        return TrajectoryState(float(self.t[k]), self.r[k, i], self.v[k, i])


def integrate_batch(r0, v0, fields, cfg, species):
    """Integrate n particles together through a FieldStack.

    Particles that strike an electrode or leave the field domain are
    frozen at their last recorded sample and tagged; the remaining
    particles continue.  Checks run every recorded stride, not every
    step (point-in-solid tests dominate otherwise).
    """
    r = np.array(r0, dtype=float).reshape(-1, 3).copy()
    v = np.array(v0, dtype=float).reshape(-1, 3).copy()
    if r.shape != v.shape:
        raise ValueError("r0 and v0 must have matching shapes")
    n_part = r.shape[0]

    b = fields.b_field
    b_mag = float(np.linalg.norm(b))
    if b_mag > 0:
        t_c = cyclotron_period(species, b_mag)
        if cfg.dt > t_c / 100.0:
            raise ValueError(
                "dt=%.3g exceeds cyclotron period/100 = %.3g for %s"
                % (cfg.dt, t_c / 100.0, species.label))

    t0 = cfg.t_start
    n_steps = int(np.ceil((cfg.t_end - t0) / cfg.dt - 1e-9))
    ranges, snaps = _snap_windows(fields, t0, cfg.dt, n_steps)
    q_over_m = species.charge / species.mass

    stride = cfg.record_stride
    n_rec = n_steps // stride + 1
    rec_t = np.empty(n_rec)
    rec_r = np.empty((n_rec, n_part, 3))
    rec_v = np.empty((n_rec, n_part, 3))
    rec_ke = np.empty((n_rec, n_part))
    rec_pe = np.empty((n_rec, n_part))
    termination = np.array([Trajectory.COMPLETED] * n_part, dtype=object)
    final_record = np.full(n_part, n_rec - 1, dtype=int)
    alive = np.ones(n_part, dtype=bool)

    def active_list(step):
        return [src for src, k_on, k_off in ranges if k_on <= step < k_off]

    def eval_e(points, step):
        e = np.zeros_like(points)
        for src in active_list(step):
            e += src.efield(points, check=False)
        return e

    def eval_phi(points, step):
        phi = np.zeros(points.shape[0])
        for src in active_list(step):
            phi = phi + src.potential(points, check=False)
        return phi

    def record(idx, step):
        rec_t[idx] = t0 + step * cfg.dt
        rec_r[idx] = r
        rec_v[idx] = v
        rec_ke[idx] = 0.5 * species.mass * np.einsum("ij,ij->i", v, v)
        rec_pe[idx] = species.charge * eval_phi(r, step)

    def check_terminations(idx, step):
        nonlocal alive
        if not np.any(alive):
            return
        srcs = active_list(step)
        hit = np.zeros(n_part, dtype=bool)
        out = np.zeros(n_part, dtype=bool)
        for src in srcs:
            hit |= src.strikes(r)
            out |= ~src.in_domain(r)
        newly_hit = alive & hit
        newly_out = alive & out & ~hit
        for mask, tag in ((newly_hit, Trajectory.ELECTRODE_STRIKE),
                          (newly_out, Trajectory.DOMAIN_EXIT)):
            if np.any(mask):
                termination[mask] = tag
                final_record[mask] = idx
                alive &= ~mask

    record(0, 0)
    check_terminations(0, 0)
    rec_idx = 0
    half_dt = 0.5 * cfg.dt
    for step in range(n_steps):
        # drift-kick-drift keeps synchronized samples second-order accurate
        r_mid = r + v * half_dt
        e = eval_e(r_mid, step)
        v_new = _boris_kick(v, e, b, cfg.dt, q_over_m)
        r_new = r_mid + v_new * half_dt
        r[alive] = r_new[alive]
        v[alive] = v_new[alive]
        if (step + 1) % stride == 0:
            rec_idx += 1
            record(rec_idx, step + 1)
            check_terminations(rec_idx, step + 1)
            if not np.any(alive):
                rec_idx_stop = rec_idx + 1
                rec_t_ = rec_t[:rec_idx_stop]
                return BatchResult(rec_t_, rec_r[:rec_idx_stop],
                                   rec_v[:rec_idx_stop], rec_ke[:rec_idx_stop],
                                   rec_pe[:rec_idx_stop], termination,
                                   final_record,
                                   {"snapped_switches": snaps, "dt": cfg.dt})

    # tail shorter than a stride: record the final step too
    if n_steps % stride != 0:
        rec_idx += 1
        if rec_idx >= rec_t.shape[0]:
            rec_t = np.append(rec_t, 0.0)
            rec_r = np.concatenate([rec_r, np.empty((1, n_part, 3))])
            rec_v = np.concatenate([rec_v, np.empty((1, n_part, 3))])
            rec_ke = np.concatenate([rec_ke, np.empty((1, n_part))])
            rec_pe = np.concatenate([rec_pe, np.empty((1, n_part))])
        record(rec_idx, n_steps)
        check_terminations(rec_idx, n_steps)
        final_record[alive] = rec_idx

    stop = rec_idx + 1
    return BatchResult(rec_t[:stop], rec_r[:stop], rec_v[:stop],
                       rec_ke[:stop], rec_pe[:stop], termination,
                       final_record, {"snapped_switches": snaps, "dt": cfg.dt})


def integrate(state0, fields, cfg, species):
    """Integrate a single particle; returns a Trajectory.

    The trajectory carries an early-termination tag ("domain-exit",
    "electrode-strike") instead of raising: leaving the trap is a
    physics outcome, not a failure.
    """
    if cfg.t_start != state0.t:
        cfg = IntegratorConfig(dt=cfg.dt, t_end=cfg.t_end,
                               record_stride=cfg.record_stride,
                               t_start=state0.t)
    batch = integrate_batch(state0.r[None, :], state0.v[None, :],
                            fields, cfg, species)
    return batch.trajectory(0)


def cycloid_closed_form(t, e_mag, b_mag, species):
    """Closed-form drift orbit for a charge starting at rest at the origin.

    Uniform E along +y and B along +z give
    ``x = -(V_D/w) sin(wt) + V_D t`` and ``y = (V_D/w)(1 - cos(wt))``
    with drift velocity V_D = E/B and w = qB/m (signed with the charge).
    Returns (x, y); accepts scalar or array t.
    """
    if b_mag <= 0:
        raise ValueError("b_mag must be positive")
    t = np.asarray(t, dtype=float)
    omega = species.charge * b_mag / species.mass
    v_d = e_mag / b_mag
    x = -(v_d / omega) * np.sin(omega * t) + v_d * t
    y = (v_d / omega) * (1.0 - np.cos(omega * t))
    return x, y


def hop_field_magnitude(displacement, b_mag, species):
    """Uniform E that drifts the species by ``displacement`` in one
    cyclotron period: E = displacement * |q| B^2 / (2 pi m)."""
    if displacement < 0:
        raise ValueError("displacement must be >= 0")
    if b_mag <= 0:
        raise ValueError("b_mag must be positive")
    return displacement * abs(species.charge) * b_mag**2 / (2.0 * np.pi * species.mass)


TRAJECTORY_CSV_HEADER = "t,x,y,z,vx,vy,vz,ke_J,pe_J"


def write_trajectory_csv(traj, path):
    """Write a trajectory as CSV with SI columns t,x,y,z,vx,vy,vz,ke_J,pe_J.

    Floats are written with repr so that a read-back reproduces them
    bit-exactly.
    """
    with open(path, "w") as f:
        f.write(TRAJECTORY_CSV_HEADER + "\n")
        for i in range(len(traj)):
            row = [traj.t[i], *traj.r[i], *traj.v[i], traj.ke[i], traj.pe[i]]
            f.write(",".join(repr(float(x)) for x in row) + "\n")
