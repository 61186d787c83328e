"""Command-line interface.

Subcommands: solve, simulate, hop, sweep-gamma, resonance, profile.
All geometry comes from a trap specification file (see README for the
key vocabulary); lengths on the command line are millimetres, energies
milli-electronvolts, times microseconds.  Output CSVs are SI.

Exit codes: 0 success, 2 configuration error, 3 numerical
non-convergence, 4 physics failure (escape, strike, no resonance,
infeasible plan).
"""

import argparse
import sys

import numpy as np

from .analytic_fields import cyclotron_period, six_wire_field, two_wire_field
from .core import MILLI_EV, Trajectory, TrajectoryState
from .diagnostics import axial_profile, optimize_gamma, resonance_bias
from .dynamics import (FieldStack, IntegratorConfig, integrate,
                       write_trajectory_csv)
from .exceptions import (ConvergenceError, DomainError, FlatFieldError,
                         GeometryConflictError, MarginError,
                         NoAxialConfinementError, PlanInfeasibleError,
                         ResonanceNotFoundError, SingularPointError,
                         SpecFileError, TrapSimError, UnstableTrapError)
from .grid_solver import (DEFAULT_SPACING, GridField, rasterize,
                          sample_potential, save_grid, solve_laplace)
from .trap_protocols import (PadArraySystem, build_ring_transport,
                             build_two_plate, execute_hop, load_trap_spec,
                             plan_hop, ring_guide_domain, ring_trap_voltages,
                             trapping_assignment, two_plate_domain,
                             with_voltages)

CONFIG_ERRORS = (SpecFileError, GeometryConflictError, MarginError,
                 ValueError, KeyError, FileNotFoundError, IsADirectoryError)
PHYSICS_ERRORS = (SingularPointError, DomainError, UnstableTrapError,
                  NoAxialConfinementError, PlanInfeasibleError,
                  ResonanceNotFoundError, FlatFieldError)


def _grid_electrodes(setup):
    """Electrode list + solver domain for the grid-backed trap kinds."""
    if setup.kind == "two_plate":
        v_top = setup.voltages.get("top_ring", -5.0)
        v_bottom = setup.voltages.get("bottom_disk", +5.0)
        els = build_two_plate(setup.params["z0"], setup.params["r_outer"],
                              setup.params["r_inner"], v_top, v_bottom)
        return els, two_plate_domain(setup.params["z0"],
                                     setup.params["r_outer"])
    if setup.kind == "ring_guide":
        els = build_ring_transport(setup.params["ring_radii"],
                                   setup.params["wire_radius"],
                                   setup.params["z_gap"])
        assignment = setup.voltages or ring_trap_voltages()
        return with_voltages(els, assignment), \
            ring_guide_domain(setup.params["ring_radii"],
                              setup.params["z_gap"])
    raise SpecFileError("trap kind %r has no solver grid" % setup.kind)


def _pad_system(setup, h=None):
    if setup.kind != "pad_array":
        raise SpecFileError("this command needs trap.kind = pad_array, "
                            "got %r" % setup.kind)
    return PadArraySystem(setup.params["spec"],
                          h=h or setup.h or DEFAULT_SPACING)


def _solved_grid(setup, h=None, tol=None):
    els, domain = _grid_electrodes(setup)
    grid = rasterize(els, domain, h or setup.h or DEFAULT_SPACING)
    solved, _ = solve_laplace(grid, tol=tol)
    return solved


def _static_field(setup, h=None, tol=None):
    """One static field source with the file's voltages applied."""
    if setup.kind == "six_wire":
        return six_wire_field(setup.params["spec"])
    if setup.kind == "two_wire":
        return two_wire_field(setup.params["spec"])
    if setup.kind == "pad_array":
        system = _pad_system(setup, h)
        assignment = setup.voltages or trapping_assignment(
            system, setup.params["spec"].trap_sites[0])
        return system.field_for(assignment)
    return GridField(_solved_grid(setup, h, tol))


def _axis_minimum(fld, z_lo, z_hi, n=300):
    zs = np.linspace(z_lo, z_hi, n)
    pts = np.stack([np.zeros_like(zs), np.zeros_like(zs), zs], axis=-1)
    phi = fld.potential(pts, check=False)
    return np.array([0.0, 0.0, zs[int(np.argmin(phi))]])


def _default_start(setup, fld):
    if setup.start is not None:
        return setup.start
    if setup.kind in ("six_wire", "two_wire"):
        return np.zeros(3)
    if setup.kind == "pad_array":
        spec = setup.params["spec"]
        x, y = spec.site_center(spec.trap_sites[0])
        return np.array([x, y, 0.0])
    if setup.kind == "two_plate":
        z0 = setup.params["z0"]
        return _axis_minimum(fld, z0 + 1e-3, z0 + 9e-3)
    # ring guide: the trap forms above the ring/wire crossing
    r_mid = setup.params["ring_radii"][1]
    z_top = setup.params["z_gap"] / 2.0
    zs = np.linspace(z_top + 1e-3, z_top + 6e-3, 200)
    pts = np.stack([np.full_like(zs, r_mid), np.zeros_like(zs), zs], axis=-1)
    phi = fld.potential(pts, check=False)
    return np.array([r_mid, 0.0, zs[int(np.argmin(phi))]])


def _launch_velocity(species, ke_mev, direction):
    speed = species.speed_from_energy(ke_mev * MILLI_EV)
    az, dec = (np.deg2rad(float(v)) for v in direction.split(","))
    return speed * np.array([np.cos(dec) * np.cos(az),
                             np.cos(dec) * np.sin(az),
                             np.sin(dec)])


def _cmd_solve(args):
    setup = load_trap_spec(args.spec)
    h = args.h_mm * 1e-3 if args.h_mm else None
    solved = _solved_grid(setup, h=h, tol=args.tol)
    save_grid(solved, args.out)
    print("wrote %s (%dx%dx%d nodes, %d sweeps)"
          % (args.out, *solved.dims, solved.meta.get("sweeps", -1)))
    return 0


def _cmd_simulate(args):
    setup = load_trap_spec(args.spec)
    b_vec = [0.0, 0.0, setup.b_field]
    if setup.schedule is not None and setup.kind == "pad_array":
        system = _pad_system(setup)
        segs = setup.schedule.segments
        entries = []
        for k, (t0, assignment) in enumerate(segs):
            t1 = segs[k + 1][0] if k + 1 < len(segs) else None
            entries.append((system.field_for(assignment), t0, t1))
        stack = FieldStack(entries, b_vec)
        fld = entries[0][0]
    else:
        fld = _static_field(setup)
        stack = FieldStack.static(fld, b_vec)
    start = _default_start(setup, fld)
    v0 = _launch_velocity(setup.species, args.ke_mev, args.dir)
    t_c = cyclotron_period(setup.species, setup.b_field)
    t_end = args.t_us * 1e-6 if args.t_us else 20.0 * t_c
    cfg = IntegratorConfig(dt=t_c / 400.0, t_end=t_end, record_stride=10)
    traj = integrate(TrajectoryState(0.0, start, v0), stack, cfg,
                     setup.species)
    write_trajectory_csv(traj, args.out)
    print("wrote %s (%d samples, termination=%s)"
          % (args.out, len(traj), traj.termination))
    if traj.escaped:
        print("ion left the trap: %s at t=%.4g us"
              % (traj.termination, traj.t[-1] * 1e6), file=sys.stderr)
        return 4
    return 0


def _parse_site(text):
    i, j = (int(v) for v in text.split(","))
    return (i, j)


def _cmd_hop(args):
    setup = load_trap_spec(args.spec)
    system = _pad_system(setup)
    plan = plan_hop(system, _parse_site(args.from_site),
                    _parse_site(args.to_site), setup.species, setup.b_field)
    state0 = None
    if args.ke_mev:
        v0 = _launch_velocity(setup.species, args.ke_mev, "0,0")
        state0 = TrajectoryState(0.0, system.site_center3(plan.from_site), v0)
    report = execute_hop(system, plan, setup.species, setup.b_field,
                         state0=state0)
    write_trajectory_csv(report.trajectory, args.out)
    print("dxy_mm=%.6g, zfinal_mm=%.6g, duration_us=%.6g"
          % (report.dxy * 1e3, report.z_final * 1e3, plan.duration * 1e6))
    if report.failed:
        print("hop failed: %s" % report.trajectory.termination,
              file=sys.stderr)
        return 4
    return 0


def _cmd_sweep_gamma(args):
    setup = load_trap_spec(args.spec)
    if setup.kind != "pad_array":
        raise SpecFileError("sweep-gamma needs trap.kind = pad_array")
    lo, hi = (float(v) for v in args.range.split(","))
    result = optimize_gamma(setup.params["spec"], (lo, hi), args.steps,
                            h=setup.h or DEFAULT_SPACING)
    with open(args.out, "w") as f:
        f.write("gamma,residual_rms_rel\n")
        for g, r in result.curve:
            f.write("%r,%r\n" % (g, r))
    print("gamma_star=%.6g" % result.gamma_star)
    if not result.single_trough:
        print("warning: residual curve is multimodal over the scanned range",
              file=sys.stderr)
    return 0


def _cmd_resonance(args):
    setup = load_trap_spec(args.spec)
    if setup.kind != "six_wire":
        raise SpecFileError("resonance needs trap.kind = six_wire")
    bias = resonance_bias(setup.params["spec"], setup.species,
                          args.f_khz * 1e3)
    print("bias_V=%.6g" % bias)
    return 0


def _cmd_profile(args):
    setup = load_trap_spec(args.spec)
    fld = _static_field(setup)
    parts = args.line.split(",")
    if len(parts) != 8:
        raise ValueError("--line wants x0,y0,z0,dx,dy,dz,len_mm,n")
    x0, y0, z0, dx, dy, dz, length_mm = (float(v) for v in parts[:7])
    n = int(parts[7])
    table = axial_profile(fld, np.array([x0, y0, z0]) * 1e-3,
                          np.array([dx, dy, dz]),
                          half_length=length_mm * 1e-3 / 2.0, samples=n)
    with open(args.out, "w") as f:
        f.write("s,x,y,z,phi\n")
        for row in table:
            f.write(",".join(repr(float(row[c]))
                             for c in ("s", "x", "y", "z", "phi")) + "\n")
    print("wrote %s (%d samples)" % (args.out, n))
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="penningsim",
        description="Penning trap field solving, ion tracing and transport "
                    "protocol analysis.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="solve a trap geometry onto a grid file")
    p.add_argument("--spec", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--h-mm", type=float, default=None)
    p.add_argument("--tol", type=float, default=None)
    p.set_defaults(func=_cmd_solve)

    p = sub.add_parser("simulate", help="integrate one ion and write a CSV")
    p.add_argument("--spec", required=True)
    p.add_argument("--ke-mev", type=float, default=10.0,
                   help="launch kinetic energy in meV (default 10)")
    p.add_argument("--dir", default="0,0",
                   help="launch direction azimuth,declination in degrees")
    p.add_argument("--t-us", type=float, default=None,
                   help="duration in us (default 20 cyclotron periods)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("hop", help="plan and run a pad-to-pad hop")
    p.add_argument("--spec", required=True)
    p.add_argument("--from", dest="from_site", required=True, metavar="i,j")
    p.add_argument("--to", dest="to_site", required=True, metavar="i,j")
    p.add_argument("--ke-mev", type=float, default=0.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_hop)

    p = sub.add_parser("sweep-gamma", help="scan the pad-trap aspect ratio")
    p.add_argument("--spec", required=True)
    p.add_argument("--range", required=True, metavar="a,b")
    p.add_argument("--steps", type=int, required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_sweep_gamma)

    p = sub.add_parser("resonance",
                       help="bias matching the detection-circuit frequency")
    p.add_argument("--spec", required=True)
    p.add_argument("--f-khz", type=float, required=True)
    p.set_defaults(func=_cmd_resonance)

    p = sub.add_parser("profile", help="sample the potential along a line")
    p.add_argument("--spec", required=True)
    p.add_argument("--line", required=True,
                   metavar="x0,y0,z0,dx,dy,dz,len_mm,n")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_profile)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConvergenceError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 3
    except PHYSICS_ERRORS as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 4
    except CONFIG_ERRORS as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2
    except TrapSimError as exc:
        print("error: %s" % exc, file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
