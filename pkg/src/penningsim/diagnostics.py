"""Analysis operations: spectra, quadrupole fits, geometry optimisation,
resonance-bias prediction and potential profiling."""

from dataclasses import dataclass, replace

import numpy as np
from scipy.stats import qmc

from .analytic_fields import six_wire_field
from .core import TrajectoryState
from .dynamics import FieldStack, IntegratorConfig, integrate
from .exceptions import (ConvergenceError, FlatFieldError,
                         ResonanceNotFoundError)
from .grid_solver import DEFAULT_SPACING
from .trap_protocols import PadArraySystem, trapping_assignment


# ---------------------------------------------------------------------------
# frequency extraction

@dataclass(frozen=True)
class SpectrumPeak:
    frequency: float   # Hz
    amplitude: float   # same units as the analysed coordinate
    bin_width: float   # Hz

    def __post_init__(self):
        if self.frequency < 0 or self.amplitude < 0:
            raise ValueError("peak frequency and amplitude must be >= 0")


_AXES = {"x": 0, "y": 1, "z": 2}


def _uniform_dt(t):
    dt = np.diff(t)
    if dt.size == 0 or not np.allclose(dt, dt[0], rtol=1e-6, atol=0.0):
        raise ValueError("trajectory samples must be uniformly spaced")
    return float(dt[0])


def amplitude_spectrum(traj, axis):
    """Hann-windowed single-sided amplitude spectrum of one coordinate.

    Returns (frequencies, amplitudes); the amplitude of a pure sine of
    amplitude A shows up as ~A at its frequency bin.
    """
    idx = _AXES[axis]
    x = traj.r[:, idx]
    if x.size < 1024:
        raise ValueError("need at least 1024 samples, got %d" % x.size)
    dt = _uniform_dt(traj.t)
    x = x - x.mean()
    w = np.hanning(x.size)
    spec = np.abs(np.fft.rfft(w * x)) * (2.0 / w.sum())
    freqs = np.fft.rfftfreq(x.size, d=dt)
    return freqs, spec


def total_spectral_power(traj, axis):
    """Window-compensated total power; approximates the signal variance
    (Parseval, exact for the windowed signal)."""
    idx = _AXES[axis]
    x = traj.r[:, idx]
    dt = _uniform_dt(traj.t)
    x = x - x.mean()
    w = np.hanning(x.size)
    spec = np.fft.rfft(w * x)
    n = x.size
    power = np.abs(spec) ** 2
    power[1:] *= 2.0
    if n % 2 == 0:
        power[-1] /= 2.0
    return float(power.sum() / n / (w * w).sum() * 1.0)


def extract_frequencies(traj, axis, max_peaks=6, floor_rel=1e-3):
    """Dominant spectral peaks of one coordinate, strongest first.

    Peak frequencies are refined by quadratic interpolation of the
    log-amplitude around each local maximum, which places a clean sine
    well inside a tenth of a bin.
    """
    freqs, spec = amplitude_spectrum(traj, axis)
    bin_width = float(freqs[1])
    floor = spec.max() * floor_rel
    peaks = []
    for i in range(2, spec.size - 1):
        if spec[i] <= floor:
            continue
        if spec[i] >= spec[i - 1] and spec[i] > spec[i + 1]:
            lm, l0, lp = np.log(spec[i - 1:i + 2] + 1e-300)
            denom = lm - 2.0 * l0 + lp
            delta = 0.5 * (lm - lp) / denom if denom < 0 else 0.0
            delta = float(np.clip(delta, -0.5, 0.5))
            amp = float(np.exp(l0 - 0.25 * (lm - lp) * delta))
            peaks.append(SpectrumPeak(frequency=float((i + delta) * bin_width),
                                      amplitude=amp, bin_width=bin_width))
    peaks.sort(key=lambda p: p.amplitude, reverse=True)
    return peaks[:max_peaks]


# ---------------------------------------------------------------------------
# quadrupole structure

@dataclass(frozen=True)
class QuadrupoleFit:
    """Least-squares c0 + c_quad (x^2 + y^2 - 2 z^2) description of a
    potential over a probe sphere."""

    c0: float
    c_quad: float             # V/m^2
    residual_rms_rel: float   # RMS residual / RMS of (phi - c0)

    def __post_init__(self):
        if self.residual_rms_rel < 0:
            raise ValueError("residual must be >= 0")


def _ball_points(n_points, seed):
    """Low-discrepancy points in the unit ball (Sobol + rejection)."""
    sampler = qmc.Sobol(d=3, scramble=True, seed=seed)
    pts = np.empty((0, 3))
    while pts.shape[0] < n_points:
        cand = 2.0 * sampler.random(2 * n_points) - 1.0
        keep = np.einsum("ij,ij->i", cand, cand) <= 1.0
        pts = np.vstack([pts, cand[keep]])
    return pts[:n_points]


def quadrupole_deviation(fld, center, probe_radius, n_points=256, seed=7):
    """Fit the ideal-quadrupole form to a potential over a probe sphere.

    Samples at least 200 quasi-random points inside the sphere, fits
    phi ~ c0 + c_quad (x^2 + y^2 - 2 z^2) about the center and reports
    the relative RMS residual.  A constant potential raises
    FlatFieldError.
    """
    n_points = max(int(n_points), 200)
    center = np.asarray(center, dtype=float)
    pts = center + probe_radius * _ball_points(n_points, seed)
    phi = fld.potential(pts, check=True)
    d = pts - center
    basis = np.stack([np.ones(len(pts)),
                      d[:, 0]**2 + d[:, 1]**2 - 2.0 * d[:, 2]**2], axis=1)
    coef, *_ = np.linalg.lstsq(basis, phi, rcond=None)
    resid = phi - basis @ coef
    scale = np.sqrt(np.mean((phi - coef[0])**2))
    if scale <= 1e-12 * max(1.0, abs(coef[0])):
        raise FlatFieldError("potential is constant over the probe sphere")
    return QuadrupoleFit(c0=float(coef[0]), c_quad=float(coef[1]),
                         residual_rms_rel=float(np.sqrt(np.mean(resid**2)) / scale))


@dataclass(frozen=True)
class GammaScanResult:
    gamma_star: float
    curve: tuple              # (gamma, residual_rms_rel) pairs
    single_trough: bool       # False flags a multimodal residual curve


def optimize_gamma(spec, gamma_range, steps, h=DEFAULT_SPACING,
                   v_endcap=10.0, v_ring=-10.0, probe_radius=None,
                   n_points=256, seed=7, workers=1):
    """Scan the pad-trap aspect ratio for the most quadrupole-like well.

    Each gamma gets a freshly solved single-site grid (fixed solver box
    sized for the largest gamma in the range, so the comparison is
    fair); the figure of merit is the relative quadrupole residual over
    a probe sphere of radius 20% of the pad pitch.  Returns the argmin
    with three-point parabolic refinement.
    """
    lo, hi = float(gamma_range[0]), float(gamma_range[1])
    if lo <= 0 or hi < lo:
        raise ValueError("gamma range must be positive with lo <= hi")
    if steps < 5 and hi > lo:
        raise ValueError("need at least 5 scan steps")
    if probe_radius is None:
        probe_radius = 0.2 * spec.pad_pitch
    gammas = np.linspace(lo, hi, steps) if hi > lo else np.array([lo])

    spec_max = replace(spec, gamma=hi, trap_sites=((0, 0),))
    domain = PadArraySystem(spec_max, h=h).domain

    def residual_at(gamma):
        s = replace(spec, gamma=float(gamma), trap_sites=((0, 0),))
        system = PadArraySystem(s, h=h, domain=domain)
        try:
            grid = system.solve_assignment(
                trapping_assignment(system, (0, 0), v_endcap, v_ring))
        except ConvergenceError as exc:
            raise ConvergenceError(
                "gamma=%.4f: %s" % (gamma, exc),
                residual=exc.residual, sweeps=exc.sweeps) from exc
        from .grid_solver import GridField
        fit = quadrupole_deviation(GridField(grid), system.site_center3((0, 0)),
                                   probe_radius, n_points=n_points, seed=seed)
        return fit.residual_rms_rel

    if workers > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=workers) as pool:
            residuals = list(pool.map(residual_at, gammas))
    else:
        residuals = [residual_at(g) for g in gammas]
    residuals = np.asarray(residuals)

    k = int(np.argmin(residuals))
    gamma_star = float(gammas[k])
    if 0 < k < len(gammas) - 1:
        y0, y1, y2 = residuals[k - 1:k + 2]
        denom = y0 - 2.0 * y1 + y2
        if denom > 0:
            step = float(gammas[1] - gammas[0])
            gamma_star += 0.5 * step * float((y0 - y2) / denom)
            gamma_star = float(np.clip(gamma_star, lo, hi))

    interior_minima = sum(
        1 for i in range(1, len(residuals) - 1)
        if residuals[i] < residuals[i - 1] and residuals[i] <= residuals[i + 1])
    single = interior_minima <= 1
    return GammaScanResult(gamma_star=gamma_star,
                           curve=tuple(zip(gammas.tolist(), residuals.tolist())),
                           single_trough=single)


# ---------------------------------------------------------------------------
# resonance-bias prediction

def _axial_frequency_six_wire(spec, species, bias_mag, amplitude_frac):
    """Axial oscillation frequency at a given bias magnitude, from a
    simulated small-amplitude bounce on the trap axis (B-free: on-axis
    motion is purely axial)."""
    trap_spec = replace(spec, delta_v=np.sign(species.charge) * bias_mag)
    fld = six_wire_field(trap_spec)
    z0 = amplitude_frac * spec.z0
    # harmonic estimate of the well sets the step and duration
    dz = 1e-3 * spec.z0
    pz = lambda z: fld.potential(np.array([0.0, 0.0, z]))
    curv = (pz(dz) - 2.0 * pz(0.0) + pz(-dz)) / dz**2
    if species.charge * curv <= 0:
        return 0.0
    w_est = np.sqrt(species.charge * curv / species.mass)
    dt = 2.0 * np.pi / w_est / 256.0
    cfg = IntegratorConfig(dt=dt, t_end=22.0 * 2.0 * np.pi / w_est,
                           record_stride=1)
    stack = FieldStack.static(fld, [0.0, 0.0, 0.0])
    traj = integrate(TrajectoryState(0.0, [0.0, 0.0, z0], [0.0, 0.0, 0.0]),
                     stack, cfg, species)
    z = traj.r[:, 2]
    t = traj.t
    sign_flips = np.where(np.sign(z[1:]) != np.sign(z[:-1]))[0]
    if sign_flips.size < 3:
        return 0.0
    crossings = t[sign_flips] - z[sign_flips] * (t[sign_flips + 1] - t[sign_flips]) \
        / (z[sign_flips + 1] - z[sign_flips])
    return float(1.0 / (2.0 * np.mean(np.diff(crossings))))


def resonance_bias(spec, species, f_circuit, bracket=(0.01, 20.0),
                   rel_tol=0.005, amplitude_frac=0.01, max_iter=60):
    """DC trap bias at which the axial frequency matches a detection
    circuit.

    The axial frequency is extracted from a simulated small-amplitude
    (1% of z0) bounce in the full six-wire potential and bisected over
    the bias magnitude until it matches ``f_circuit`` to 0.5%.  The
    returned value follows the bias-supply convention of the prototype:
    the voltage applied to the external wires with the central wires
    grounded, which is the negative of the central-minus-outer
    difference and therefore negative for positive species.
    """
    if f_circuit <= 0:
        raise ValueError("f_circuit must be positive")
    sgn = np.sign(species.charge)
    scanned = []

    def f_of(mag):
        f = _axial_frequency_six_wire(spec, species, mag, amplitude_frac)
        scanned.append((float(-sgn * mag), f))
        return f

    lo, hi = bracket
    f_lo, f_hi = f_of(lo), f_of(hi)
    if not (f_lo <= f_circuit <= f_hi):
        raise ResonanceNotFoundError(
            "axial frequency spans [%.4g, %.4g] Hz over the bias bracket "
            "[%g, %g] V; %.4g Hz is unreachable"
            % (f_lo, f_hi, lo, hi, f_circuit), scan_table=scanned)
    for _ in range(max_iter):
        mid = np.sqrt(lo * hi)  # frequency scales as sqrt(bias)
        f_mid = f_of(mid)
        if abs(f_mid - f_circuit) <= rel_tol * f_circuit:
            return float(-sgn * mid)
        if f_mid < f_circuit:
            lo = mid
        else:
            hi = mid
    raise ResonanceNotFoundError(
        "bisection exhausted without matching %.4g Hz" % f_circuit,
        scan_table=scanned)


# ---------------------------------------------------------------------------
# potential profiling

def axial_profile(fld, point, direction, half_length, samples):
    """Sample the potential along a straight line.

    Returns a record array with columns s (signed distance from the line
    center), x, y, z and phi.
    """
    point = np.asarray(point, dtype=float)
    direction = np.asarray(direction, dtype=float)
    norm = np.linalg.norm(direction)
    if norm == 0:
        raise ValueError("direction must be non-zero")
    direction = direction / norm
    if samples < 2:
        raise ValueError("need at least 2 samples")
    s = np.linspace(-half_length, half_length, int(samples))
    pts = point + s[:, None] * direction
    phi = fld.potential(pts, check=True)
    out = np.zeros(len(s), dtype=[("s", float), ("x", float), ("y", float),
                                  ("z", float), ("phi", float)])
    out["s"] = s
    out["x"], out["y"], out["z"] = pts[:, 0], pts[:, 1], pts[:, 2]
    out["phi"] = phi
    return out


@dataclass(frozen=True)
class ZWellRow:
    s: float            # arc length along the scanned path, m
    z_min: float        # position of the axial minimum, m (nan if none)
    curvature: float    # d2 phi / dz2 at the minimum, V/m^2
    has_minimum: bool


def z_well_scan(fld, path_points, z_half, n_z=41):
    """Axial-well survey along a path: at every path point, scan the
    potential along z and report the local-minimum position and its
    second difference.

    A point without an interior minimum is flagged in its row rather
    than raising: losing the well is a finding, not a failure.
    """
    path = np.asarray(path_points, dtype=float)
    if path.ndim != 2 or path.shape[1] != 3:
        raise ValueError("path_points must have shape (n, 3)")
    seg = np.linalg.norm(np.diff(path, axis=0), axis=1)
    arc = np.concatenate([[0.0], np.cumsum(seg)])
    zs = np.linspace(-z_half, z_half, int(n_z))
    dz = zs[1] - zs[0]
    rows = []
    for s, p in zip(arc, path):
        pts = np.tile(p, (len(zs), 1))
        pts[:, 2] = p[2] + zs
        phi = fld.potential(pts, check=True)
        k = int(np.argmin(phi))
        if k == 0 or k == len(zs) - 1:
            rows.append(ZWellRow(s=float(s), z_min=float("nan"),
                                 curvature=0.0, has_minimum=False))
            continue
        y0, y1, y2 = phi[k - 1], phi[k], phi[k + 1]
        curv = (y0 - 2.0 * y1 + y2) / dz**2
        offset = 0.5 * (y0 - y2) / (y0 - 2.0 * y1 + y2) * dz \
            if (y0 - 2.0 * y1 + y2) != 0 else 0.0
        rows.append(ZWellRow(s=float(s), z_min=float(p[2] + zs[k] + offset),
                             curvature=float(curv), has_minimum=True))
    return rows
