"""Shared physical constants, species and trajectory containers.

Everything internal is SI (m, s, kg, C, V).  Milli-electronvolts,
millimetres and atomic mass units appear only at user-facing boundaries
and are converted with the helpers below.
"""

from dataclasses import dataclass, field

import numpy as np

ELEMENTARY_CHARGE = 1.602176634e-19  # C, exact (2019 SI)
ATOMIC_MASS = 1.66053906660e-27      # kg
ELECTRON_MASS = 9.1093837015e-31     # kg
MILLI_EV = 1.602176634e-22           # J per meV


def vec3(x, y, z):
    """Build a finite 3-vector as a float ndarray."""
    v = np.array([x, y, z], dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("vector components must be finite, got %r" % (v,))
    return v


def as_vec3(v):
    """Coerce to a finite shape-(3,) float array, raising on anything else."""
    a = np.asarray(v, dtype=float)
    if a.shape != (3,):
        raise ValueError("expected a 3-vector, got shape %r" % (a.shape,))
    if not np.all(np.isfinite(a)):
        raise ValueError("vector components must be finite, got %r" % (a,))
    return a


@dataclass(frozen=True)
class Species:
    """A charged particle: mass in kg, charge in C."""

    mass: float
    charge: float
    label: str = ""

    def __post_init__(self):
        if not (self.mass > 0 and np.isfinite(self.mass)):
            raise ValueError("species mass must be positive and finite")
        if self.charge == 0 or not np.isfinite(self.charge):
            raise ValueError("species charge must be non-zero and finite")

    def speed_from_energy(self, kinetic_energy_joule):
        """|v| for a given kinetic energy in joules."""
        if kinetic_energy_joule < 0:
            raise ValueError("kinetic energy must be >= 0")
        return float(np.sqrt(2.0 * kinetic_energy_joule / self.mass))


def species_from_amu(amu, charge_units, label=None):
    """Species from a mass in atomic mass units and a signed charge count.

    Parameters
    ----------
    amu : float
        Mass in unified atomic mass units, > 0.
    charge_units : int
        Charge in units of the elementary charge, non-zero.
    label : str, optional
        Display name; generated from the arguments when omitted.
    """
    if not (amu > 0 and np.isfinite(amu)):
        raise ValueError("amu must be positive, got %r" % (amu,))
    if charge_units == 0:
        raise ValueError("charge_units must be non-zero")
    if label is None:
        label = "%gamu%+d" % (amu, charge_units)
    return Species(mass=amu * ATOMIC_MASS,
                   charge=charge_units * ELEMENTARY_CHARGE,
                   label=label)


# Common presets
CA40_ION = species_from_amu(40, +1, label="Ca+")
ION_100AMU = species_from_amu(100, +1, label="100amu+")
ELECTRON = Species(mass=ELECTRON_MASS, charge=-ELEMENTARY_CHARGE, label="e-")


@dataclass(frozen=True)
class TrajectoryState:
    """Instantaneous (t, position, velocity) sample of a particle path."""

    t: float
    r: np.ndarray
    v: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "r", as_vec3(self.r))
        object.__setattr__(self, "v", as_vec3(self.v))
        if not np.isfinite(self.t):
            raise ValueError("time must be finite")


class Trajectory:
    """Recorded samples of one integrated particle path.

    Attributes
    ----------
    t, r, v : ndarray
        Times (n,), positions (n, 3) and velocities (n, 3).
    ke, pe : ndarray
        Kinetic and potential energy (J) at each sample.
    termination : str
        One of ``"completed"``, ``"domain-exit"``, ``"electrode-strike"``.
    meta : dict
        Integration bookkeeping (snapped switch times etc.).
    """

    COMPLETED = "completed"
    DOMAIN_EXIT = "domain-exit"
    ELECTRODE_STRIKE = "electrode-strike"

    def __init__(self, t, r, v, ke=None, pe=None, termination=COMPLETED,
                 meta=None):
        self.t = np.asarray(t, dtype=float)
        self.r = np.asarray(r, dtype=float)
        self.v = np.asarray(v, dtype=float)
        n = self.t.shape[0]
        if self.r.shape != (n, 3) or self.v.shape != (n, 3):
            raise ValueError("inconsistent trajectory array shapes")
        if n > 1 and np.any(np.diff(self.t) < 0):
            raise ValueError("trajectory times must be non-decreasing")
        self.ke = np.zeros(n) if ke is None else np.asarray(ke, dtype=float)
        self.pe = np.zeros(n) if pe is None else np.asarray(pe, dtype=float)
        self.termination = termination
        self.meta = dict(meta or {})

    def __len__(self):
        return self.t.shape[0]

    def state(self, i):
        return TrajectoryState(float(self.t[i]), self.r[i], self.v[i])

    @property
    def final_state(self):
        return self.state(len(self) - 1)

    @property
    def escaped(self):
        return self.termination != self.COMPLETED
