"""Exception types shared across the package.

The CLI maps these onto exit codes: configuration problems exit 2,
numerical non-convergence exits 3 and physics failures (escape, strike,
no resonance, infeasible plan) exit 4.
"""


class TrapSimError(Exception):
    """Base class for all errors raised by this package."""


class SingularPointError(TrapSimError):
    """Potential or field requested on (or inside) an electrode."""


class DomainError(TrapSimError):
    """Point lies outside the sampled grid domain."""


class GeometryConflictError(TrapSimError):
    """Overlapping electrodes with conflicting voltages, or overlapping pads."""


class MarginError(TrapSimError):
    """Electrode too close to (or touching) the grid domain boundary."""


class ConvergenceError(TrapSimError):
    """Iterative solve hit its sweep limit before reaching tolerance."""

    def __init__(self, message, residual=None, sweeps=None):
        super().__init__(message)
        self.residual = residual
        self.sweeps = sweeps


class UnstableTrapError(TrapSimError):
    """Radial confinement lost: omega_z**2 >= omega_c**2 / 2."""

    def __init__(self, omega_z, omega_c):
        super().__init__(
            "unstable trap: omega_z^2 = %.6g >= omega_c^2/2 = %.6g"
            % (omega_z**2, 0.5 * omega_c**2)
        )
        self.omega_z = omega_z
        self.omega_c = omega_c


class NoAxialConfinementError(TrapSimError):
    """Electrode polarity does not confine the species along z."""


class PlanInfeasibleError(TrapSimError):
    """Hop voltage fit could not maintain axial confinement along the channel."""

    def __init__(self, message, point=None):
        super().__init__(message)
        self.point = point


class FlatFieldError(TrapSimError):
    """Potential is constant over the probe region; nothing to fit."""


class ResonanceNotFoundError(TrapSimError):
    """No bias inside the search bracket matches the requested frequency."""

    def __init__(self, message, scan_table=None):
        super().__init__(message)
        # list of (bias_V, f_z_Hz) pairs evaluated before giving up
        self.scan_table = scan_table or []


class SpecFileError(TrapSimError):
    """Malformed trap specification file (unknown or missing keys)."""
