"""penningsim: simulation and analysis of wire, two-plate and pad Penning traps."""

from .core import (
    ATOMIC_MASS,
    CA40_ION,
    ELECTRON,
    ELEMENTARY_CHARGE,
    ION_100AMU,
    MILLI_EV,
    Species,
    Trajectory,
    TrajectoryState,
    species_from_amu,
    vec3,
)
from .analytic_fields import (
    LogWire,
    LogWireSet,
    ModeFrequencies,
    QuadrupoleField,
    SixWireSpec,
    TwoWireSpec,
    UniformField,
    axial_frequency_two_wire,
    cyclotron_frequency,
    cyclotron_period,
    efield,
    mode_frequencies,
    six_wire_field,
    six_wire_potential,
    two_wire_field,
    two_wire_potential,
    two_wire_quadratic,
)
from .dynamics import (
    BatchResult,
    FieldStack,
    IntegratorConfig,
    boris_step,
    cycloid_closed_form,
    default_timestep,
    hop_field_magnitude,
    integrate,
    integrate_batch,
    write_trajectory_csv,
)
from .grid_solver import (
    Annulus,
    Disk,
    Electrode,
    GridField,
    PotentialGrid,
    Rod,
    Torus,
    load_grid,
    rasterize,
    sample_efield,
    sample_potential,
    save_grid,
    solve_laplace,
)
from .trap_protocols import (
    HopPlan,
    HopReport,
    PadArraySpec,
    PadArraySystem,
    VoltageSchedule,
    build_pad_array,
    build_ring_transport,
    build_six_wire,
    build_two_plate,
    execute_hop,
    execute_hop_batch,
    load_trap_spec,
    plan_hop,
    ring_transport_voltages,
    ring_trap_voltages,
    trapping_assignment,
)
from .diagnostics import (
    GammaScanResult,
    QuadrupoleFit,
    SpectrumPeak,
    axial_profile,
    extract_frequencies,
    optimize_gamma,
    quadrupole_deviation,
    resonance_bias,
    z_well_scan,
)

__version__ = "0.1.0"
