"""Finite-difference Laplace solver with Dirichlet electrode boundaries.

Geometries with no closed form (two-plate traps, ring guides, pad
arrays) are rasterized onto a uniform rectilinear grid: nodes whose
centers fall inside an electrode solid are pinned to its voltage, the
outer box is grounded, and the free nodes are relaxed by checkerboard
successive over-relaxation until the largest per-node update drops
below tolerance.  The grounded box doubles as the "potential is zero at
distance R" reference of the analytic wire models.
"""

from dataclasses import dataclass

import numpy as np

from .core import as_vec3
from .exceptions import (ConvergenceError, DomainError, GeometryConflictError,
                         MarginError, SingularPointError)

BOUNDARY_LABEL = "boundary"
EDGE_EPS = 1e-9  # relative slack so faces exactly on node planes stay inside
DEFAULT_SPACING = 0.2e-3       # m; adequate for mm-scale electrodes
DEFAULT_MAX_SWEEPS = 50000
MARGIN_CELLS = 5


# ---------------------------------------------------------------------------
# electrode solids

@dataclass(frozen=True)
class Disk:
    """Axis-aligned circular slab; center is the solid's centroid."""

    center: tuple
    radius: float
    thickness: float
    axis: int = 2

    def __post_init__(self):
        if self.radius <= 0 or self.thickness <= 0:
            raise ValueError("disk radius and thickness must be positive")

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        c = np.asarray(self.center, dtype=float)
        d = r - c
        ax = self.axis
        i, j = [k for k in range(3) if k != ax]
        radial2 = d[..., i] ** 2 + d[..., j] ** 2
        half = self.thickness / 2.0 * (1 + EDGE_EPS)
        return (np.abs(d[..., ax]) <= half) & \
               (radial2 <= self.radius ** 2 * (1 + EDGE_EPS))

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        lo, hi = c.copy(), c.copy()
        for k in range(3):
            half = self.thickness / 2.0 if k == self.axis else self.radius
            lo[k] -= half
            hi[k] += half
        return lo, hi


@dataclass(frozen=True)
class Annulus:
    """Disk with a concentric hole (also models a disk-with-hole endcap)."""

    center: tuple
    r_inner: float
    r_outer: float
    thickness: float
    axis: int = 2

    def __post_init__(self):
        if not (0 <= self.r_inner < self.r_outer):
            raise ValueError("need 0 <= r_inner < r_outer")
        if self.thickness <= 0:
            raise ValueError("thickness must be positive")

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        c = np.asarray(self.center, dtype=float)
        d = r - c
        ax = self.axis
        i, j = [k for k in range(3) if k != ax]
        radial2 = d[..., i] ** 2 + d[..., j] ** 2
        half = self.thickness / 2.0 * (1 + EDGE_EPS)
        return (np.abs(d[..., ax]) <= half) & \
               (radial2 <= self.r_outer ** 2 * (1 + EDGE_EPS)) & \
               (radial2 >= self.r_inner ** 2 * (1 - EDGE_EPS))

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        lo, hi = c.copy(), c.copy()
        for k in range(3):
            half = self.thickness / 2.0 if k == self.axis else self.r_outer
            lo[k] -= half
            hi[k] += half
        return lo, hi


@dataclass(frozen=True)
class Rod:
    """Finite straight cylinder between two endpoints."""

    endpoint_a: tuple
    endpoint_b: tuple
    radius: float

    def __post_init__(self):
        if self.radius <= 0:
            raise ValueError("rod radius must be positive")
        a = np.asarray(self.endpoint_a, dtype=float)
        b = np.asarray(self.endpoint_b, dtype=float)
        if np.allclose(a, b):
            raise ValueError("rod endpoints coincide")

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        a = np.asarray(self.endpoint_a, dtype=float)
        b = np.asarray(self.endpoint_b, dtype=float)
        ab = b - a
        length2 = float(ab @ ab)
        t = ((r - a) @ ab) / length2
        t = np.clip(t, 0.0, 1.0)
        closest = a + t[..., None] * ab
        d = r - closest
        return np.einsum("...i,...i->...", d, d) \
            <= self.radius ** 2 * (1 + EDGE_EPS)

    def bounds(self):
        a = np.asarray(self.endpoint_a, dtype=float)
        b = np.asarray(self.endpoint_b, dtype=float)
        return np.minimum(a, b) - self.radius, np.maximum(a, b) + self.radius


@dataclass(frozen=True)
class Torus:
    """Circular wire ring: major radius in the plane normal to axis."""

    center: tuple
    major_radius: float
    minor_radius: float
    axis: int = 2

    def __post_init__(self):
        if not (0 < self.minor_radius < self.major_radius):
            raise ValueError("need 0 < minor_radius < major_radius")

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        c = np.asarray(self.center, dtype=float)
        d = r - c
        ax = self.axis
        i, j = [k for k in range(3) if k != ax]
        radial = np.sqrt(d[..., i] ** 2 + d[..., j] ** 2)
        return (radial - self.major_radius) ** 2 + d[..., ax] ** 2 \
            <= self.minor_radius ** 2 * (1 + EDGE_EPS)

    def bounds(self):
        c = np.asarray(self.center, dtype=float)
        lo, hi = c.copy(), c.copy()
        for k in range(3):
            half = self.minor_radius if k == self.axis \
                else self.major_radius + self.minor_radius
            lo[k] -= half
            hi[k] += half
        return lo, hi


@dataclass(frozen=True)
class Electrode:
    """A solid held at a fixed voltage."""

    shape: object
    voltage: float
    label: str


# ---------------------------------------------------------------------------
# the grid

FREE = -1


class PotentialGrid:
    """Uniform rectilinear potential samples with an electrode mask.

    ``values`` has shape (nx, ny, nz); ``mask`` holds FREE (-1) or the
    index of the electrode pinning that node.  ``labels``/``voltages``
    are parallel lists indexed by mask value; the grounded outer box is
    registered as the last entry under the label "boundary".
    """

    def __init__(self, origin, h, values, mask, labels, voltages,
                 solids=None, meta=None):
        self.origin = as_vec3(origin)
        self.h = float(h)
        self.values = np.asarray(values, dtype=float)
        self.mask = np.asarray(mask, dtype=np.int16)
        if self.values.shape != self.mask.shape or self.values.ndim != 3:
            raise ValueError("values and mask must share a 3-D shape")
        self.labels = list(labels)
        self.voltages = [float(v) for v in voltages]
        self.solids = list(solids) if solids else []
        self.meta = dict(meta or {})

    @property
    def dims(self):
        return self.values.shape

    @property
    def upper(self):
        return self.origin + (np.array(self.dims) - 1) * self.h

    def copy(self):
        return PotentialGrid(self.origin, self.h, self.values.copy(),
                             self.mask.copy(), self.labels, self.voltages,
                             self.solids, self.meta)

    def axis_coords(self, axis):
        return self.origin[axis] + self.h * np.arange(self.dims[axis])


def rasterize(electrodes, domain, h=DEFAULT_SPACING):
    """Pin grid nodes inside electrode solids to their voltages.

    Parameters
    ----------
    electrodes : list of Electrode
    domain : (lo, hi)
        Opposite corners of the grounded box, in metres.  The upper
        corner is snapped outward onto the node lattice.
    h : float
        Uniform node spacing.

    Every electrode must keep at least five cells of clearance from the
    box; overlapping solids are allowed only at equal voltage.
    """
    if h <= 0:
        raise ValueError("grid spacing must be positive")
    lo = as_vec3(domain[0])
    hi_req = as_vec3(domain[1])
    if np.any(hi_req <= lo):
        raise ValueError("domain upper corner must exceed lower corner")
    dims = tuple(int(np.ceil((hi_req[k] - lo[k]) / h - 1e-9)) + 1
                 for k in range(3))
    hi = lo + (np.array(dims) - 1) * h

    eps = 1e-6 * h
    for el in electrodes:
        b_lo, b_hi = el.shape.bounds()
        if np.any(b_lo < lo + MARGIN_CELLS * h - eps) or \
           np.any(b_hi > hi - MARGIN_CELLS * h + eps):
            raise MarginError(
                "electrode %r needs >= %d cells of margin inside the domain"
                % (el.label, MARGIN_CELLS))

    values = np.zeros(dims)
    mask = np.full(dims, FREE, dtype=np.int16)
    labels = [el.label for el in electrodes]
    voltages = [float(el.voltage) for el in electrodes]

    coords = [lo[k] + h * np.arange(dims[k]) for k in range(3)]
    for idx, el in enumerate(electrodes):
        b_lo, b_hi = el.shape.bounds()
        sl = []
        for k in range(3):
            i0 = max(int(np.floor((b_lo[k] - lo[k]) / h)) - 1, 0)
            i1 = min(int(np.ceil((b_hi[k] - lo[k]) / h)) + 2, dims[k])
            sl.append(slice(i0, i1))
        xs, ys, zs = np.meshgrid(coords[0][sl[0]], coords[1][sl[1]],
                                 coords[2][sl[2]], indexing="ij")
        pts = np.stack([xs, ys, zs], axis=-1)
        inside = el.shape.contains(pts)
        if not np.any(inside):
            continue
        sub_mask = mask[sl[0], sl[1], sl[2]]
        clash = inside & (sub_mask != FREE) & (sub_mask != idx)
        if np.any(clash):
            other = int(sub_mask[clash][0])
            if voltages[other] != voltages[idx]:
                raise GeometryConflictError(
                    "electrodes %r (%g V) and %r (%g V) overlap"
                    % (labels[other], voltages[other], el.label, el.voltage))
            inside &= sub_mask == FREE  # equal voltage: first label wins
        sub_mask[inside] = idx
        values[sl[0], sl[1], sl[2]][inside] = el.voltage

    # grounded outer box
    boundary_idx = len(labels)
    labels.append(BOUNDARY_LABEL)
    voltages.append(0.0)
    for k in range(3):
        face = [slice(None)] * 3
        for edge in (0, -1):
            face[k] = edge
            mask[tuple(face)] = boundary_idx
            values[tuple(face)] = 0.0

    return PotentialGrid(lo, h, values, mask, labels, voltages,
                         solids=list(electrodes))


def optimal_sor_factor(dims):
    """Textbook over-relaxation optimum for Poisson on a box."""
    return 2.0 / (1.0 + np.sin(np.pi / max(dims)))


def solve_laplace(grid, tol=None, max_sweeps=DEFAULT_MAX_SWEEPS,
                  omega=None, first_color=0):
    """Relax the free nodes of a rasterized grid to the Laplace solution.

    Checkerboard-ordered successive over-relaxation; one sweep updates
    the red then the black interior nodes.  Iterates until the largest
    per-node update in a sweep falls below ``tol`` (default 1e-6 times
    the largest electrode voltage magnitude).

    Returns
    -------
    (PotentialGrid, int)
        The converged grid (a copy; fixed nodes untouched) and the
        number of sweeps used.

    Raises
    ------
    ConvergenceError
        If ``max_sweeps`` is exhausted; carries the last residual.
    """
    free = grid.mask == FREE
    if not np.any(free):
        raise ValueError("grid has no free nodes to solve")
    vmax = max((abs(v) for v in grid.voltages), default=0.0)
    if tol is None:
        tol = 1e-6 * vmax if vmax > 0 else 1e-12
    if omega is None:
        omega = optimal_sor_factor(grid.dims)

    out = grid.copy()
    phi = out.values
    interior = (slice(1, -1),) * 3
    free_int = free[interior]
    ii, jj, kk = np.indices(free_int.shape)
    parity = (ii + jj + kk) % 2
    color_masks = [free_int & (parity == (first_color + c) % 2)
                   for c in (0, 1)]

    sweeps = 0
    residual = np.inf
    while sweeps < max_sweeps:
        sweeps += 1
        residual = 0.0
        for m in color_masks:
            nb = (phi[:-2, 1:-1, 1:-1] + phi[2:, 1:-1, 1:-1] +
                  phi[1:-1, :-2, 1:-1] + phi[1:-1, 2:, 1:-1] +
                  phi[1:-1, 1:-1, :-2] + phi[1:-1, 1:-1, 2:])
            delta = omega * (nb / 6.0 - phi[interior])
            upd = delta[m]
            if upd.size:
                residual = max(residual, float(np.abs(upd).max()))
                phi[interior][m] += upd
        if residual < tol:
            out.meta.update(sweeps=sweeps, residual=residual, tol=tol,
                            omega=omega, solved=True)
            return out, sweeps

    raise ConvergenceError(
        "SOR did not reach tol=%.3g in %d sweeps (residual %.3g)"
        % (tol, max_sweeps, residual), residual=residual, sweeps=sweeps)


# ---------------------------------------------------------------------------
# sampling

def _fractional_index(grid, r):
    r = np.asarray(r, dtype=float)
    return (r - grid.origin) / grid.h


def sample_potential(grid, r, check=True):
    """Trilinear interpolation of the grid potential at r (..., 3).

    Raises DomainError outside the box and SingularPointError when the
    surrounding cell lies entirely inside an electrode.
    """
    f = _fractional_index(grid, r)
    dims = np.array(grid.dims)
    if check:
        if np.any(f < -1e-9) or np.any(f > dims - 1 + 1e-9):
            raise DomainError("sample point outside grid domain")
    f = np.clip(f, 0.0, dims - 1.0)
    i0 = np.minimum(f.astype(int), dims - 2)
    w = f - i0
    ix, iy, iz = i0[..., 0], i0[..., 1], i0[..., 2]
    wx, wy, wz = w[..., 0], w[..., 1], w[..., 2]

    if check:
        boundary_idx = len(grid.labels) - 1
        corner_mask = grid.mask[ix, iy, iz]
        all_electrode = (corner_mask >= 0) & (corner_mask != boundary_idx)
        for dx in (0, 1):
            for dy in (0, 1):
                for dz in (0, 1):
                    cm = grid.mask[ix + dx, iy + dy, iz + dz]
                    all_electrode &= (cm >= 0) & (cm != boundary_idx)
        if np.any(all_electrode):
            raise SingularPointError("sample point inside an electrode")

    v = grid.values
    c00 = v[ix, iy, iz] * (1 - wx) + v[ix + 1, iy, iz] * wx
    c01 = v[ix, iy, iz + 1] * (1 - wx) + v[ix + 1, iy, iz + 1] * wx
    c10 = v[ix, iy + 1, iz] * (1 - wx) + v[ix + 1, iy + 1, iz] * wx
    c11 = v[ix, iy + 1, iz + 1] * (1 - wx) + v[ix + 1, iy + 1, iz + 1] * wx
    c0 = c00 * (1 - wy) + c10 * wy
    c1 = c01 * (1 - wy) + c11 * wy
    return c0 * (1 - wz) + c1 * wz


def sample_efield(grid, r, check=True):
    """E = -grad(phi) from central differences of the interpolant.

    The stencil step is h/2, so the result varies continuously across
    cell boundaries.  Points must keep h/2 clearance from the box.
    """
    r = np.asarray(r, dtype=float)
    step = grid.h / 2.0
    if check:
        f = _fractional_index(grid, r)
        if np.any(f < 0.5 - 1e-9) or np.any(f > np.array(grid.dims) - 1.5 + 1e-9):
            raise DomainError("E-field stencil leaves the grid domain")
        sample_potential(grid, r, check=True)  # inside-electrode guard
    e = np.empty(r.shape)
    for k in range(3):
        dr = np.zeros(3)
        dr[k] = step
        e[..., k] = (sample_potential(grid, r - dr, check=False) -
                     sample_potential(grid, r + dr, check=False)) / (2.0 * step)
    return e


class GridField:
    """FieldSource adapter for a solved grid.

    Never raises during evaluation (integration probes every step);
    use ``in_domain``/``strikes`` masks for termination tests instead.
    Strike tests use the original solids when available and fall back
    to the node mask otherwise.
    """

    def __init__(self, grid):
        self.grid = grid

    def potential(self, r, check=False):
        return sample_potential(self.grid, r, check=check)

    def efield(self, r, check=False):
        return sample_efield(self.grid, r, check=check)

    def in_domain(self, r):
        f = _fractional_index(self.grid, r)
        dims = np.array(self.grid.dims)
        return np.all((f >= 0.5) & (f <= dims - 1.5), axis=-1)

    def strikes(self, r):
        r = np.asarray(r, dtype=float)
        if self.grid.solids:
            hit = np.zeros(r.shape[:-1], dtype=bool)
            for el in self.grid.solids:
                hit |= el.shape.contains(r)
            return hit
        # fall back to the rasterized mask at the nearest node
        f = np.clip(np.round(_fractional_index(self.grid, r)).astype(int),
                    0, np.array(self.grid.dims) - 1)
        m = self.grid.mask[f[..., 0], f[..., 1], f[..., 2]]
        return (m >= 0) & (m != len(self.grid.labels) - 1)


# ---------------------------------------------------------------------------
# grid file format

GRID_MAGIC = "penning-grid v1"
_VALUES_PER_LINE = 8


def save_grid(grid, path):
    """Write the grid in the text format: header, node potentials in
    x-fastest order, then one mask token per node ('.' free, electrode
    index otherwise).  Floats use repr for a bit-exact round-trip."""
    with open(path, "w") as f:
        f.write(GRID_MAGIC + "\n")
        f.write("origin %r %r %r\n" % tuple(float(x) for x in grid.origin))
        f.write("spacing %r\n" % (float(grid.h),))
        f.write("dims %d %d %d\n" % grid.dims)
        flat = grid.values.ravel(order="F")
        for i in range(0, flat.size, _VALUES_PER_LINE):
            f.write(" ".join(repr(float(x))
                             for x in flat[i:i + _VALUES_PER_LINE]) + "\n")
        tokens = np.where(grid.mask.ravel(order="F") == FREE, ".",
                          grid.mask.ravel(order="F").astype(str))
        for i in range(0, tokens.size, 32):
            f.write(" ".join(tokens[i:i + 32]) + "\n")


def load_grid(path):
    """Read a grid written by :func:`save_grid`.

    Electrode labels are not part of the format; loaded grids expose
    synthesized labels ``electrode-<i>`` (the final index keeps the
    "boundary" name) with voltages recovered from the pinned nodes.
    """
    with open(path) as f:
        if f.readline().strip() != GRID_MAGIC:
            raise ValueError("%s: not a %r file" % (path, GRID_MAGIC))
        origin = [float(t) for t in f.readline().split()[1:4]]
        h = float(f.readline().split()[1])
        dims = tuple(int(t) for t in f.readline().split()[1:4])
        n = dims[0] * dims[1] * dims[2]
        values = np.empty(n)
        got = 0
        while got < n:
            parts = f.readline().split()
            values[got:got + len(parts)] = [float(t) for t in parts]
            got += len(parts)
        mask = np.empty(n, dtype=np.int16)
        got = 0
        while got < n:
            parts = f.readline().split()
            mask[got:got + len(parts)] = [FREE if t == "." else int(t)
                                          for t in parts]
            got += len(parts)
    values = values.reshape(dims, order="F")
    mask = mask.reshape(dims, order="F")
    n_idx = int(mask.max()) + 1 if mask.max() >= 0 else 0
    labels, voltages = [], []
    for i in range(n_idx):
        sel = mask == i
        labels.append(BOUNDARY_LABEL if i == n_idx - 1 else "electrode-%d" % i)
        voltages.append(float(values[sel][0]) if np.any(sel) else 0.0)
    return PotentialGrid(origin, h, values, mask, labels, voltages)
