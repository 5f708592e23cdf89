"""Synthetic advection-diffusion snapshot generation and scaling utilities.

A 2D regular-grid explicit finite-difference solver (first-order upwind
advection in flux form, second-order central diffusion, sinusoidal point
source) stands in for the full CFD model. Each time step is vectorised
into one row of the snapshot matrix: tracer nodes, then velocity nodes.
"""

import warnings
from dataclasses import dataclass, field, replace

import numpy as np

from . import romf
from .errors import (
    EmptyInput,
    InvalidConfig,
    NonFiniteInput,
    ShapeMismatch,
    StabilityViolation,
)

FIELD_NAMES = ("tracer", "vel_x", "vel_y")


@dataclass(frozen=True)
class GeneratorConfig:
    """Parameters of the synthetic solver run.

    ``dt`` must satisfy the explicit-scheme stability bounds
    ``dt <= min(dx, dy) / max|u|`` and ``dt <= min(dx, dy)^2 / (4 kappa)``.
    ``source_period`` is the period (seconds) of the sinusoidal background
    pollution pulse injected at ``source_center``; the source term is
    ``amplitude * (1 + sin(2 pi t / period)) / 2`` so it stays nonnegative.
    """

    grid_nx: int = 32
    grid_ny: int = 32
    dx: float = 1.0
    dy: float = 1.0
    dt: float = 0.2
    n_steps: int = 600
    kappa: float = 0.02
    velocity_mode: str = "rotating"  # "uniform" | "rotating"
    u0: float = 2.5
    source_center: tuple = (8, 8)  # (ix, iy)
    source_amplitude: float = 1.0
    source_period: float = 7.4
    seed: int = 0
    boundary: str = "periodic"  # "periodic" | "zero_gradient"
    modulate_velocity: bool = False
    init_amplitude: float = 0.0  # scale of the seeded random initial tracer

    def validate(self):
        if self.grid_nx < 2 or self.grid_ny < 2:
            raise InvalidConfig("grid_nx and grid_ny must be >= 2")
        if self.dx <= 0 or self.dy <= 0 or self.dt <= 0:
            raise InvalidConfig("dx, dy and dt must be positive")
        if self.n_steps < 1:
            raise InvalidConfig("n_steps must be >= 1")
        if self.kappa < 0:
            raise InvalidConfig("kappa must be >= 0")
        if self.source_amplitude < 0:
            raise InvalidConfig("source_amplitude must be >= 0")
        if self.source_period <= 0:
            raise InvalidConfig("source_period must be positive")
        if self.init_amplitude < 0:
            raise InvalidConfig("init_amplitude must be >= 0")
        if self.velocity_mode not in ("uniform", "rotating"):
            raise InvalidConfig(f"unknown velocity_mode {self.velocity_mode!r}")
        if self.boundary not in ("periodic", "zero_gradient"):
            raise InvalidConfig(f"unknown boundary {self.boundary!r}")
        ix, iy = self.source_center
        if not (0 <= ix < self.grid_nx and 0 <= iy < self.grid_ny):
            raise InvalidConfig("source_center outside the grid")
        h = min(self.dx, self.dy)
        speed = abs(self.u0)
        if speed > 0 and self.dt > h / speed:
            raise StabilityViolation(
                f"dt={self.dt} violates advection CFL bound {h / speed:.6g}"
            )
        if self.kappa > 0 and self.dt > h * h / (4.0 * self.kappa):
            raise StabilityViolation(
                f"dt={self.dt} violates diffusion bound "
                f"{h * h / (4.0 * self.kappa):.6g}"
            )


@dataclass(frozen=True)
class SnapshotMatrix:
    """n x m matrix of vectorised model states, rows ordered in time."""

    data: np.ndarray
    field_names: tuple = FIELD_NAMES
    nodes_per_field: int = field(default=0)

    def __post_init__(self):
        data = np.asarray(self.data, dtype=np.float64)
        object.__setattr__(self, "data", data)
        object.__setattr__(self, "field_names", tuple(self.field_names))
        if data.ndim != 2:
            raise ShapeMismatch("snapshot data must be 2-dimensional")
        if data.shape[0] < 2 or data.shape[1] < 1:
            raise InvalidConfig("snapshot matrix needs n >= 2 rows, m >= 1 columns")
        if not np.all(np.isfinite(data)):
            raise NonFiniteInput("snapshot matrix contains NaN/Inf")
        nodes = self.nodes_per_field or data.shape[1] // len(self.field_names)
        if nodes * len(self.field_names) != data.shape[1]:
            raise ShapeMismatch(
                f"{data.shape[1]} columns do not split into "
                f"{len(self.field_names)} equal fields"
            )
        object.__setattr__(self, "nodes_per_field", nodes)
        if data.shape[0] >= data.shape[1]:
            warnings.warn(
                "snapshot matrix has n >= m; the expected regime is n < m",
                stacklevel=2,
            )

    @property
    def n(self):
        return self.data.shape[0]

    @property
    def m(self):
        return self.data.shape[1]

    def field_slice(self, name):
        idx = self.field_names.index(name)
        lo = idx * self.nodes_per_field
        return slice(lo, lo + self.nodes_per_field)

    def field(self, name):
        """Return the n x nodes submatrix of one named field."""
        return self.data[:, self.field_slice(name)]

    def column_labels(self):
        return [
            f"{name}:{node}"
            for name in self.field_names
            for node in range(self.nodes_per_field)
        ]

    def save(self, path):
        arrays = {name: self.field(name) for name in self.field_names}
        romf.write_arrays(path, arrays)

    @classmethod
    def load(cls, path):
        arrays = romf.read_arrays(path)
        names = tuple(arrays)
        data = np.hstack([arrays[name] for name in names])
        nodes = next(iter(arrays.values())).shape[1]
        return cls(data=data, field_names=names, nodes_per_field=nodes)

    def to_csv(self, path):
        header = ",".join(self.column_labels())
        np.savetxt(path, self.data, delimiter=",", header=header,
                   comments="", fmt="%.17g")


def _velocity_field(config):
    """Prescribed velocity on the grid, shape (ny, nx) per component."""
    ny, nx = config.grid_ny, config.grid_nx
    if config.velocity_mode == "uniform":
        vx = np.full((ny, nx), float(config.u0))
        vy = np.zeros((ny, nx))
        return vx, vy
    # solid-body rotation about the domain centre, peak speed u0
    x = np.arange(nx) * config.dx
    y = np.arange(ny) * config.dy
    xc, yc = x.mean(), y.mean()
    xx, yy = np.meshgrid(x - xc, y - yc)
    rmax = np.sqrt(xx**2 + yy**2).max()
    omega = config.u0 / rmax if rmax > 0 else 0.0
    return -omega * yy, omega * xx


def _source_factor(t, period):
    return 0.5 * (1.0 + np.sin(2.0 * np.pi * t / period))


def _pad(arr, boundary):
    mode = "wrap" if boundary == "periodic" else "edge"
    return np.pad(arr, 1, mode=mode)


def _advance(c, vx, vy, config):
    """One explicit step: upwind advection + central diffusion, flux form."""
    dx, dy, dt, kappa = config.dx, config.dy, config.dt, config.kappa
    cp = _pad(c, config.boundary)
    vxp = _pad(vx, config.boundary)
    vyp = _pad(vy, config.boundary)

    # x faces: (ny, nx + 1)
    ufx = 0.5 * (vxp[1:-1, :-1] + vxp[1:-1, 1:])
    cl, cr = cp[1:-1, :-1], cp[1:-1, 1:]
    flux_x = np.where(ufx > 0.0, cl, cr) * ufx
    dcdx_flux = kappa * (cr - cl) / dx

    # y faces: (ny + 1, nx)
    ufy = 0.5 * (vyp[:-1, 1:-1] + vyp[1:, 1:-1])
    cb, ct = cp[:-1, 1:-1], cp[1:, 1:-1]
    flux_y = np.where(ufy > 0.0, cb, ct) * ufy
    dcdy_flux = kappa * (ct - cb) / dy

    adv = (flux_x[:, 1:] - flux_x[:, :-1]) / dx + (
        flux_y[1:, :] - flux_y[:-1, :]
    ) / dy
    diff = (dcdx_flux[:, 1:] - dcdx_flux[:, :-1]) / dx + (
        dcdy_flux[1:, :] - dcdy_flux[:-1, :]
    ) / dy
    return c + dt * (diff - adv)


def generate(config, initial_tracer=None):
    """Run the solver and return the snapshot matrix (one row per step).

    Row t holds the state at time t*dt: tracer first, then vel_x, vel_y.
    Deterministic given the config (the seed drives the optional random
    initial tracer). Raises StabilityViolation / InvalidConfig on bad
    configs.
    """
    config.validate()
    ny, nx = config.grid_ny, config.grid_nx
    rng = np.random.default_rng(np.random.PCG64(config.seed))
    if initial_tracer is not None:
        c = np.array(initial_tracer, dtype=np.float64)
        if c.shape != (ny, nx):
            raise ShapeMismatch(
                f"initial tracer shape {c.shape} != grid ({ny}, {nx})"
            )
        if np.any(c < 0):
            raise InvalidConfig("initial tracer must be nonnegative")
    else:
        c = config.init_amplitude * rng.random((ny, nx))

    vx0, vy0 = _velocity_field(config)
    ix, iy = config.source_center
    rows = np.empty((config.n_steps, 3 * nx * ny))
    for step in range(config.n_steps):
        t = step * config.dt
        s = _source_factor(t, config.source_period) if config.modulate_velocity else 1.0
        vx, vy = vx0 * s, vy0 * s
        rows[step] = vectorise([c, vx, vy])
        source = np.zeros((ny, nx))
        source[iy, ix] = config.source_amplitude * _source_factor(
            t, config.source_period
        )
        c = _advance(c, vx, vy, config) + config.dt * source
    return SnapshotMatrix(data=rows, field_names=FIELD_NAMES,
                          nodes_per_field=nx * ny)


def vectorise(fields):
    """Concatenate per-node field arrays into one state row.

    Fields are flattened in C order; all fields must share the node count.
    """
    flats = [np.asarray(f, dtype=np.float64).ravel() for f in fields]
    if not flats:
        raise EmptyInput("no fields to vectorise")
    nodes = flats[0].size
    if any(f.size != nodes for f in flats):
        raise ShapeMismatch("fields have differing node counts")
    return np.concatenate(flats)


def devectorise(row, n_fields):
    """Split a state row back into its per-field node arrays."""
    row = np.asarray(row, dtype=np.float64).ravel()
    if n_fields < 1:
        raise EmptyInput("n_fields must be >= 1")
    if row.size % n_fields != 0:
        raise ShapeMismatch(
            f"row of length {row.size} does not split into {n_fields} fields"
        )
    return list(row.reshape(n_fields, -1))


@dataclass(frozen=True)
class MinMaxScaler:
    """Column-affine map onto [lo, hi]; constant columns map to the midpoint."""

    mins: np.ndarray
    maxs: np.ndarray
    lo: float = 0.0
    hi: float = 1.0

    def _span(self):
        return self.maxs - self.mins

    def _check(self, data):
        data = np.asarray(data, dtype=np.float64)
        one_d = data.ndim == 1
        if one_d:
            data = data[None, :]
        if data.shape[-1] != self.mins.size:
            raise ShapeMismatch(
                f"expected {self.mins.size} columns, got {data.shape[-1]}"
            )
        return data, one_d

    def scale(self, data):
        data, one_d = self._check(data)
        span = self._span()
        safe = np.where(span > 0, span, 1.0)
        scaled = self.lo + (data - self.mins) * (self.hi - self.lo) / safe
        mid = 0.5 * (self.lo + self.hi)
        out = np.where(span > 0, scaled, mid)
        return out[0] if one_d else out

    def invert(self, data):
        data, one_d = self._check(data)
        span = self._span()
        safe = np.where(span > 0, span, 1.0)
        raw = self.mins + (data - self.lo) * safe / (self.hi - self.lo)
        out = np.where(span > 0, raw, self.mins)
        return out[0] if one_d else out

    def save(self, path):
        romf.write_arrays(path, {
            "mins": self.mins,
            "maxs": self.maxs,
            "range": np.array([self.lo, self.hi]),
        })

    @classmethod
    def load(cls, path):
        arrays = romf.read_arrays(path)
        lo, hi = arrays["range"]
        return cls(mins=arrays["mins"], maxs=arrays["maxs"], lo=lo, hi=hi)


def fit_scaler(data, lo=0.0, hi=1.0):
    """Fit per-column min/max from rows of ``data``."""
    data = np.asarray(data, dtype=np.float64)
    if data.ndim == 1:
        data = data[None, :]
    if data.shape[0] < 1 or data.size == 0:
        raise EmptyInput("cannot fit a scaler on empty data")
    if not hi > lo:
        raise InvalidConfig("scaler range needs hi > lo")
    return MinMaxScaler(
        mins=data.min(axis=0), maxs=data.max(axis=0), lo=float(lo), hi=float(hi)
    )


def default_config(**overrides):
    """The desk-scale default generator configuration."""
    return replace(GeneratorConfig(), **overrides)
