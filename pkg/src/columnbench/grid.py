"""Grid geometry, prognostic state, scenario generation and source integration.

Storage is column-major in z: every per-field array has shape
``(n_columns, nz)`` so that all levels of one column are contiguous.
Column ``c`` sits at ``(i, j) = divmod(c, ny)``.
"""
from dataclasses import dataclass, field, replace
from enum import Enum
import math

import numpy as np
from scipy.ndimage import gaussian_filter

from .errors import InvalidArgument
from .thermo import P0, KAPPA, air_density, qsat_liquid


class Mode(str, Enum):
    WARM = "warm"
    COLD = "cold"


WARM_ROSTER = ("qv", "qc", "qr", "nc", "nr")

# The cold roster is a stand-in with the right cardinality, not a published field list.
COLD_ROSTER = (
    "qv", "qc", "qr", "qi", "qs", "qg",
    "nc", "nr", "ni", "ns", "ng",
    "mu_r", "mu_i", "mu_s",
    "aer_accum", "aer_coarse", "aer_cloud", "aer_rain",
)

FIELD_KINDS = {
    "qv": "mass", "qc": "mass", "qr": "mass", "qi": "mass", "qs": "mass", "qg": "mass",
    "nc": "number", "nr": "number", "ni": "number", "ns": "number", "ng": "number",
    "mu_r": "shape", "mu_i": "shape", "mu_s": "shape",
    "aer_accum": "aerosol", "aer_coarse": "aerosol", "aer_cloud": "aerosol", "aer_rain": "aerosol",
}

WATER_FIELDS = ("qv", "qc", "qr", "qi", "qs", "qg")


@dataclass(frozen=True)
class Grid:
    nx: int
    ny: int
    nz: int = 60
    dz: float = 100.0

    @property
    def n_columns(self):
        return self.nx * self.ny

    @property
    def n_points(self):
        return self.nx * self.ny * self.nz

    @property
    def heights(self):
        """Mid-level heights above the surface (m)."""
        return (np.arange(self.nz) + 0.5) * self.dz


def build_grid(nx, ny, nz=60, dz=100.0):
    for name, value in (("nx", nx), ("ny", ny), ("nz", nz)):
        if int(value) != value or value < 1:
            raise InvalidArgument(f"{name} must be a positive integer, got {value!r}")
    if not dz > 0:
        raise InvalidArgument(f"dz must be positive, got {dz!r}")
    return Grid(int(nx), int(ny), int(nz), float(dz))


@dataclass(frozen=True)
class MoistureConfig:
    mode: Mode
    field_roster: tuple

    def __post_init__(self):
        expected = WARM_ROSTER if self.mode is Mode.WARM else COLD_ROSTER
        if tuple(self.field_roster) != expected:
            raise InvalidArgument(f"{self.mode.value} roster must be {expected}")

    @classmethod
    def warm(cls):
        return cls(Mode.WARM, WARM_ROSTER)

    @classmethod
    def cold(cls):
        return cls(Mode.COLD, COLD_ROSTER)

    @classmethod
    def for_mode(cls, mode):
        return cls.warm() if Mode(mode) is Mode.WARM else cls.cold()

    @property
    def n_fields(self):
        return len(self.field_roster)

    def index(self, name):
        try:
            return self.field_roster.index(name)
        except ValueError:
            raise InvalidArgument(f"field {name!r} is not in the {self.mode.value} roster") from None

    def slot_map(self):
        """Position of every cold-roster slot in this roster, -1 when absent."""
        return np.array(
            [self.field_roster.index(n) if n in self.field_roster else -1 for n in COLD_ROSTER],
            dtype=np.int64,
        )


@dataclass(frozen=True)
class Sounding:
    """Smooth reference profile used by :func:`init_state`."""

    surface_pressure: float = 1.0e5
    scale_height: float = 8000.0
    theta_surface: float = 288.0
    theta_lapse: float = 0.003
    rh_clear: float = 0.7
    rh_cloud: float = 1.02
    qc_peak: float = 2.0e-3
    nc_cloud: float = 1.0e8
    qr_peak: float = 5.0e-4
    drizzle_drop_mass: float = 6.5e-8  # kg, ~0.5 mm drop
    qi_peak: float = 1.0e-4
    ni_cloud: float = 1.0e5
    qs_peak: float = 2.0e-4
    ns_cloud: float = 1.0e4
    mu_rain: float = 1.0
    aerosol_accum: float = 1.0e-9
    aerosol_coarse: float = 1.0e-10
    aerosol_scale_height: float = 2000.0

    def pressure(self, z):
        return self.surface_pressure * np.exp(-np.asarray(z) / self.scale_height)

    def theta(self, z):
        return self.theta_surface + self.theta_lapse * np.asarray(z)


@dataclass
class ColumnView:
    """Read-only slice of one column plus the environment it sits in."""

    q: np.ndarray  # (n_fields, nz)
    theta: np.ndarray  # (nz,)
    pressure: np.ndarray
    rho: np.ndarray
    dz: float


@dataclass
class ModelState:
    grid: Grid
    config: MoistureConfig
    q: np.ndarray  # (n_fields, n_columns, nz)
    theta: np.ndarray  # (n_columns, nz)
    pressure_profile: np.ndarray  # (nz,)
    rho_profile: np.ndarray  # (nz,)
    time: float = 0.0

    def __post_init__(self):
        g = self.grid
        if self.q.shape != (self.config.n_fields, g.n_columns, g.nz):
            raise InvalidArgument(f"q has shape {self.q.shape}, grid expects "
                                  f"{(self.config.n_fields, g.n_columns, g.nz)}")
        if self.theta.shape != (g.n_columns, g.nz):
            raise InvalidArgument(f"theta has shape {self.theta.shape}")
        if self.pressure_profile.shape != (g.nz,) or self.rho_profile.shape != (g.nz,):
            raise InvalidArgument("environment profiles must have length nz")

    def field(self, name):
        """3-D ``(nx, ny, nz)`` view of one roster field."""
        g = self.grid
        return self.q[self.config.index(name)].reshape(g.nx, g.ny, g.nz)

    def column(self, c):
        return ColumnView(self.q[:, c, :], self.theta[c], self.pressure_profile,
                          self.rho_profile, self.grid.dz)

    def copy(self):
        return replace(self, q=self.q.copy(), theta=self.theta.copy())

    def column_water(self):
        """Water path of every column (kg/m^2)."""
        idx = [self.config.index(n) for n in WATER_FIELDS if n in self.config.field_roster]
        mixing = self.q[idx].sum(axis=0)
        return (mixing * self.rho_profile).sum(axis=1) * self.grid.dz


def _cloud_mask(grid, cloudy_fraction, rng, layout):
    n = grid.n_columns
    draws = rng.random(n)
    noise = rng.standard_normal((grid.nx, grid.ny))
    partial = 0.0 < cloudy_fraction < 1.0 and n >= 2
    if layout == "independent":
        mask = draws < cloudy_fraction
        # a partly cloudy sky always has at least one column of each kind
        if partial and not mask.any():
            mask[np.argmin(draws)] = True
        elif partial and mask.all():
            mask[np.argmax(draws)] = False
        return mask
    if layout in ("clustered", "deck"):
        sigma = max(1.0, min(grid.nx, grid.ny) / 8.0)
        smooth = gaussian_filter(noise, sigma=sigma, mode="wrap")
        if layout == "deck":
            # the edge of a cloud deck: patches on top of an east-west gradient
            spread = smooth.std()
            smooth = smooth / spread if spread > 0 else smooth
            smooth = smooth + 2.0 * np.linspace(-1.0, 1.0, grid.nx)[:, None]
        smooth = smooth.ravel()
        n_cloudy = int(round(cloudy_fraction * n))
        if partial:
            n_cloudy = min(max(n_cloudy, 1), n - 1)
        mask = np.zeros(n, dtype=bool)
        if n_cloudy:
            # stable sort keeps ties deterministic
            mask[np.argsort(-smooth, kind="stable")[:n_cloudy]] = True
        return mask
    raise InvalidArgument(f"unknown cloud layout {layout!r}")


def init_state(grid, config, cloudy_fraction, seed, sounding=None, layout="independent"):
    """Build a synthetic stratus-like scenario.

    Clear columns carry only the reference vapour and aerosol profiles.
    Cloudy columns get a liquid-water bubble between levels ``nz // 4`` and
    ``3 * nz // 5`` (inclusive) with a slightly supersaturated vapour field,
    a drizzle shaft from the bubble top to the surface and, in the cold
    configuration, ice and snow in the sub-freezing part of the bubble.
    With ``layout="independent"`` every column is cloudy with probability
    ``cloudy_fraction``; ``"clustered"`` thresholds a smoothed random field so
    that cloudy columns form contiguous patches, and ``"deck"`` adds a
    large-scale gradient so the patches crowd towards high ``i``. Both
    clustered layouts hit ``round(cloudy_fraction * n_columns)`` exactly.
    A fraction strictly between 0 and 1 always yields at least one cloudy
    and one clear column when the grid has two or more.
    """
    if not 0.0 <= cloudy_fraction <= 1.0:
        raise InvalidArgument(f"cloudy_fraction must lie in [0, 1], got {cloudy_fraction!r}")
    sounding = sounding or Sounding()
    rng = np.random.default_rng(seed)
    nz = grid.nz
    z = grid.heights
    pressure = sounding.pressure(z)
    theta_ref = sounding.theta(z)
    temperature = theta_ref * (pressure / P0) ** KAPPA
    qsat = np.array([qsat_liquid(t, p) for t, p in zip(temperature, pressure)])

    mask = _cloud_mask(grid, cloudy_fraction, rng, layout)
    amplitude = rng.uniform(0.6, 1.4, size=grid.n_columns)

    k0, k1 = nz // 4, (3 * nz) // 5
    band = np.zeros(nz, dtype=bool)
    band[k0:k1 + 1] = True
    shape = np.zeros(nz)
    shape[k0:k1 + 1] = np.sin(math.pi * (np.arange(k1 - k0 + 1) + 1) / (k1 - k0 + 2))

    q = np.zeros((config.n_fields, grid.n_columns, nz))
    cloudy = mask[:, None] & band[None, :]
    q[config.index("qv")] = np.where(cloudy, sounding.rh_cloud, sounding.rh_clear) * qsat
    qc = np.where(cloudy, sounding.qc_peak * amplitude[:, None] * shape[None, :], 0.0)
    q[config.index("qc")] = qc
    q[config.index("nc")] = np.where(qc > 0.0, sounding.nc_cloud, 0.0)
    shaft = np.zeros(nz)
    shaft[:k1 + 1] = (np.arange(k1 + 1) + 1.0) / (k1 + 1.0)
    qr = np.where(mask[:, None], sounding.qr_peak * amplitude[:, None] * shaft[None, :], 0.0)
    q[config.index("qr")] = qr
    q[config.index("nr")] = qr / sounding.drizzle_drop_mass
    if config.mode is Mode.COLD:
        decay = np.exp(-z / sounding.aerosol_scale_height)
        accum = sounding.aerosol_accum * decay
        q[config.index("aer_accum")] = accum
        q[config.index("aer_coarse")] = sounding.aerosol_coarse * decay
        q[config.index("aer_cloud")] = np.where(qc > 0.0, 0.2 * accum[None, :], 0.0)
        q[config.index("mu_r")] = sounding.mu_rain
        frozen = cloudy & (temperature < 273.15)[None, :]
        ice_shape = amplitude[:, None] * shape[None, :]
        q[config.index("qi")] = np.where(frozen, sounding.qi_peak * ice_shape, 0.0)
        q[config.index("ni")] = np.where(frozen, sounding.ni_cloud, 0.0)
        q[config.index("qs")] = np.where(frozen, sounding.qs_peak * ice_shape, 0.0)
        q[config.index("ns")] = np.where(frozen, sounding.ns_cloud, 0.0)

    theta = np.broadcast_to(theta_ref, (grid.n_columns, nz)).copy()
    rho = air_density(pressure, theta_ref)
    return ModelState(grid, config, q, theta, pressure, rho, 0.0)


@dataclass
class SourceBuffer:
    """Tendencies produced by one component for every cell.

    ``values`` holds the roster-field tendencies, ``theta`` the
    potential-temperature tendency. ``surface_flux`` (kg/m^2/s) and ``work``
    are per-column diagnostics; components that do not produce them leave zeros.
    """

    component_index: int
    values: np.ndarray
    theta: np.ndarray
    surface_flux: np.ndarray = None
    work: np.ndarray = None

    def __post_init__(self):
        n_columns = self.values.shape[1]
        if self.surface_flux is None:
            self.surface_flux = np.zeros(n_columns)
        if self.work is None:
            self.work = np.zeros(n_columns)

    @classmethod
    def zeros(cls, state, component_index):
        g = state.grid
        return cls(component_index,
                   np.zeros((state.config.n_fields, g.n_columns, g.nz)),
                   np.zeros((g.n_columns, g.nz)))

    @property
    def extents(self):
        return self.values.shape


def accumulate_sources(buffers):
    """Sum buffers cell by cell in ascending ``component_index`` order.

    The supply order is irrelevant: the summation order is canonical, so the
    result is bitwise reproducible however the components were scheduled.
    """
    buffers = list(buffers)
    if not buffers:
        raise InvalidArgument("no source buffers to accumulate")
    indices = [b.component_index for b in buffers]
    if len(set(indices)) != len(indices):
        raise InvalidArgument(f"duplicate component_index in {indices}")
    shape = buffers[0].extents
    for b in buffers:
        if b.extents != shape or b.theta.shape != buffers[0].theta.shape:
            raise InvalidArgument(f"buffer {b.component_index} has extents {b.extents}, expected {shape}")
    ordered = sorted(buffers, key=lambda b: b.component_index)
    total = SourceBuffer(-1, ordered[0].values.copy(), ordered[0].theta.copy(),
                         ordered[0].surface_flux.copy(), ordered[0].work.copy())
    for b in ordered[1:]:
        total.values += b.values
        total.theta += b.theta
        total.surface_flux += b.surface_flux
        total.work += b.work
    return total


@dataclass
class ClipReport:
    """Mass removed by the positivity clip, summed over cells, per field."""

    clipped: dict = field(default_factory=dict)

    @property
    def total(self):
        return sum(self.clipped.values())


def integrate(state, total, dt):
    """Forward-Euler update ``q' = max(q + dt*s, 0)`` with a clip audit."""
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt!r}")
    if total.extents != state.q.shape or total.theta.shape != state.theta.shape:
        raise InvalidArgument(f"source extents {total.extents} do not match state {state.q.shape}")
    raw = state.q + dt * total.values
    deficit = np.where(raw < 0.0, -raw, 0.0)
    q = np.maximum(raw, 0.0)
    report = ClipReport({name: float(deficit[i].sum())
                         for i, name in enumerate(state.config.field_roster)})
    theta = state.theta + dt * total.theta
    new = replace(state, q=q, theta=theta, time=state.time + dt)
    return new, report
