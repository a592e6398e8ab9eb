"""Column microphysics kernel.

The process formulas are deliberately simple stand-ins. What they preserve is
the computational structure of a bulk moment scheme: gamma size distributions
diagnosed from mass and number, process rates that switch on only under
particular conditions (so columns differ in cost), and coupling restricted to
the vertical (so columns are independent).

The numeric core is compiled with numba and releases the GIL, which lets the
executor run columns on several threads at once.
"""
from dataclasses import dataclass
import math
from typing import NamedTuple

import numpy as np
from numba import njit

from .errors import InvalidArgument, InvalidMode
from .grid import COLD_ROSTER, Mode, MoistureConfig
from .thermo import CP, LF, LS, LV, P0, KAPPA, qsat_ice, qsat_liquid

# Slot positions in the cold roster; a config maps each slot to its own
# roster position (or -1) through MoistureConfig.slot_map().
QV, QC, QR, QI, QS, QG, NC, NR, NI, NS, NG, MUR, MUI, MUS, AACC, ACOA, ACLD, ARAIN = range(18)
assert len(COLD_ROSTER) == 18


class Constants(NamedTuple):
    k_auto: float = 1.0e-3  # 1/s
    qc_crit: float = 1.0e-3  # kg/kg
    k_acc: float = 2.2
    tau_cond: float = 20.0  # s
    tau_frz: float = 100.0  # s
    tau_dep: float = 100.0  # s
    tau_melt: float = 50.0  # s
    T_frz: float = 273.15  # K
    T_melt: float = 273.15  # K
    a: float = 841.99  # rain fall-speed coefficient
    b: float = 0.8
    rho_w: float = 1000.0  # kg/m^3
    eps: float = 1.0e-12
    mu_rain: float = 0.0  # rain shape when the roster has no shape field
    a_ice: float = 700.0
    b_ice: float = 1.0
    rho_ice: float = 500.0
    a_snow: float = 11.72
    b_snow: float = 0.41
    rho_snow: float = 100.0
    a_graupel: float = 19.3
    b_graupel: float = 0.37
    rho_graupel: float = 400.0
    m_rain0: float = 2.68e-10  # mass of a new 80 um raindrop (kg)
    m_ice0: float = 1.0e-12  # mass of a new ice crystal (kg)
    v_fall_max: float = 20.0  # m/s


DEFAULT_CONSTANTS = Constants()


def make_constants(overrides=None):
    overrides = dict(overrides or {})
    unknown = set(overrides) - set(Constants._fields)
    if unknown:
        raise InvalidArgument(f"unknown microphysics constants: {sorted(unknown)}")
    return Constants(**{k: float(v) for k, v in overrides.items()})


# ---------------------------------------------------------------------------
# Size distribution
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def _slope(q, n, mu, rho_air, rho_p):
    ratio = math.exp(math.lgamma(mu + 4.0) - math.lgamma(mu + 1.0))
    return ((math.pi / 6.0) * rho_p * n * ratio / (rho_air * q)) ** (1.0 / 3.0)


@dataclass(frozen=True)
class ParticleDistribution:
    """Gamma distribution ``n(D) = N0 D^mu exp(-lambda D)``.

    An empty distribution has ``N0 = lam = 0`` and signals that no process
    involving this category should be evaluated.
    """

    N0: float
    mu: float
    lam: float

    @property
    def empty(self):
        return self.lam == 0.0


def diagnose_psd(q, N, mu, rho_air, rho_particle=1000.0, eps=1.0e-12):
    """Diagnose slope and intercept from mass ``q`` (kg/kg) and number ``N`` (1/kg).

    ``N0`` is per unit volume, hence the factor ``rho_air``.
    """
    if q < 0 or N < 0:
        raise InvalidArgument(f"q and N must be non-negative, got q={q!r}, N={N!r}")
    if mu < 0:
        raise InvalidArgument(f"mu must be non-negative, got {mu!r}")
    if q < eps or N < eps:
        return ParticleDistribution(0.0, mu, 0.0)
    lam = _slope(q, N, mu, rho_air, rho_particle)
    n0 = N * rho_air * lam ** (mu + 1.0) / math.gamma(mu + 1.0)
    return ParticleDistribution(n0, mu, lam)


# ---------------------------------------------------------------------------
# Process rates
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def _warm_rates(qv, qc, qr, T, p, k):
    cond = 0.0
    auto = 0.0
    acc = 0.0
    work = 0.0
    qs = qsat_liquid(T, p)
    if qv > qs:
        cond = (qv - qs) / k.tau_cond
        work += 1.0
    if qc > k.qc_crit:
        auto = k.k_auto * (qc - k.qc_crit)
        work += 1.0
    if qc > k.eps and qr > k.eps:
        acc = k.k_acc * qc * qr ** 0.875
        work += 1.0
    return cond, auto, acc, work


@njit(nogil=True, cache=True)
def _cold_rates(qv, qr, qi, qs, qg, T, p, k):
    frz = 0.0
    dep = 0.0
    mi = 0.0
    ms = 0.0
    mg = 0.0
    work = 0.0
    if T < k.T_frz:
        if qr > k.eps:
            frz = qr / k.tau_frz
            work += 1.0
        qsi = qsat_ice(T, p)
        if qv > qsi:
            dep = (qv - qsi) / k.tau_dep
            work += 1.0
    if T > k.T_melt:
        if qi > k.eps:
            mi = qi / k.tau_melt
            work += 1.0
        if qs > k.eps:
            ms = qs / k.tau_melt
            work += 1.0
        if qg > k.eps:
            mg = qg / k.tau_melt
            work += 1.0
    return frz, dep, mi, ms, mg, work


@dataclass(frozen=True)
class Transfer:
    process: str
    source: str
    destination: str
    rate: float  # kg/kg/s


@dataclass(frozen=True)
class ProcessRates:
    """Mass transfers between roster fields plus the matching number tendencies."""

    transfers: tuple
    number: dict
    work: float

    def __getitem__(self, process):
        return sum(t.rate for t in self.transfers if t.process == process)

    def net(self):
        """Net tendency per field; sums to zero over fields by construction."""
        out = {}
        for t in self.transfers:
            out[t.source] = out.get(t.source, 0.0) - t.rate
            out[t.destination] = out.get(t.destination, 0.0) + t.rate
        return out


@dataclass(frozen=True)
class LevelState:
    qv: float = 0.0
    qc: float = 0.0
    qr: float = 0.0
    nc: float = 0.0
    nr: float = 0.0
    theta: float = 288.0
    p: float = 1.0e5
    qi: float = 0.0
    qs: float = 0.0
    qg: float = 0.0
    ni: float = 0.0
    ns: float = 0.0
    ng: float = 0.0

    @property
    def temperature(self):
        return self.theta * (self.p / P0) ** KAPPA


def _ratio(n, q):
    return n / q if q > 0 else 0.0


def warm_rates(level, constants=DEFAULT_CONSTANTS):
    """Condensation, autoconversion and accretion at one level (unlimited)."""
    k = constants
    cond, auto, acc, work = _warm_rates(level.qv, level.qc, level.qr, level.temperature, level.p, k)
    transfers = (
        Transfer("condensation", "qv", "qc", cond),
        Transfer("autoconversion", "qc", "qr", auto),
        Transfer("accretion", "qc", "qr", acc),
    )
    number = {
        "nc": -level.nc * _ratio(auto + acc, level.qc),
        "nr": auto / k.m_rain0,
    }
    return ProcessRates(transfers, number, work)


def cold_rates(level, constants=DEFAULT_CONSTANTS, config=None):
    """Freezing, deposition and melting at one level (unlimited)."""
    if config is not None and config.mode is not Mode.COLD:
        raise InvalidMode("cold_rates requires the cold moisture configuration")
    k = constants
    frz, dep, mi, ms, mg, work = _cold_rates(level.qv, level.qr, level.qi, level.qs, level.qg,
                                             level.temperature, level.p, k)
    transfers = (
        Transfer("freezing", "qr", "qg", frz),
        Transfer("deposition", "qv", "qi", dep),
        Transfer("melting", "qi", "qr", mi),
        Transfer("melting", "qs", "qr", ms),
        Transfer("melting", "qg", "qr", mg),
    )
    fr = _ratio(frz, level.qr)
    fi, fs, fg = _ratio(mi, level.qi), _ratio(ms, level.qs), _ratio(mg, level.qg)
    number = {
        "nr": -level.nr * fr + level.ni * fi + level.ns * fs + level.ng * fg,
        "ng": level.nr * fr - level.ng * fg,
        "ni": (dep / k.m_ice0 if level.qi <= k.eps else 0.0) - level.ni * fi,
        "ns": -level.ns * fs,
    }
    return ProcessRates(transfers, number, work)


# ---------------------------------------------------------------------------
# Compiled column kernel
# ---------------------------------------------------------------------------

@njit(nogil=True, cache=True)
def _limit(q, sink):
    """Scale factor so a sink of ``sink`` (already times dt) cannot exhaust ``q``."""
    if sink > q:
        return q / sink
    return 1.0


@njit(nogil=True, cache=True)
def _drain(q, sink, scale):
    if scale < 1.0:
        return 0.0
    return max(q - sink, 0.0)


@njit(nogil=True, cache=True)
def _process_levels(w, th, pres, ex, sl, cold, k, dt, apply):
    work = 0.0
    for lev in range(w.shape[1]):
        work += _level_step(w, th, lev, pres[lev], ex[lev], sl, cold, k, dt, apply)
    return work


@njit(nogil=True, cache=True, inline="always")
def _level_step(w, th, lev, p, ex, sl, cold, k, dt, apply):
    T = th[lev] * ex
    qv = w[sl[QV], lev]
    qc = w[sl[QC], lev]
    qr = w[sl[QR], lev]
    # one unit for visiting the level and evaluating its guards
    work = 1.0
    cond, auto, acc, wk = _warm_rates(qv, qc, qr, T, p, k)
    work += wk
    frz = 0.0
    dep = 0.0
    mi = 0.0
    ms = 0.0
    mg = 0.0
    qi = 0.0
    qs = 0.0
    qg = 0.0
    if cold:
        qi = w[sl[QI], lev]
        qs = w[sl[QS], lev]
        qg = w[sl[QG], lev]
        frz, dep, mi, ms, mg, wk = _cold_rates(qv, qr, qi, qs, qg, T, p, k)
        work += wk
    if not apply:
        return work
    if cond + auto + acc + frz + dep + mi + ms + mg == 0.0:
        return work

    # proportional limiting of every sink on a field
    sv = _limit(qv, (cond + dep) * dt)
    cond *= sv
    dep *= sv
    sc = _limit(qc, (auto + acc) * dt)
    auto *= sc
    acc *= sc
    sr = _limit(qr, frz * dt)
    frz *= sr
    si = _limit(qi, mi * dt)
    mi *= si
    ss = _limit(qs, ms * dt)
    ms *= ss
    sg = _limit(qg, mg * dt)
    mg *= sg

    # number fractions from the limited mass transfers, before masses move
    fc = min((auto + acc) * dt / qc, 1.0) if qc > 0.0 else 0.0
    fr = min(frz * dt / qr, 1.0) if qr > 0.0 else 0.0
    fi = min(mi * dt / qi, 1.0) if qi > 0.0 else 0.0
    fs = min(ms * dt / qs, 1.0) if qs > 0.0 else 0.0
    fg = min(mg * dt / qg, 1.0) if qg > 0.0 else 0.0

    melt = mi + ms + mg
    w[sl[QV], lev] = _drain(qv, (cond + dep) * dt, sv)
    w[sl[QC], lev] = _drain(qc, (auto + acc) * dt, sc) + cond * dt
    w[sl[QR], lev] = _drain(qr, frz * dt, sr) + (auto + acc + melt) * dt

    nc = w[sl[NC], lev]
    w[sl[NC], lev] = nc - nc * fc
    nr = w[sl[NR], lev]
    nr_new = nr - nr * fr + auto * dt / k.m_rain0

    if cold:
        w[sl[QI], lev] = _drain(qi, mi * dt, si) + dep * dt
        w[sl[QS], lev] = _drain(qs, ms * dt, ss)
        w[sl[QG], lev] = _drain(qg, mg * dt, sg) + frz * dt
        ni = w[sl[NI], lev]
        ns = w[sl[NS], lev]
        ng = w[sl[NG], lev]
        nr_new += ni * fi + ns * fs + ng * fg
        ni_new = ni - ni * fi
        if qi <= k.eps:
            ni_new += dep * dt / k.m_ice0
        w[sl[NI], lev] = ni_new
        w[sl[NS], lev] = ns - ns * fs
        w[sl[NG], lev] = max(ng - ng * fg + nr * fr, 0.0)
        ac = w[sl[ACLD], lev]
        moved = ac * fc
        w[sl[ACLD], lev] = ac - moved
        w[sl[ARAIN], lev] += moved
    w[sl[NR], lev] = max(nr_new, 0.0)

    th[lev] += dt * (LV * cond + LS * dep + LF * (frz - melt)) / (CP * ex)
    return work


@njit(nogil=True, cache=True)
def _fall_speeds(w, iq, inn, imu, mu_const, rho, a, b, rho_p, k, vm, vn):
    work = 0.0
    for lev in range(w.shape[1]):
        q = w[iq, lev]
        n = w[inn, lev]
        if q > k.eps and n > k.eps:
            mu = w[imu, lev] if imu >= 0 else mu_const
            lam = _slope(q, n, mu, rho[lev], rho_p)
            scale = a * lam ** (-b)
            vm[lev] = min(scale * math.exp(math.lgamma(mu + 4.0 + b) - math.lgamma(mu + 4.0)), k.v_fall_max)
            vn[lev] = min(scale * math.exp(math.lgamma(mu + 1.0 + b) - math.lgamma(mu + 1.0)), k.v_fall_max)
            work += 1.0
        else:
            vm[lev] = 0.0
            vn[lev] = 0.0
    return work


@njit(nogil=True, cache=True)
def _sediment(w, iq, inn, imu, mu_const, itr, rho, dz, dt, a, b, rho_p, k, apply):
    """First-order upwind fall of one category; returns (surface mass kg/m^2, work)."""
    nz = w.shape[1]
    active = 0
    for lev in range(nz):
        if w[iq, lev] > k.eps:
            active += 1
    if active == 0:
        return 0.0, 0.0
    vm = np.empty(nz)
    vn = np.empty(nz)
    work = _fall_speeds(w, iq, inn, imu, mu_const, rho, a, b, rho_p, k, vm, vn)
    vmax = 0.0
    for lev in range(nz):
        vmax = max(vmax, vm[lev], vn[lev])
    nsub = 1
    if vmax * dt > dz:
        nsub = int(math.ceil(vmax * dt / dz))
    if not apply:
        return 0.0, nsub * (work + active)

    dts = dt / nsub
    mout = np.empty(nz)
    nout = np.empty(nz)
    tout = np.empty(nz)
    surface = 0.0
    for s in range(nsub):
        if s > 0:
            work += _fall_speeds(w, iq, inn, imu, mu_const, rho, a, b, rho_p, k, vm, vn)
        for lev in range(nz):
            cm = min(vm[lev] * dts / dz, 1.0)
            cn = min(vn[lev] * dts / dz, 1.0)
            mout[lev] = w[iq, lev] * cm
            nout[lev] = w[inn, lev] * cn
            tout[lev] = w[itr, lev] * cm if itr >= 0 else 0.0
            if mout[lev] > 0.0:
                work += 1.0
        for lev in range(nz):
            w[iq, lev] -= mout[lev]
            w[inn, lev] -= nout[lev]
            if itr >= 0:
                w[itr, lev] -= tout[lev]
            if lev + 1 < nz:
                up = rho[lev + 1] / rho[lev]
                w[iq, lev] += mout[lev + 1] * up
                w[inn, lev] += nout[lev + 1] * up
                if itr >= 0:
                    w[itr, lev] += tout[lev + 1] * up
        surface += mout[0] * rho[0] * dz
    return surface, work


@njit(nogil=True, cache=True)
def _quiescent(q, theta, pres, ex, sl, cold, k):
    """True when no process can switch on: no condensate and no supersaturation."""
    for lev in range(q.shape[1]):
        if q[sl[QC], lev] > 0.0 or q[sl[QR], lev] > 0.0:
            return False
        T = theta[lev] * ex[lev]
        if q[sl[QV], lev] > qsat_liquid(T, pres[lev]):
            return False
        if cold:
            if q[sl[QI], lev] > 0.0 or q[sl[QS], lev] > 0.0 or q[sl[QG], lev] > 0.0:
                return False
            if T < k.T_frz and q[sl[QV], lev] > qsat_ice(T, pres[lev]):
                return False
    return True


@njit(nogil=True, cache=True)
def _column_core(q, theta, pres, ex, rho, dz, dt, n_substeps, sl, cold, k, apply, out_q, out_theta):
    nf, nz = q.shape
    if _quiescent(q, theta, pres, ex, sl, cold, k):
        # same result and tally as the full path, without the per-level bookkeeping
        if apply:
            out_q[:, :] = 0.0
            out_theta[:] = 0.0
        return 0.0, float(n_substeps * nz)
    w = np.empty((nf, nz))
    for f in range(nf):
        for lev in range(nz):
            w[f, lev] = q[f, lev]
    th = theta.copy()
    dts = dt / n_substeps
    work = 0.0
    surface = 0.0
    for s in range(n_substeps):
        work += _process_levels(w, th, pres, ex, sl, cold, k, dts, apply)
        m, wk = _sediment(w, sl[QR], sl[NR], sl[MUR], k.mu_rain, sl[ARAIN], rho, dz, dts,
                          k.a, k.b, k.rho_w, k, apply)
        surface += m
        work += wk
        if cold:
            m, wk = _sediment(w, sl[QI], sl[NI], sl[MUI], 0.0, -1, rho, dz, dts,
                              k.a_ice, k.b_ice, k.rho_ice, k, apply)
            surface += m
            work += wk
            m, wk = _sediment(w, sl[QS], sl[NS], sl[MUS], 0.0, -1, rho, dz, dts,
                              k.a_snow, k.b_snow, k.rho_snow, k, apply)
            surface += m
            work += wk
            m, wk = _sediment(w, sl[QG], sl[NG], -1, 0.0, -1, rho, dz, dts,
                              k.a_graupel, k.b_graupel, k.rho_graupel, k, apply)
            surface += m
            work += wk
    if apply:
        for f in range(nf):
            for lev in range(nz):
                out_q[f, lev] = (w[f, lev] - q[f, lev]) / dt
        for lev in range(nz):
            out_theta[lev] = (th[lev] - theta[lev]) / dt
    return surface / dt, work


@njit(nogil=True, cache=True)
def _exner_profile(pres):
    ex = np.empty(pres.size)
    for lev in range(pres.size):
        ex[lev] = (pres[lev] / P0) ** KAPPA
    return ex


@njit(nogil=True, cache=True)
def _run_columns(q, theta, pres, rho, dz, dt, n_substeps, sl, cold, k, apply,
                 start, stop, out_q, out_theta, out_flux, out_work):
    ex = _exner_profile(pres)
    for c in range(start, stop):
        flux, work = _column_core(q[:, c, :], theta[c], pres, ex, rho, dz, dt, n_substeps, sl, cold, k,
                                  apply, out_q[:, c, :], out_theta[c])
        out_flux[c] = flux
        out_work[c] = work


# ---------------------------------------------------------------------------
# Python-facing operations
# ---------------------------------------------------------------------------

@dataclass
class ColumnSources:
    roster: tuple
    tendencies: np.ndarray  # (n_fields, nz), field units per second
    theta_tendency: np.ndarray  # (nz,), K/s
    surface_precip_flux: float  # kg/m^2/s
    work_units: float

    def __getitem__(self, name):
        return self.tendencies[self.roster.index(name)]


def sedimentation(q, N, mu, rho, dt, dz, a=841.99, b=0.8, rho_particle=1000.0,
                  constants=DEFAULT_CONSTANTS):
    """Sediment one precipitating category over one step.

    ``q``, ``N`` and ``mu`` are level profiles (lowest level first); ``mu``
    may be a scalar. Returns ``(dq/dt, dN/dt, surface_precip_flux)``; the
    step is internally sub-divided whenever the fastest fall speed would
    cross more than one level.
    """
    if not dz > 0:
        raise InvalidArgument(f"dz must be positive, got {dz!r}")
    if not dt > 0:
        raise InvalidArgument(f"dt must be positive, got {dt!r}")
    q = np.asarray(q, dtype=np.float64)
    nz = q.size
    w = np.zeros((3, nz))
    w[0] = q
    w[1] = np.asarray(N, dtype=np.float64)
    w[2] = np.broadcast_to(np.asarray(mu, dtype=np.float64), (nz,))
    rho = np.ascontiguousarray(rho, dtype=np.float64)
    start = w.copy()
    surface, _ = _sediment(w, 0, 1, 2, 0.0, -1, rho, float(dz), float(dt),
                           float(a), float(b), float(rho_particle), constants, True)
    return (w[0] - start[0]) / dt, (w[1] - start[1]) / dt, surface / dt


def _validate_column(column, config):
    nf, nz = column.q.shape
    if nf != config.n_fields:
        raise InvalidArgument(f"column has {nf} fields, {config.mode.value} roster has {config.n_fields}")
    if column.theta.shape != (nz,) or column.pressure.shape != (nz,) or column.rho.shape != (nz,):
        raise InvalidArgument("column profiles must all have length nz")
    if not column.dz > 0:
        raise InvalidArgument(f"dz must be positive, got {column.dz!r}")


def microphysics_column(column, config, dt, n_substeps=2, constants=DEFAULT_CONSTANTS):
    """Run the kernel on a single column and return its source terms."""
    if not dt > 0 or n_substeps < 1:
        raise InvalidArgument("dt must be positive and n_substeps >= 1")
    _validate_column(column, config)
    nf, nz = column.q.shape
    out_q = np.zeros((nf, nz))
    out_theta = np.zeros(nz)
    pressure = np.ascontiguousarray(column.pressure, dtype=np.float64)
    flux, work = _column_core(np.ascontiguousarray(column.q, dtype=np.float64),
                              np.ascontiguousarray(column.theta, dtype=np.float64),
                              pressure, _exner_profile(pressure),
                              np.ascontiguousarray(column.rho, dtype=np.float64),
                              float(column.dz), float(dt), int(n_substeps), config.slot_map(),
                              config.mode is Mode.COLD, constants, True, out_q, out_theta)
    return ColumnSources(config.field_roster, out_q, out_theta, flux, work)


def base_work(nz, n_substeps):
    """Tally of a column in which no process is active."""
    return float(n_substeps * nz)


def work_estimate(column, config, dt=2.0, n_substeps=2, constants=DEFAULT_CONSTANTS):
    """Relative cost of a column, 1.0 for a column with no active process.

    Guards are evaluated on the input state only, so the estimate matches the
    kernel's own tally whenever processes do not switch each other on within
    the step (always true for clear columns).
    """
    _validate_column(column, config)
    nf, nz = column.q.shape
    pressure = np.ascontiguousarray(column.pressure, dtype=np.float64)
    _, work = _column_core(np.ascontiguousarray(column.q, dtype=np.float64),
                           np.ascontiguousarray(column.theta, dtype=np.float64),
                           pressure, _exner_profile(pressure),
                           np.ascontiguousarray(column.rho, dtype=np.float64),
                           float(column.dz), float(dt), int(n_substeps), config.slot_map(),
                           config.mode is Mode.COLD, constants, False,
                           np.empty((nf, nz)), np.empty(nz))
    return work / base_work(nz, n_substeps)


def work_estimates(state, dt=2.0, n_substeps=2, constants=DEFAULT_CONSTANTS):
    """:func:`work_estimate` for every column of ``state``."""
    g = state.grid
    work = np.zeros(g.n_columns)
    _run_columns(state.q, state.theta, state.pressure_profile, state.rho_profile, g.dz, float(dt),
                 int(n_substeps), state.config.slot_map(), state.config.mode is Mode.COLD, constants,
                 False, 0, g.n_columns, np.empty((1, 1, 1)), np.empty((1, 1)), np.zeros(g.n_columns), work)
    return work / base_work(g.nz, n_substeps)


class MicrophysicsKernel:
    """Range kernel for the executor: fills ``out`` for columns ``[start, stop)``."""

    def __init__(self, dt, n_substeps=2, constants=DEFAULT_CONSTANTS):
        if not dt > 0 or n_substeps < 1:
            raise InvalidArgument("dt must be positive and n_substeps >= 1")
        self.dt = float(dt)
        self.n_substeps = int(n_substeps)
        self.constants = constants
        self._slots = {}

    def __call__(self, state, start, stop, out):
        cfg = state.config
        slots = self._slots.get(cfg.mode)
        if slots is None:
            slots = self._slots.setdefault(cfg.mode, cfg.slot_map())
        _run_columns(state.q, state.theta, state.pressure_profile, state.rho_profile,
                     state.grid.dz, self.dt, self.n_substeps, slots, cfg.mode is Mode.COLD,
                     self.constants, True, start, stop, out.values, out.theta, out.surface_flux, out.work)


def warmup():
    """Compile the kernel for both moisture modes."""
    from .grid import build_grid, init_state

    for cfg in (MoistureConfig.warm(), MoistureConfig.cold()):
        state = init_state(build_grid(1, 1, 4), cfg, 1.0, 0)
        microphysics_column(state.column(0), cfg, 1.0, 1)
        work_estimates(state)
