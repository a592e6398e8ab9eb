"""The mini parent model: grouped components per timestep.

Each timestep runs its groups strictly in order. The dynamics group holds
the microphysics and any number of synthetic stubs; every one of them
writes its own :class:`~columnbench.grid.SourceBuffer`, the buffers are summed
in component-index order and the state is integrated once. Execution order
inside the group therefore never changes the answer.
"""
from dataclasses import dataclass, field
from enum import Enum
import math
import statistics
import time
from typing import Dict, List, Optional

import numpy as np
from numba import njit

from .errors import InvalidArgument
from .executor import SchedulePolicy, execute, imbalance
from .grid import Mode, accumulate_sources, integrate
from .microphysics import MicrophysicsKernel
from . import offload


class ComponentKind(str, Enum):
    MICROPHYSICS = "microphysics"
    SYNTHETIC_STUB = "synthetic_stub"


class ExecutionMode(str, Enum):
    HOST_SERIAL = "host_serial"
    HOST_THREADED = "host_threaded"
    HYBRID_SIM = "hybrid_sim"


@dataclass(frozen=True)
class ComponentSpec:
    """One dynamics-group component.

    ``stub_cost`` is seconds of busy work per column and ``stub_magnitude``
    the amplitude (1/s) of the stub's relative tendencies; both are ignored
    for microphysics.
    """

    component_index: int
    kind: ComponentKind = ComponentKind.SYNTHETIC_STUB
    stub_cost: float = 0.0
    stub_magnitude: float = 1.0e-6
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "kind", ComponentKind(self.kind))
        if self.stub_cost < 0:
            raise InvalidArgument("stub_cost must be non-negative")

    @property
    def label(self):
        return self.name or f"{self.kind.value}-{self.component_index}"


@dataclass(frozen=True)
class ComponentGroup:
    name: str
    components: tuple = ()


@dataclass(frozen=True)
class HybridSetup:
    """What the hybrid lane needs to build a simulated device timeline."""

    calibration: "offload.Calibration"
    combine: float = 0.002
    launch: Optional["offload.LaunchConfig"] = None
    device: Optional["offload.DeviceSpec"] = None


DYNAMICS = "dynamics"


@dataclass(frozen=True)
class TimestepPlan:
    groups: tuple
    dt: float
    n_timesteps: int
    mode: ExecutionMode = ExecutionMode.HOST_SERIAL
    n_substeps: int = 2
    constants: object = None
    hybrid: Optional[HybridSetup] = None

    def __post_init__(self):
        object.__setattr__(self, "mode", ExecutionMode(self.mode))
        if self.dt <= 0:
            raise InvalidArgument("dt must be positive")
        if self.n_timesteps < 0:
            raise InvalidArgument("n_timesteps must be >= 0")
        seen = set()
        for comp in self.dynamics.components:
            if comp.component_index in seen:
                raise InvalidArgument(f"duplicate component index {comp.component_index}")
            seen.add(comp.component_index)
        if self.mode is ExecutionMode.HYBRID_SIM and self.hybrid is None:
            raise InvalidArgument("hybrid_sim needs a HybridSetup")

    @property
    def dynamics(self):
        for g in self.groups:
            if g.name == DYNAMICS:
                return g
        raise InvalidArgument("plan has no dynamics group")

    def with_dynamics_order(self, order):
        """Same plan with the dynamics components executed in ``order`` (indices)."""
        by_index = {c.component_index: c for c in self.dynamics.components}
        if sorted(order) != sorted(by_index):
            raise InvalidArgument("order must be a permutation of the component indices")
        comps = tuple(by_index[i] for i in order)
        groups = tuple(ComponentGroup(g.name, comps) if g.name == DYNAMICS else g
                       for g in self.groups)
        return TimestepPlan(groups, self.dt, self.n_timesteps, self.mode, self.n_substeps,
                            self.constants, self.hybrid)


def default_components(stub_cost=0.0, stub_magnitude=1.0e-6, n_stubs=2):
    """Stubs standing in for advection and buoyancy, then microphysics."""
    names = ["advection", "buoyancy"] + [f"stub{i}" for i in range(2, n_stubs)]
    comps = [ComponentSpec(i, ComponentKind.SYNTHETIC_STUB, stub_cost, stub_magnitude, names[i])
             for i in range(n_stubs)]
    comps.append(ComponentSpec(n_stubs, ComponentKind.MICROPHYSICS, name="microphysics"))
    return tuple(comps)


def default_plan(dt, n_timesteps, components=None, mode=ExecutionMode.HOST_SERIAL, **kwargs):
    """Halo swap, subgrid, dynamics, pressure and diagnostics, in that order.

    Only dynamics does any work; the others keep the structure of a full model.
    """
    comps = tuple(components) if components is not None else default_components()
    groups = (ComponentGroup("halo_swap"), ComponentGroup("subgrid"),
              ComponentGroup(DYNAMICS, comps), ComponentGroup("pressure"),
              ComponentGroup("diagnostics"))
    return TimestepPlan(groups, dt, n_timesteps, mode, **kwargs)


# ---------------------------------------------------------------------------
# synthetic stub kernel

@njit(nogil=True, cache=True)
def _stub_columns(q, theta, iqv, magnitude, iterations, start, stop, out_q, out_theta, scratch):
    nz = q.shape[2]
    for c in range(start, stop):
        x = 1.0 + c * 1.0e-9
        for _ in range(iterations):
            x = x * 0.999999 + 1.0e-6
        scratch[c] = x
        for lev in range(nz):
            s = math.sin(2.0 * math.pi * (lev + 0.5) / nz + 0.01 * c)
            out_q[iqv, c, lev] = magnitude * q[iqv, c, lev] * s
            out_theta[c, lev] = magnitude * theta[c, lev] * s


_BURN_RATE = None


def burn_rate():
    """Burn-loop iterations per second on this machine (measured once)."""
    global _BURN_RATE
    if _BURN_RATE is None:
        q = np.ones((1, 1, 1))
        th = np.ones((1, 1))
        scratch = np.zeros(1)
        _stub_columns(q, th, 0, 0.0, 10, 0, 1, np.zeros_like(q), np.zeros_like(th), scratch)
        n = 2_000_000
        best = math.inf
        for _ in range(3):
            t0 = time.perf_counter()
            _stub_columns(q, th, 0, 0.0, n, 0, 1, np.zeros_like(q), np.zeros_like(th), scratch)
            best = min(best, time.perf_counter() - t0)
        _BURN_RATE = n / max(best, 1e-9)
    return _BURN_RATE


class StubKernel:
    """Range kernel for a synthetic component: burns time, emits smooth tendencies."""

    def __init__(self, spec):
        self.spec = spec
        self.iterations = int(round(spec.stub_cost * burn_rate())) if spec.stub_cost > 0 else 0

    def __call__(self, state, start, stop, out):
        scratch = np.empty(state.grid.n_columns)
        _stub_columns(state.q, state.theta, state.config.index("qv"), self.spec.stub_magnitude,
                      self.iterations, start, stop, out.values, out.theta, scratch)


# ---------------------------------------------------------------------------

@dataclass
class StepReport:
    """Timings of one timestep, in seconds.

    In hybrid mode ``total_time`` replaces the measured dynamics-group time
    with the simulated overlap timeline.
    """

    component_times: Dict[int, float] = field(default_factory=dict)
    microphysics_time: float = 0.0
    accumulate_integrate_time: float = 0.0
    hybrid: Optional["offload.HybridTimeline"] = None
    total_time: float = 0.0
    group_spans: List[tuple] = field(default_factory=list)
    imbalance_factor: float = 1.0
    clipped: float = 0.0


def _workers_for(plan, n_workers):
    return 1 if plan.mode is ExecutionMode.HOST_SERIAL else n_workers


def build_kernels(plan):
    kernels = {}
    for comp in plan.dynamics.components:
        if comp.kind is ComponentKind.MICROPHYSICS:
            kw = {} if plan.constants is None else {"constants": plan.constants}
            kernels[comp.component_index] = MicrophysicsKernel(plan.dt, plan.n_substeps, **kw)
        else:
            kernels[comp.component_index] = StubKernel(comp)
    return kernels


def run_timestep(state, plan, policy=SchedulePolicy(), n_workers=1, kernels=None):
    """Advance ``state`` by one ``plan.dt``; returns ``(new_state, StepReport)``."""
    kernels = kernels or build_kernels(plan)
    workers = _workers_for(plan, n_workers)
    report = StepReport()
    step_start = time.perf_counter()
    dyn_time = 0.0
    micro_index = None
    for group in plan.groups:
        g0 = time.perf_counter()
        if group.name == DYNAMICS:
            buffers = []
            for comp in group.components:
                buf, timings, wall = execute(state, kernels[comp.component_index], policy,
                                             workers, comp.component_index)
                buffers.append(buf)
                report.component_times[comp.component_index] = wall
                if comp.kind is ComponentKind.MICROPHYSICS:
                    micro_index = comp.component_index
                    report.microphysics_time += wall
                    report.imbalance_factor = imbalance(timings, wall).imbalance_factor
            a0 = time.perf_counter()
            if buffers:
                total = accumulate_sources(buffers)
                state, clip = integrate(state, total, plan.dt)
                report.clipped = clip.total
            else:
                state = state.copy()
                state.time += plan.dt
            report.accumulate_integrate_time = time.perf_counter() - a0
        g1 = time.perf_counter()
        report.group_spans.append((group.name, g0, g1))
        if group.name == DYNAMICS:
            dyn_time = g1 - g0
    measured = time.perf_counter() - step_start
    report.total_time = measured
    if plan.mode is ExecutionMode.HYBRID_SIM and micro_index is not None:
        report.hybrid = _hybrid_timeline(state, plan, report, micro_index)
        report.total_time = (measured - dyn_time + report.hybrid.total
                             + report.accumulate_integrate_time)
    return state, report


def _hybrid_timeline(state, plan, report, micro_index):
    setup = plan.hybrid
    cal = setup.calibration
    mode = state.config.mode
    n = state.grid.n_columns
    inv = cal.inventory(mode)
    kernel = offload.kernel_time(n, setup.launch or cal.launch, setup.device or cal.device,
                                 cal.model(mode))
    cpu = sum(t for i, t in report.component_times.items() if i != micro_index)
    _, timeline = offload.hybrid_step_time(cpu, n * inv.input_bytes_per_column,
                                           n * inv.output_bytes_per_column, kernel,
                                           setup.combine, cal.link)
    return timeline


def check_termination(state, plan):
    """True once ``state.time`` reaches ``dt * n_timesteps``.

    A relative slack of 1e-12 absorbs the rounding of repeated ``+= dt``.
    """
    end = plan.dt * plan.n_timesteps
    return state.time >= end - 1e-12 * abs(end)


def run(state, plan, policy=SchedulePolicy(), n_workers=1):
    """Run ``plan.n_timesteps`` steps; returns the final state and the step reports."""
    kernels = build_kernels(plan)
    reports = []
    start_time = state.time
    for _ in range(plan.n_timesteps):
        state, rep = run_timestep(state, plan, policy, n_workers, kernels)
        reports.append(rep)
    if plan.n_timesteps:
        # keep the clock exact regardless of accumulated rounding
        state.time = start_time + plan.dt * plan.n_timesteps
    return state, reports


@dataclass
class RunSummary:
    microphysics_per_step: float
    total_per_step: float
    imbalance_factor: float
    steps: int


@dataclass
class SimulationReport:
    runs: List[RunSummary]
    final_state: object = None

    def _stat(self, attr, fn):
        values = [getattr(r, attr) for r in self.runs if r.steps]
        return fn(values) if values else 0.0

    @property
    def repeats(self):
        return len(self.runs)

    @property
    def empty(self):
        return all(r.steps == 0 for r in self.runs)

    @property
    def avg_microphysics_per_step(self):
        return self._stat("microphysics_per_step", statistics.fmean)

    @property
    def min_microphysics_per_step(self):
        return self._stat("microphysics_per_step", min)

    @property
    def max_microphysics_per_step(self):
        return self._stat("microphysics_per_step", max)

    @property
    def avg_total_per_step(self):
        return self._stat("total_per_step", statistics.fmean)

    @property
    def min_total_per_step(self):
        return self._stat("total_per_step", min)

    @property
    def max_total_per_step(self):
        return self._stat("total_per_step", max)

    @property
    def imbalance_factor(self):
        return self._stat("imbalance_factor", statistics.fmean) or 1.0


def summarise(reports):
    if not reports:
        return RunSummary(0.0, 0.0, 1.0, 0)
    return RunSummary(statistics.fmean(r.microphysics_time for r in reports),
                      statistics.fmean(r.total_time for r in reports),
                      statistics.fmean(r.imbalance_factor for r in reports),
                      len(reports))


def run_simulation(config):
    """Build the scenario from a :class:`~columnbench.config.RunConfig` and run it
    ``config.repeats`` times from the same initial state."""
    from .config import RunConfig
    if isinstance(config, dict):
        config = RunConfig.from_dict(config)
    config.validate()
    initial = config.initial_state()
    plan = config.plan()
    policy = config.schedule_policy()
    runs = []
    final = initial
    for _ in range(config.repeats):
        final, reports = run(initial.copy(), plan, policy, config.n_workers)
        runs.append(summarise(reports))
    return SimulationReport(runs, final)
