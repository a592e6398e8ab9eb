"""Analytic model of offloading the column kernel to a GPU-like device.

Nothing here touches a device. Occupancy comes from the register file, kernel
time from whole waves of resident threads, transfers from a latency plus
bandwidth link, and all of it can be calibrated against a table of measured
phase times.
"""
from dataclasses import asdict, dataclass, field, replace
import csv
import io
import json
import math
from importlib import resources
from typing import Dict, List

import numpy as np
from scipy.optimize import linprog, nnls

from .errors import InvalidArgument
from .grid import Mode

BYTES_PER_VALUE = 8
ARGUMENT_LIMIT = 532


@dataclass(frozen=True)
class DeviceSpec:
    name: str
    sm_count: int
    regs_per_sm: int = 65536
    max_threads_per_sm: int = 2048
    reg_alloc_granularity: int = 8
    mem_bytes: int = 16_000_000_000
    warp_size: int = 32

    def __post_init__(self):
        for key in ("sm_count", "regs_per_sm", "max_threads_per_sm",
                    "reg_alloc_granularity", "mem_bytes", "warp_size"):
            if getattr(self, key) <= 0:
                raise InvalidArgument(f"{key} must be positive")

    @classmethod
    def from_dict(cls, data):
        return _from_dict(cls, data)


K20X = DeviceSpec("k20x", sm_count=14, mem_bytes=6_000_000_000)
P100 = DeviceSpec("p100", sm_count=56, mem_bytes=16_000_000_000)
DEVICES = {d.name: d for d in (K20X, P100)}


@dataclass(frozen=True)
class LaunchConfig:
    gangs: int
    vector_length: int
    regs_per_thread: int

    def __post_init__(self):
        if min(self.gangs, self.vector_length, self.regs_per_thread) < 1:
            raise InvalidArgument("launch parameters must be >= 1")


@dataclass(frozen=True)
class KernelCostModel:
    """Per-thread cost of one column split by instruction class.

    With unit rates the per-thread time equals ``per_column_work`` seconds;
    ``launch_overhead`` is a fixed cost per kernel launch.
    """

    per_column_work: float
    frac_int: float = 0.46
    frac_fp: float = 0.20
    frac_idle: float = 0.06
    rate_int: float = 1.0
    rate_fp: float = 1.0
    rate_other: float = 1.0
    launch_overhead: float = 0.0

    def __post_init__(self):
        fracs = (self.frac_int, self.frac_fp, self.frac_idle)
        if any(f < 0 or f > 1 for f in fracs) or sum(fracs) > 1 + 1e-12:
            raise InvalidArgument("instruction fractions must lie in [0, 1] and sum to <= 1")
        if self.frac_idle >= 1:
            raise InvalidArgument("frac_idle must be < 1")
        if min(self.rate_int, self.rate_fp, self.rate_other) <= 0:
            raise InvalidArgument("rates must be positive")
        if self.per_column_work < 0 or self.launch_overhead < 0:
            raise InvalidArgument("work and overhead must be non-negative")

    @property
    def frac_other(self):
        return max(1.0 - self.frac_int - self.frac_fp - self.frac_idle, 0.0)

    @property
    def seconds_per_work(self):
        active = (self.frac_int / self.rate_int + self.frac_fp / self.rate_fp
                  + self.frac_other / self.rate_other)
        return active / (1.0 - self.frac_idle)

    @property
    def per_thread_time(self):
        return self.per_column_work * self.seconds_per_work


@dataclass(frozen=True)
class LinkSpec:
    bandwidth_to_dev: float
    bandwidth_from_dev: float
    latency: float = 0.0

    def __post_init__(self):
        if self.bandwidth_to_dev <= 0 or self.bandwidth_from_dev <= 0:
            raise InvalidArgument("bandwidths must be positive")
        if self.latency < 0:
            raise InvalidArgument("latency must be non-negative")

    @classmethod
    def from_dict(cls, data):
        return _from_dict(cls, data)


@dataclass(frozen=True)
class CalibrationRow:
    columns: int
    config: Mode
    t_in: float
    t_kernel: float
    t_out: float

    def __post_init__(self):
        config = self.config if isinstance(self.config, Mode) else Mode(str(self.config).lower())
        object.__setattr__(self, "config", config)
        if min(self.t_in, self.t_kernel, self.t_out) < 0 or self.columns < 0:
            raise InvalidArgument("calibration times and columns must be non-negative")


@dataclass
class CalibrationData:
    rows: List[CalibrationRow]

    def __len__(self):
        return len(self.rows)

    def select(self, columns=None, mode=None):
        rows = [r for r in self.rows
                if (columns is None or r.columns in columns) and (mode is None or r.config is Mode(mode))]
        return CalibrationData(rows)

    @classmethod
    def from_csv(cls, source):
        """Read ``columns,config,t_in_ms,t_kernel_ms,t_out_ms`` (times in ms)."""
        text = source.read() if hasattr(source, "read") else open(source, encoding="utf-8").read()
        reader = csv.DictReader(io.StringIO(text))
        expected = ["columns", "config", "t_in_ms", "t_kernel_ms", "t_out_ms"]
        if reader.fieldnames != expected:
            raise InvalidArgument(f"calibration header must be {','.join(expected)}")
        rows = [CalibrationRow(int(r["columns"]), r["config"], float(r["t_in_ms"]) / 1e3,
                               float(r["t_kernel_ms"]) / 1e3, float(r["t_out_ms"]) / 1e3)
                for r in reader]
        return cls(rows)

    @classmethod
    def from_json(cls, data):
        """Rows as ``{"columns", "config", "t_in", "t_kernel", "t_out"}`` in seconds."""
        if isinstance(data, dict):
            data = data["rows"]
        return cls([CalibrationRow(int(r["columns"]), r["config"], float(r["t_in"]),
                                   float(r["t_kernel"]), float(r["t_out"])) for r in data])

    @classmethod
    def load(cls, path):
        path = str(path)
        if path.endswith(".json"):
            with open(path, encoding="utf-8") as fh:
                return cls.from_json(json.load(fh))
        return cls.from_csv(path)

    @classmethod
    def reference(cls):
        """The six-row warm/cold phase table shipped with the package."""
        text = resources.files("columnbench").joinpath("data/reference_phases.csv").read_text("utf-8")
        return cls.from_csv(io.StringIO(text))


@dataclass(frozen=True)
class FieldInventory:
    """Per-column transfer and footprint assumptions, in 3D fields of ``nz`` doubles."""

    input_fields: int
    output_fields: int
    nz: int = 60
    temp_bytes_per_column: int = 0

    @property
    def input_bytes_per_column(self):
        return self.input_fields * self.nz * BYTES_PER_VALUE

    @property
    def output_bytes_per_column(self):
        return self.output_fields * self.nz * BYTES_PER_VALUE


# cold input reproduces the ~256 MB quoted for 20000 columns; warm input is
# the ratio of the measured warm and cold copy-in times; outputs are mode-free
_INPUT_FIELDS = {Mode.WARM: 21, Mode.COLD: 27}
_OUTPUT_FIELDS = 12
# back-solved so that 20000 columns exactly fill a 16 GB device
_TEMP_BYTES = 16_000_000_000 // 20000 - _INPUT_FIELDS[Mode.COLD] * 60 * BYTES_PER_VALUE


def default_inventory(mode, nz=60):
    mode = Mode(mode)
    return FieldInventory(_INPUT_FIELDS[mode], _OUTPUT_FIELDS, nz, _TEMP_BYTES)


# The measured kernel times grow almost linearly with columns, far below the
# hardware concurrency limit; calibration therefore assumes an effective width
# of one P100 multiprocessor at 128 registers (512 threads)
CALIBRATION_DEVICE = P100
CALIBRATION_LAUNCH = LaunchConfig(gangs=4, vector_length=128, regs_per_thread=128)


# ---------------------------------------------------------------------------
# occupancy and waves

def occupancy(device, regs_per_thread):
    """Threads resident per SM and the fraction of the maximum that represents.

    Examples
    --------
    >>> occupancy(K20X, 128)
    (512, 0.25)
    """
    if regs_per_thread < 1:
        raise InvalidArgument("regs_per_thread must be >= 1")
    g = device.reg_alloc_granularity
    allocated = -(-int(regs_per_thread) // g) * g
    threads = min(device.max_threads_per_sm, device.regs_per_sm // allocated)
    threads -= threads % device.warp_size
    return threads, threads / device.max_threads_per_sm


def max_concurrent_threads(device, regs_per_thread):
    return device.sm_count * occupancy(device, regs_per_thread)[0]


def wave_count(n_columns, max_concurrent):
    if max_concurrent < 1:
        raise InvalidArgument("max_concurrent must be >= 1")
    if n_columns < 0:
        raise InvalidArgument("n_columns must be >= 0")
    return -(-int(n_columns) // int(max_concurrent))


def resident_threads(launch, device):
    """Threads that run at once; blocks are placed whole, so 0 if one cannot fit."""
    per_sm, _ = occupancy(device, launch.regs_per_thread)
    per_sm -= per_sm % launch.vector_length
    return min(device.sm_count * per_sm, launch.gangs * launch.vector_length)


def kernel_time(n_columns, launch, device, cost):
    """Seconds for one launch over ``n_columns``; ``inf`` if a block cannot be resident."""
    if n_columns == 0:
        return 0.0
    resident = resident_threads(launch, device)
    if resident == 0:
        return math.inf
    return cost.launch_overhead + wave_count(n_columns, resident) * cost.per_thread_time


# ---------------------------------------------------------------------------
# transfers and memory

def transfer_time(n_bytes, direction, link):
    """``direction`` is ``"to_device"`` or ``"from_device"``."""
    if n_bytes < 0:
        raise InvalidArgument("bytes must be >= 0")
    if direction in ("to_device", "in", "h2d"):
        bw = link.bandwidth_to_dev
    elif direction in ("from_device", "out", "d2h"):
        bw = link.bandwidth_from_dev
    else:
        raise InvalidArgument(f"unknown direction {direction!r}")
    return link.latency + n_bytes / bw


@dataclass(frozen=True)
class MemoryEstimate:
    bytes: int
    out_of_memory: bool


def device_memory_required(n_columns, per_column_input_bytes, per_column_temp_bytes,
                           fixed_bytes=0, device=P100):
    if min(n_columns, per_column_input_bytes, per_column_temp_bytes, fixed_bytes) < 0:
        raise InvalidArgument("sizes must be non-negative")
    total = fixed_bytes + n_columns * (per_column_input_bytes + per_column_temp_bytes)
    return MemoryEstimate(total, total > device.mem_bytes)


def max_columns_in_memory(inventory, device=P100, fixed_bytes=0):
    per_column = inventory.input_bytes_per_column + inventory.temp_bytes_per_column
    return max(device.mem_bytes - fixed_bytes, 0) // per_column


# ---------------------------------------------------------------------------
# hybrid overlap

@dataclass(frozen=True)
class HybridTimeline:
    transfer_in: float
    kernel: float
    transfer_out: float
    cpu_overlap: float
    combine: float
    total: float

    @property
    def device_pipeline(self):
        return self.transfer_in + self.kernel + self.transfer_out

    @property
    def device_bound(self):
        return self.device_pipeline >= self.cpu_overlap

    @property
    def kernel_share(self):
        pipe = self.device_pipeline
        return self.kernel / pipe if pipe > 0 else 0.0


def hybrid_step_time(cpu_overlap, bytes_in, bytes_out, kernel, combine, link):
    """Device pipeline overlapped with host work, followed by the combine."""
    if min(cpu_overlap, bytes_in, bytes_out, kernel, combine) < 0:
        raise InvalidArgument("hybrid inputs must be non-negative")
    t_in = transfer_time(bytes_in, "to_device", link)
    t_out = transfer_time(bytes_out, "from_device", link)
    total = max(cpu_overlap, t_in + kernel + t_out) + combine
    return total, HybridTimeline(t_in, kernel, t_out, cpu_overlap, combine, total)


# ---------------------------------------------------------------------------
# calibration

def _fit_linear(design, y, method, intercepts=(0,)):
    """Non-negative coefficients for ``y ≈ design @ c`` judged on relative error.

    Among equally good fits the one with the smallest ``intercepts`` columns
    wins, so a single row is explained by slope alone where possible.
    """
    a = np.asarray(design, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    w = 1.0 / np.where(y > 0, y, 1.0)
    aw = a * w[:, None]
    yw = y * w
    n = a.shape[1]
    if method == "lstsq":
        coef, _ = nnls(aw, yw)
        return [float(v) for v in coef]
    if method != "minimax":
        raise InvalidArgument(f"unknown fit method {method!r}")
    # variables: coefficients then the error bound e
    ones = np.ones((len(y), 1))
    a_ub = np.vstack([np.hstack([aw, -ones]), np.hstack([-aw, -ones])])
    b_ub = np.concatenate([yw, -yw])
    bounds = [(0, None)] * (n + 1)
    first = linprog(np.r_[np.zeros(n), 1.0], A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if first.status != 0:
        coef, _ = nnls(aw, yw)
        return [float(v) for v in coef]
    bounds[-1] = (0, first.x[-1] * (1 + 1e-9) + 1e-12)
    cost = np.zeros(n + 1)
    cost[list(intercepts)] = 1.0
    second = linprog(cost, A_ub=a_ub, b_ub=b_ub, bounds=bounds, method="highs")
    x = second.x if second.status == 0 else first.x
    return [float(v) for v in x[:n]]


@dataclass(frozen=True)
class PhaseTimes:
    t_in: float
    t_kernel: float
    t_out: float

    @property
    def total(self):
        return self.t_in + self.t_kernel + self.t_out

    @property
    def kernel_share(self):
        return self.t_kernel / self.total if self.total > 0 else 0.0


@dataclass
class Calibration:
    """A fitted link plus one kernel model per moisture mode."""

    link: LinkSpec
    models: Dict[Mode, KernelCostModel]
    device: DeviceSpec = CALIBRATION_DEVICE
    launch: LaunchConfig = CALIBRATION_LAUNCH
    inventories: Dict[Mode, FieldInventory] = field(default_factory=dict)
    residuals: List[dict] = field(default_factory=list)

    def inventory(self, mode):
        mode = Mode(mode)
        return self.inventories.get(mode) or default_inventory(mode)

    def model(self, mode):
        mode = Mode(mode)
        if mode not in self.models:
            raise InvalidArgument(f"no kernel model calibrated for {mode.value}")
        return self.models[mode]

    def predict(self, n_columns, mode, launch=None, device=None):
        mode = Mode(mode)
        inv = self.inventory(mode)
        t_in = transfer_time(n_columns * inv.input_bytes_per_column, "to_device", self.link)
        t_out = transfer_time(n_columns * inv.output_bytes_per_column, "from_device", self.link)
        t_k = kernel_time(n_columns, launch or self.launch, device or self.device, self.model(mode))
        return PhaseTimes(t_in, t_k, t_out)

    @property
    def max_relative_error(self):
        return max((abs(r[k]) for r in self.residuals for k in ("t_in", "t_kernel", "t_out")),
                   default=0.0)

    def to_dict(self):
        return {
            "link": asdict(self.link),
            "models": {m.value: asdict(k) for m, k in self.models.items()},
            "device": asdict(self.device),
            "launch": asdict(self.launch),
            "residuals": self.residuals,
        }


def calibrate(data, inventories=None, device=CALIBRATION_DEVICE, launch=CALIBRATION_LAUNCH,
              base=None, method="minimax"):
    """Fit the link and the per-mode kernel models to measured phase times.

    Parameters
    ----------
    data : CalibrationData
    inventories : dict, optional
        ``Mode -> FieldInventory``; defaults to :func:`default_inventory`.
    base : KernelCostModel, optional
        Supplies instruction mix and rates; only work and overhead are fitted.
    method : {"minimax", "lstsq"}
        Minimise the worst or the summed squared relative error.

    Returns
    -------
    Calibration
        ``residuals`` holds the relative error of every row and phase. Rows
        that no affine model can match are still fitted; nothing is raised.
    """
    rows = list(data.rows) if isinstance(data, CalibrationData) else list(data)
    if not rows:
        raise InvalidArgument("calibration needs at least one row")
    base = base or KernelCostModel(per_column_work=0.0)
    inventories = dict(inventories or {})
    for r in rows:
        inventories.setdefault(r.config, default_inventory(r.config))

    # joint fit of (latency, s/byte in, s/byte out) over both directions
    design, y = [], []
    for r in rows:
        inv = inventories[r.config]
        design.append([1.0, r.columns * inv.input_bytes_per_column, 0.0])
        y.append(r.t_in)
        design.append([1.0, 0.0, r.columns * inv.output_bytes_per_column])
        y.append(r.t_out)
    latency, s_in, s_out = _fit_linear(design, y, method)
    link = LinkSpec(1.0 / s_in if s_in > 0 else math.inf,
                    1.0 / s_out if s_out > 0 else math.inf, float(latency))

    resident = resident_threads(launch, device)
    if resident == 0:
        raise InvalidArgument("calibration launch does not fit on the device")
    models = {}
    for mode in sorted({r.config for r in rows}, key=lambda m: m.value):
        mine = [r for r in rows if r.config is mode]
        design = [[1.0, wave_count(r.columns, resident)] for r in mine]
        overhead, per_wave = _fit_linear(design, [r.t_kernel for r in mine], method)
        models[mode] = replace(base, per_column_work=per_wave / base.seconds_per_work,
                               launch_overhead=overhead)

    cal = Calibration(link, models, device, launch, inventories)
    for r in rows:
        p = cal.predict(r.columns, r.config)
        cal.residuals.append({
            "columns": r.columns, "config": r.config.value,
            "t_in": _rel(p.t_in, r.t_in), "t_kernel": _rel(p.t_kernel, r.t_kernel),
            "t_out": _rel(p.t_out, r.t_out),
        })
    return cal


def _rel(predicted, measured):
    if measured == 0:
        return 0.0 if predicted == 0 else math.inf
    return predicted / measured - 1.0


# ---------------------------------------------------------------------------
# break-even and autotuning

def _as_curve(value):
    return value if callable(value) else (lambda n: value)


def break_even_cores(device_time, cpu_1core_time, cpu_scaling_efficiency=1.0,
                     gpu_sharing_efficiency=1.0, max_cores=4096):
    """Smallest host core count at which the host is at least as fast as the device.

    The host takes ``cpu_1core_time / (n * eff(n))`` on ``n`` cores; the device,
    shared by the same ``n`` cores, takes ``device_time / share(n)``. Both
    efficiencies may be constants or callables of ``n``.

    Returns None when no count up to ``max_cores`` breaks even.
    """
    if cpu_1core_time <= 0 or device_time < 0:
        raise InvalidArgument("times must be positive")
    if device_time == 0:
        return None
    eff = _as_curve(cpu_scaling_efficiency)
    share = _as_curve(gpu_sharing_efficiency)
    for n in range(1, int(max_cores) + 1):
        host = cpu_1core_time / (n * eff(n))
        if host <= device_time / share(n):
            return n
    return None


@dataclass(frozen=True)
class SearchSpace:
    gangs: tuple
    vector_length: tuple
    regs_per_thread: tuple

    @property
    def size(self):
        return len(self.gangs) * len(self.vector_length) * len(self.regs_per_thread)

    def __iter__(self):
        for g in self.gangs:
            for v in self.vector_length:
                for r in self.regs_per_thread:
                    yield LaunchConfig(g, v, r)

    @classmethod
    def default(cls):
        return cls(gangs=tuple(2 ** k for k in range(4, 14)),
                   vector_length=tuple(range(32, 1025, 32)),
                   regs_per_thread=tuple(range(32, 256, 8)))

    @classmethod
    def from_dict(cls, data):
        return cls(tuple(int(x) for x in data["gangs"]),
                   tuple(int(x) for x in data["vector_length"]),
                   tuple(int(x) for x in data["regs_per_thread"]))


@dataclass(frozen=True)
class AutotuneResult:
    best: LaunchConfig
    best_time: float
    worst: LaunchConfig
    worst_time: float
    evaluated: int
    infeasible: int

    @property
    def spread(self):
        return self.worst_time / self.best_time if self.best_time > 0 else 1.0


def autotune(n_columns, device, cost, space=None):
    """Exhaustive search; ties go to fewer gangs, then shorter vectors, then fewer registers.

    Configurations whose blocks cannot be resident are counted as infeasible
    and left out of the best/worst comparison.
    """
    space = SearchSpace.default() if space is None else space
    configs = list(space)
    if not configs:
        raise InvalidArgument("search space is empty")
    best = worst = None
    infeasible = 0
    for launch in configs:
        t = kernel_time(n_columns, launch, device, cost)
        if math.isinf(t):
            infeasible += 1
            continue
        key = (launch.gangs, launch.vector_length, launch.regs_per_thread)
        if best is None or (t, key) < best[0]:
            best = ((t, key), launch)
        if worst is None or (-t, key) < worst[0]:
            worst = ((-t, key), launch)
    if best is None:
        raise InvalidArgument("no configuration in the space fits on the device")
    return AutotuneResult(best[1], best[0][0], worst[1], -worst[0][0], len(configs), infeasible)


@dataclass(frozen=True)
class ArgumentEstimate:
    count: int
    warning: bool


def kernel_arg_estimate(n_arrays, n_scalars=0, args_per_array=10, packed=False):
    """Arguments a compiler would pass to the kernel; warns above 532.

    ``n_arrays`` may be an int or an iterable of per-group counts.
    """
    if not isinstance(n_arrays, int):
        n_arrays = sum(n_arrays)
    if min(n_arrays, n_scalars, args_per_array) < 0:
        raise InvalidArgument("counts must be non-negative")
    arrays = min(n_arrays, 1) if packed else n_arrays
    count = n_scalars + arrays * args_per_array
    return ArgumentEstimate(count, count > ARGUMENT_LIMIT)


# ---------------------------------------------------------------------------

def _from_dict(cls, data):
    known = set(cls.__dataclass_fields__)
    unknown = set(data) - known
    if unknown:
        raise InvalidArgument(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    return cls(**data)


def load_device(spec):
    """A preset name (``k20x``, ``p100``), a JSON path, or a dict."""
    if isinstance(spec, DeviceSpec):
        return spec
    if isinstance(spec, dict):
        return DeviceSpec.from_dict(spec)
    if str(spec).lower() in DEVICES:
        return DEVICES[str(spec).lower()]
    with open(spec, encoding="utf-8") as fh:
        return DeviceSpec.from_dict(json.load(fh))
