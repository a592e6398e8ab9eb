"""Run configuration: a flat JSON object, validated before anything runs."""
from dataclasses import asdict, dataclass, field, fields, replace
import json
from typing import Optional

from .errors import ConfigError, InvalidArgument
from .executor import Schedule, SchedulePolicy
from .grid import Mode, MoistureConfig, build_grid, init_state
from .microphysics import make_constants


@dataclass
class RunConfig:
    """Every knob of a benchmark run. Unknown keys are rejected."""

    nx: int = 64
    ny: int = 64
    nz: int = 60
    dz: float = 100.0
    mode: str = "warm"
    cloudy_fraction: float = 0.3
    seed: int = 0
    layout: str = "independent"
    dt: float = 2.0
    n_timesteps: int = 3
    n_substeps: int = 2
    repeats: int = 3
    policy: str = "static"
    chunk: int = 16
    min_chunk: int = 4
    n_workers: int = 1
    execution: str = "host_serial"
    constants: dict = field(default_factory=dict)
    n_stubs: int = 2
    stub_cost: float = 0.0
    stub_magnitude: float = 1.0e-6
    # offload model inputs
    device: object = None
    calibration: Optional[str] = None
    gangs: Optional[int] = None
    vector_length: Optional[int] = None
    regs_per_thread: Optional[int] = None
    combine_time: float = 0.002
    cpu_overlap: Optional[float] = None
    cpu_1core_ratio: float = 7.4
    cpu_scaling_efficiency: float = 11.0 / 12.0
    gpu_sharing_efficiency: float = 1.0
    fixed_bytes: int = 0
    columns: Optional[list] = None
    policies: Optional[list] = None
    space: Optional[dict] = None

    @classmethod
    def from_dict(cls, data):
        if not isinstance(data, dict):
            raise ConfigError("<root>", "config must be a JSON object")
        known = {f.name for f in fields(cls)}
        for key in data:
            if key not in known:
                raise ConfigError(key, "unknown key")
        cfg = cls(**data)
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path):
        try:
            with open(path, encoding="utf-8") as fh:
                data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError("<json>", f"malformed JSON: {exc}") from None
        except OSError as exc:
            raise ConfigError("<file>", str(exc)) from None
        return cls.from_dict(data)

    def override(self, **kwargs):
        """Copy with the non-None keyword values replaced, then re-validated."""
        cfg = replace(self, **{k: v for k, v in kwargs.items() if v is not None})
        cfg.validate()
        return cfg

    def to_dict(self):
        return asdict(self)

    def validate(self):
        def need(cond, key, message):
            if not cond:
                raise ConfigError(key, message)

        for key in ("nx", "ny", "nz", "n_substeps", "repeats", "chunk", "min_chunk",
                    "n_workers", "n_stubs", "gangs", "vector_length", "regs_per_thread"):
            value = getattr(self, key)
            if value is None and key in ("gangs", "vector_length", "regs_per_thread"):
                continue
            need(isinstance(value, int) and not isinstance(value, bool) and value >= 1,
                 key, "must be an integer >= 1")
        for key in ("seed", "n_timesteps", "fixed_bytes"):
            value = getattr(self, key)
            need(isinstance(value, int) and not isinstance(value, bool) and value >= 0,
                 key, "must be an integer >= 0")
        for key in ("dz", "dt"):
            need(_number(getattr(self, key)) and getattr(self, key) > 0, key, "must be positive")
        for key in ("stub_cost", "stub_magnitude", "combine_time", "cpu_1core_ratio"):
            need(_number(getattr(self, key)) and getattr(self, key) >= 0, key,
                 "must be non-negative")
        for key in ("cpu_scaling_efficiency", "gpu_sharing_efficiency"):
            need(_number(getattr(self, key)) and getattr(self, key) > 0, key, "must be positive")
        need(self.cpu_overlap is None or (_number(self.cpu_overlap) and self.cpu_overlap >= 0),
             "cpu_overlap", "must be non-negative")
        need(_number(self.cloudy_fraction) and 0.0 <= self.cloudy_fraction <= 1.0,
             "cloudy_fraction", "must lie in [0, 1]")
        need(self.mode in ("warm", "cold"), "mode", "must be 'warm' or 'cold'")
        need(self.layout in ("independent", "clustered", "deck"), "layout",
             "must be 'independent', 'clustered' or 'deck'")
        need(self.policy in [s.value for s in Schedule], "policy",
             "must be static, dynamic or guided")
        need(self.execution in ("host_serial", "host_threaded", "hybrid_sim"), "execution",
             "must be host_serial, host_threaded or hybrid_sim")
        need(isinstance(self.constants, dict), "constants", "must be an object")
        try:
            make_constants(self.constants)
        except (InvalidArgument, TypeError) as exc:
            raise ConfigError("constants", str(exc)) from None
        if self.columns is not None:
            need(isinstance(self.columns, list) and self.columns, "columns",
                 "must be a non-empty list")
            need(all(isinstance(c, int) and c >= 1 for c in self.columns), "columns",
                 "entries must be integers >= 1")
        if self.policies is not None:
            need(isinstance(self.policies, list) and self.policies, "policies",
                 "must be a non-empty list")
            for p in self.policies:
                need(p in [s.value for s in Schedule], "policies", f"unknown policy {p!r}")
        if self.execution == "hybrid_sim":
            need(self.calibration is not None, "calibration", "hybrid_sim needs a calibration")

    # -- builders ----------------------------------------------------------

    def moisture(self):
        return MoistureConfig.for_mode(Mode(self.mode))

    def grid(self):
        return build_grid(self.nx, self.ny, self.nz, self.dz)

    def initial_state(self):
        return init_state(self.grid(), self.moisture(), self.cloudy_fraction, self.seed,
                          layout=self.layout)

    def schedule_policy(self, kind=None):
        return SchedulePolicy(Schedule(kind or self.policy), self.chunk, self.min_chunk)

    def microphysics_constants(self):
        return make_constants(self.constants)

    def load_calibration(self):
        from . import offload
        if self.calibration is None:
            raise ConfigError("calibration", "no calibration given")
        try:
            if self.calibration == "reference":
                data = offload.CalibrationData.reference()
            else:
                data = offload.CalibrationData.load(self.calibration)
            return offload.calibrate(data)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("calibration", str(exc)) from None

    def load_device(self, default=None):
        from . import offload
        if self.device is None:
            return default or offload.P100
        try:
            return offload.load_device(self.device)
        except (OSError, ValueError, TypeError) as exc:
            raise ConfigError("device", str(exc)) from None

    def launch(self, default):
        """Launch config with any unset field taken from ``default``."""
        from . import offload
        return offload.LaunchConfig(self.gangs or default.gangs,
                                    self.vector_length or default.vector_length,
                                    self.regs_per_thread or default.regs_per_thread)

    def plan(self):
        from . import driver, offload
        hybrid = None
        if self.execution == "hybrid_sim":
            cal = self.load_calibration()
            hybrid = driver.HybridSetup(cal, self.combine_time, self.launch(cal.launch),
                                        self.load_device(cal.device))
        comps = driver.default_components(self.stub_cost, self.stub_magnitude, self.n_stubs)
        return driver.default_plan(self.dt, self.n_timesteps, comps,
                                   driver.ExecutionMode(self.execution),
                                   n_substeps=self.n_substeps,
                                   constants=self.microphysics_constants(), hybrid=hybrid)


def _number(x):
    return isinstance(x, (int, float)) and not isinstance(x, bool)
