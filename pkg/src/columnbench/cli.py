"""``columnbench`` command line.

Exit codes: 0 success, 1 runtime failure, 2 configuration or usage error.
"""
import argparse
import json
import logging
import sys

from . import driver, offload
from .config import RunConfig
from .errors import ConfigError
from .executor import Schedule
from .grid import Mode
from .microphysics import warmup
from .reports import (AUTOTUNE_COLUMNS, CALIBRATE_COLUMNS, PREDICT_COLUMNS, RUN_COLUMNS,
                      checksum, state_digest, write_report)

log = logging.getLogger("columnbench")

EXIT_OK, EXIT_RUNTIME, EXIT_CONFIG = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _int_list(text):
    """``2000,4000`` or ``start:stop:step`` (stop inclusive)."""
    try:
        if ":" in text:
            start, stop, step = (int(x) for x in text.split(":"))
            if step == 0:
                raise ValueError
            return list(range(start, stop + (1 if step > 0 else -1), step))
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a column list: {text!r}") from None


def build_parser():
    common = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS)
    common.add_argument("--config", help="JSON run configuration")
    common.add_argument("--out", help="directory for report.csv and report.json")
    common.add_argument("--seed", type=int)
    common.add_argument("--workers", type=int, dest="n_workers")
    common.add_argument("--policy", choices=[s.value for s in Schedule])
    common.add_argument("--chunk", type=int)
    common.add_argument("--repeats", type=int)
    common.add_argument("--bitwise-check", action="store_true",
                        help="compare final states byte for byte, not only by checksum")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="columnbench", description=__doc__.splitlines()[0], parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("run", parents=[common], help="run the configured simulation")

    p = sub.add_parser("sweep", parents=[common], help="repeat a run over column counts")
    p.add_argument("--columns", type=_int_list, help="e.g. 2000:20000:2000 or 2000,4000")

    p = sub.add_parser("sched-compare", parents=[common], help="one row per scheduling policy")
    p.add_argument("--policies", help="comma-separated, default static,dynamic,guided")

    p = sub.add_parser("predict", parents=[common], help="offload model prediction")
    _offload_args(p)
    p.add_argument("--cpu-overlap", type=float, dest="cpu_overlap")
    p.add_argument("--combine", type=float, dest="combine_time")

    p = sub.add_parser("calibrate", parents=[common], help="fit the offload model to a phase table")
    p.add_argument("--calibration", help="phase-table CSV or JSON, or 'reference'")

    p = sub.add_parser("autotune", parents=[common], help="search launch configurations")
    _offload_args(p)
    p.add_argument("--space", help="JSON file with gangs, vector_length, regs_per_thread lists")
    return parser


def _offload_args(p):
    p.add_argument("--device", help="k20x, p100 or a JSON DeviceSpec")
    p.add_argument("--calibration", help="phase-table CSV or JSON, or 'reference'")
    p.add_argument("--columns", type=_int_list)
    p.add_argument("--mode", choices=["warm", "cold"])
    p.add_argument("--gangs", type=int)
    p.add_argument("--vector-length", type=int, dest="vector_length")
    p.add_argument("--regs", type=int, dest="regs_per_thread")


def _config(args):
    path = getattr(args, "config", None)
    cfg = RunConfig.load(path) if path else RunConfig()
    keys = ["seed", "n_workers", "policy", "chunk", "repeats", "device", "calibration", "mode",
            "gangs", "vector_length", "regs_per_thread", "cpu_overlap", "combine_time"]
    overrides = {k: getattr(args, k, None) for k in keys}
    if getattr(args, "columns", None) is not None:
        overrides["columns"] = args.columns
    if getattr(args, "policies", None) is not None:
        overrides["policies"] = [p.strip() for p in args.policies.split(",") if p.strip()]
    return cfg.override(**overrides)


def _out(args):
    return getattr(args, "out", ".")


# ---------------------------------------------------------------------------

def _run_row(experiment, cfg, report):
    g = report.final_state.grid
    return {
        "experiment": experiment, "mode": cfg.mode, "columns": g.n_columns, "nx": g.nx,
        "ny": g.ny, "nz": g.nz, "cloudy_fraction": cfg.cloudy_fraction, "seed": cfg.seed,
        "policy": cfg.policy, "chunk": cfg.chunk, "min_chunk": cfg.min_chunk,
        "n_workers": cfg.n_workers, "execution": cfg.execution,
        "n_timesteps": cfg.n_timesteps, "repeats": report.repeats,
        "avg_microphysics_per_step": report.avg_microphysics_per_step,
        "min_microphysics_per_step": report.min_microphysics_per_step,
        "max_microphysics_per_step": report.max_microphysics_per_step,
        "avg_total_per_step": report.avg_total_per_step,
        "min_total_per_step": report.min_total_per_step,
        "max_total_per_step": report.max_total_per_step,
        "imbalance_factor": report.imbalance_factor,
        "checksum": checksum(report.final_state),
        "state_digest": state_digest(report.final_state),
    }


def cmd_run(args):
    cfg = _config(args)
    warmup()
    report = driver.run_simulation(cfg)
    write_report(_out(args), RUN_COLUMNS, [_run_row("run", cfg, report)], cfg.to_dict())
    return EXIT_OK


def cmd_sweep(args):
    cfg = _config(args)
    if not cfg.columns:
        raise ConfigError("columns", "sweep needs a non-empty column list")
    warmup()
    rows = []
    for n in cfg.columns:
        point = cfg.override(nx=n, ny=1)
        point.columns = None
        report = driver.run_simulation(point)
        rows.append(_run_row(f"sweep-{n}", point, report))
    write_report(_out(args), RUN_COLUMNS, rows, cfg.to_dict())
    return EXIT_OK


def cmd_sched_compare(args):
    cfg = _config(args)
    policies = cfg.policies or [s.value for s in Schedule]
    warmup()
    rows = []
    for name in policies:
        point = cfg.override(policy=name, execution="host_threaded")
        report = driver.run_simulation(point)
        rows.append(_run_row(f"sched-{name}", point, report))
    checksums = {r["checksum"] for r in rows}
    digests = {r["state_digest"] for r in rows}
    agree = len(checksums) == 1 and (not getattr(args, "bitwise_check", False) or len(digests) == 1)
    write_report(_out(args), RUN_COLUMNS, rows, cfg.to_dict(),
                 {"checksums_equal": len(checksums) == 1,
                  "bitwise_equal": len(digests) == 1 if getattr(args, "bitwise_check", False) else None})
    if not agree:
        log.error("policies disagree on the final state")
        return EXIT_RUNTIME
    return EXIT_OK


def _columns(cfg):
    return cfg.columns or [cfg.nx * cfg.ny]


def cmd_predict(args):
    cfg = _config(args)
    cal = cfg.load_calibration()
    device = cfg.load_device(cal.device)
    mode = Mode(cfg.mode)
    launch = cfg.launch(cal.launch)
    inv = cal.inventory(mode)
    rows = []
    for n in _columns(cfg):
        phases = cal.predict(n, mode, launch, device)
        cpu = cfg.cpu_overlap if cfg.cpu_overlap is not None else 0.0
        total, timeline = offload.hybrid_step_time(
            cpu, n * inv.input_bytes_per_column, n * inv.output_bytes_per_column,
            phases.t_kernel, cfg.combine_time, cal.link)
        device_time = phases.total
        be = offload.break_even_cores(device_time, cfg.cpu_1core_ratio * device_time,
                                      cfg.cpu_scaling_efficiency, cfg.gpu_sharing_efficiency)
        mem = offload.device_memory_required(n, inv.input_bytes_per_column,
                                             inv.temp_bytes_per_column, cfg.fixed_bytes, device)
        threads, occ = offload.occupancy(device, launch.regs_per_thread)
        resident = offload.resident_threads(launch, device)
        rows.append({
            "experiment": f"predict-{n}", "device": device.name, "mode": mode.value, "columns": n,
            "gangs": launch.gangs, "vector_length": launch.vector_length,
            "regs_per_thread": launch.regs_per_thread, "threads_per_sm": threads,
            "occupancy": occ,
            "max_concurrent_threads": offload.max_concurrent_threads(device, launch.regs_per_thread),
            "resident_threads": resident,
            "waves": offload.wave_count(n, resident) if resident else "",
            "t_in": phases.t_in, "t_kernel": phases.t_kernel, "t_out": phases.t_out,
            "kernel_share": phases.kernel_share, "cpu_overlap": cpu,
            "combine": cfg.combine_time, "hybrid_total": total,
            "device_bound": timeline.device_bound,
            "break_even_cores": be if be is not None else "",
            "memory_bytes": mem.bytes, "out_of_memory": mem.out_of_memory,
        })
    write_report(_out(args), PREDICT_COLUMNS, rows, cfg.to_dict(), {"calibration": cal.to_dict()})
    return EXIT_OK


def cmd_calibrate(args):
    cfg = _config(args)
    if cfg.calibration is None:
        cfg = cfg.override(calibration="reference")
    if cfg.calibration == "reference":
        data = offload.CalibrationData.reference()
    else:
        try:
            data = offload.CalibrationData.load(cfg.calibration)
        except (OSError, ValueError, KeyError) as exc:
            raise ConfigError("calibration", str(exc)) from None
    cal = offload.calibrate(data)
    rows = []
    for r, res in zip(data.rows, cal.residuals):
        p = cal.predict(r.columns, r.config)
        rows.append({
            "experiment": "calibrate", "columns": r.columns, "config": r.config.value,
            "t_in": r.t_in, "t_kernel": r.t_kernel, "t_out": r.t_out,
            "pred_t_in": p.t_in, "pred_t_kernel": p.t_kernel, "pred_t_out": p.t_out,
            "err_t_in": res["t_in"], "err_t_kernel": res["t_kernel"], "err_t_out": res["t_out"],
        })
    write_report(_out(args), CALIBRATE_COLUMNS, rows, cfg.to_dict(), {"calibration": cal.to_dict()})
    return EXIT_OK


def cmd_autotune(args):
    cfg = _config(args)
    device = cfg.load_device()
    space = cfg.space
    if getattr(args, "space", None):
        try:
            with open(args.space, encoding="utf-8") as fh:
                space = json.load(fh)
        except (OSError, ValueError) as exc:
            raise ConfigError("space", str(exc)) from None
    try:
        space = offload.SearchSpace.default() if space is None else offload.SearchSpace.from_dict(space)
    except (KeyError, TypeError, ValueError) as exc:
        raise ConfigError("space", f"bad search space: {exc}") from None
    if space.size == 0:
        raise ConfigError("space", "search space is empty")
    if cfg.calibration is not None:
        cost = cfg.load_calibration().model(Mode(cfg.mode))
    else:
        cost = offload.KernelCostModel(per_column_work=1.0e-3)
    rows = []
    for n in _columns(cfg):
        res = offload.autotune(n, device, cost, space)
        for rank, launch, t in (("best", res.best, res.best_time), ("worst", res.worst, res.worst_time)):
            rows.append({
                "experiment": f"autotune-{n}", "device": device.name, "columns": n, "rank": rank,
                "gangs": launch.gangs, "vector_length": launch.vector_length,
                "regs_per_thread": launch.regs_per_thread, "kernel_time": t,
                "spread": res.spread, "evaluated": res.evaluated, "infeasible": res.infeasible,
            })
    write_report(_out(args), AUTOTUNE_COLUMNS, rows, cfg.to_dict())
    return EXIT_OK


COMMANDS = {
    "run": cmd_run, "sweep": cmd_sweep, "sched-compare": cmd_sched_compare,
    "predict": cmd_predict, "calibrate": cmd_calibrate, "autotune": cmd_autotune,
}


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code in (EXIT_OK, EXIT_CONFIG) else EXIT_CONFIG
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"columnbench: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - every other failure is a runtime failure
        log.debug("runtime failure", exc_info=True)
        print(f"columnbench: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
