"""Report schemas, physics checksums and CSV/JSON emission."""
import csv
import hashlib
import json
import math
from pathlib import Path

import numpy as np

# one schema per subcommand family; column order is part of the contract
RUN_COLUMNS = [
    "experiment", "mode", "columns", "nx", "ny", "nz", "cloudy_fraction", "seed",
    "policy", "chunk", "min_chunk", "n_workers", "execution", "n_timesteps", "repeats",
    "avg_microphysics_per_step", "min_microphysics_per_step", "max_microphysics_per_step",
    "avg_total_per_step", "min_total_per_step", "max_total_per_step",
    "imbalance_factor", "checksum", "state_digest",
]
PREDICT_COLUMNS = [
    "experiment", "device", "mode", "columns", "gangs", "vector_length", "regs_per_thread",
    "threads_per_sm", "occupancy", "max_concurrent_threads", "resident_threads", "waves",
    "t_in", "t_kernel", "t_out", "kernel_share", "cpu_overlap", "combine", "hybrid_total",
    "device_bound", "break_even_cores", "memory_bytes", "out_of_memory",
]
CALIBRATE_COLUMNS = [
    "experiment", "columns", "config", "t_in", "t_kernel", "t_out",
    "pred_t_in", "pred_t_kernel", "pred_t_out", "err_t_in", "err_t_kernel", "err_t_out",
]
AUTOTUNE_COLUMNS = [
    "experiment", "device", "columns", "rank", "gangs", "vector_length", "regs_per_thread",
    "kernel_time", "spread", "evaluated", "infeasible",
]


def checksum(state):
    """Exactly rounded sum of every field value and theta, as 17 significant digits.

    ``math.fsum`` is exact before the final rounding, so the result does not
    depend on summation order.
    """
    total = math.fsum(np.ravel(state.q)) + math.fsum(np.ravel(state.theta))
    return f"{total:.17g}"


def state_digest(state):
    """SHA-256 of the raw field bytes: the exact comparison behind ``--bitwise-check``."""
    h = hashlib.sha256()
    h.update(np.ascontiguousarray(state.q).tobytes())
    h.update(np.ascontiguousarray(state.theta).tobytes())
    return h.hexdigest()


def _plain(value):
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    return value


def write_report(out_dir, columns, rows, config=None, extra=None):
    """Write ``report.csv`` and ``report.json`` into ``out_dir``; returns both paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows = [{k: _plain(r.get(k, "")) for k in columns} for r in rows]
    csv_path = out / "report.csv"
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=columns)
        writer.writeheader()
        writer.writerows(rows)
    doc = {"columns": columns, "rows": rows}
    if config is not None:
        doc["config"] = config
    if extra:
        doc.update(extra)
    json_path = out / "report.json"
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=False, default=_plain)
        fh.write("\n")
    return csv_path, json_path
