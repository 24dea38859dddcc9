"""CSV/JSON artifact writers.

All numeric cells use the shortest round-trip decimal representation of
the double (Python's repr), so identical runs produce byte-identical
files.  Writers go through a temp-file + atomic-rename so a crashed run
never leaves a truncated artifact behind.
"""

from __future__ import annotations

import json
import os
import tempfile
from dataclasses import dataclass, field

from .diagnostics import DiagnosticsReport
from .fixed_domain import Trajectory


def format_number(x) -> str:
    """Shortest decimal string that round-trips the double exactly."""
    return repr(float(x))


def atomic_write_text(path: str, text: str) -> None:
    directory = os.path.dirname(os.path.abspath(path))
    os.makedirs(directory, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", text=True)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="\n") as handle:
            handle.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _csv(rows) -> str:
    return "\n".join(",".join(row) for row in rows) + "\n"


def trajectory_csv(trajectory: Trajectory, report: DiagnosticsReport) -> str:
    """Per-sample operator entries (row-major re/im) plus drift columns."""
    if not trajectory.states:
        return "t\n"
    rows_n, cols_n = trajectory.states[0].k.shape
    header = ["t"]
    for i in range(rows_n):
        for j in range(cols_n):
            header += [f"k_re_{i}_{j}", f"k_im_{i}_{j}"]
    header += ["kk_drift", "trace_khk_drift", "unitarity_defect"]
    rows = [header]
    for state, record in zip(trajectory.states, report.records):
        row = [format_number(state.t)]
        for i in range(rows_n):
            for j in range(cols_n):
                entry = state.k[i, j]
                row += [format_number(entry.real), format_number(entry.imag)]
        row.append(format_number(record.kk_star_drift))
        row.append("" if record.trace_khk_drift is None
                   else format_number(record.trace_khk_drift))
        row.append(format_number(record.unitarity_defect))
        rows.append(row)
    return _csv(rows)


def diagnostics_csv(report: DiagnosticsReport) -> str:
    rows = [["t", "xi", "xi_rate_pred", "xi_rate_obs", "kk_drift",
             "trace_khk_drift", "unitarity_defect"]]
    for r in report.records:
        rows.append([
            format_number(r.t), format_number(r.xi),
            format_number(r.xi_rate_predicted), format_number(r.xi_rate_observed),
            format_number(r.kk_star_drift),
            "" if r.trace_khk_drift is None else format_number(r.trace_khk_drift),
            format_number(r.unitarity_defect),
        ])
    return _csv(rows)


def residual_report_csv(rows_in) -> str:
    """Moving-domain report: (t, weak_residual or None, image, radial)."""
    rows = [["t", "weak_residual", "image_drift", "radial_drift"]]
    for t, residual, image_drift, radial_drift in rows_in:
        rows.append([
            format_number(t),
            "" if residual is None else format_number(residual),
            format_number(image_drift), format_number(radial_drift),
        ])
    return _csv(rows)


def comparison_csv(rows_in) -> str:
    """Cross-solver table: (pair, max_distance, tolerance, status)."""
    rows = [["pair", "max_distance", "tolerance", "status"]]
    for pair, distance, tolerance, status in rows_in:
        rows.append([pair, format_number(distance), format_number(tolerance), status])
    return _csv(rows)


def flux_csv(times, distributions) -> str:
    """Per-time flux distribution, one column per image component."""
    n = len(distributions[0]) if distributions else 0
    rows = [["t"] + [f"flux_{i}" for i in range(n)]]
    for t, dist in zip(times, distributions):
        rows.append([format_number(t)] + [format_number(v) for v in dist])
    return _csv(rows)


def checks_csv(results) -> str:
    """Verification battery table."""
    rows = [["check", "metric", "threshold", "comparison", "status"]]
    for r in results:
        rows.append([r.name, format_number(r.metric), format_number(r.threshold),
                     r.comparison, "pass" if r.passed else "fail"])
    return _csv(rows)


@dataclass
class RunManifest:
    """What a command produced: digest, version, timing, files, verdicts."""

    scenario_digest: str
    tool_version: str
    wall_time: float
    outputs: list = field(default_factory=list)
    status: dict = field(default_factory=dict)

    def ok(self) -> bool:
        return all(v == "pass" for v in self.status.values())


def manifest_json(manifest: RunManifest) -> str:
    doc = {
        "scenario_digest": manifest.scenario_digest,
        "tool_version": manifest.tool_version,
        "wall_time": manifest.wall_time,
        "outputs": list(manifest.outputs),
        "status": dict(sorted(manifest.status.items())),
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"
