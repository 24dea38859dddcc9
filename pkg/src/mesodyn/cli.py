"""Command-line front end.

Verbs: simulate, compare, critical, moving, flux, verify.  Every verb
writes its artifacts atomically into the output directory and finishes
with a run.json manifest.  Exit codes: 0 success, 1 failed check,
2 usage, 3 invalid config, 4 near-singular (partial outputs retained),
5 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import os
import sys
import time

import numpy as np

from . import __version__
from .diagnostics import FluxInput, flux_distribution, invariant_report
from .diagnostics import CriticalPointSpec, critical_point
from .errors import (
    ConfigInvalidError,
    MesodynError,
    NearSingularError,
    UsageError,
)
from .fixed_domain import evolve_direct, evolve_factorized, evolve_series
from .linalg import adjoint_inverse, matrix_from_json, matrix_to_json
from .moving_domain import (
    AmbientSpace,
    assemble_moving_solution,
    build_moving_solution,
    image_projector,
    weak_residual,
)
from .reports import (
    RunManifest,
    atomic_write_text,
    checks_csv,
    comparison_csv,
    diagnostics_csv,
    flux_csv,
    format_number,
    manifest_json,
    residual_report_csv,
    trajectory_csv,
)
from .scenario import ScenarioConfig, scenario_from_json, validate_scenario
from .verification import run_battery

PD_FLOOR_ENV = "MESODYN_PD_FLOOR"
COMPARE_TOLERANCE = 1e-6
VERBS = ("simulate", "compare", "critical", "moving", "flux", "verify")


@dataclasses.dataclass
class Command:
    verb: str
    config_path: str | None
    output_dir: str
    overrides: dict


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{message}\n{self.format_usage()}")


def build_parser() -> _Parser:
    parser = _Parser(prog="mesodyn", description=__doc__)
    sub = parser.add_subparsers(dest="verb")

    def add(verb: str, needs_config: bool) -> argparse.ArgumentParser:
        p = sub.add_parser(verb)
        p.add_argument("--config", required=needs_config, default=None)
        p.add_argument("--output", default="mesodyn_out")
        p.add_argument("--dt", type=float, default=None)
        p.add_argument("--t-end", dest="t_end", type=float, default=None)
        p.add_argument("--hbar", type=float, default=None)
        return p

    sim = add("simulate", True)
    sim.add_argument("--solver", choices=("direct", "factorized", "series"),
                     default="factorized")
    sim.add_argument("--terms", type=int, default=30)
    cmp_p = add("compare", True)
    cmp_p.add_argument("--terms", type=int, default=30)
    add("critical", True)
    mov = add("moving", True)
    mov.add_argument("--literal-atime", dest="literal_atime", action="store_true")
    add("flux", True)
    ver = add("verify", False)
    ver.add_argument("--seed", type=int, default=42)
    return parser


def parse_command(argv) -> Command:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.verb is None:
        raise UsageError(f"a verb is required: one of {', '.join(VERBS)}\n"
                         f"{parser.format_usage()}")
    overrides = {}
    for key in ("dt", "t_end", "hbar", "solver", "terms", "seed", "literal_atime"):
        value = getattr(args, key, None)
        if value is not None and value is not False:
            overrides[key] = value
    return Command(verb=args.verb, config_path=args.config,
                   output_dir=args.output, overrides=overrides)


def _load_document(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as handle:
        text = handle.read()
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalidError(f"{path} is not valid JSON: {exc}") from exc


def _scenario_from_document(doc: dict, overrides: dict) -> ScenarioConfig:
    try:
        cfg = scenario_from_json(doc)
    except (ValueError, TypeError, KeyError) as exc:
        raise ConfigInvalidError(f"bad scenario document: {exc}") from exc
    env_floor = os.environ.get(PD_FLOOR_ENV)
    if env_floor is not None:
        try:
            cfg = dataclasses.replace(cfg, pd_floor=float(env_floor))
        except ValueError as exc:
            raise ConfigInvalidError(
                f"{PD_FLOOR_ENV}={env_floor!r} is not a number") from exc
    updates = {}
    for key in ("dt", "t_end", "hbar"):
        if key in overrides:
            updates[key] = overrides[key]
    if updates:
        cfg = dataclasses.replace(cfg, **updates)
    report = validate_scenario(cfg)
    if not report.ok:
        raise ConfigInvalidError(f"scenario invalid: {report}", report=report)
    return cfg


class _Workspace:
    """Collects artifacts for one run and writes the manifest last."""

    def __init__(self, output_dir: str, digest: str):
        self.output_dir = output_dir
        self.manifest = RunManifest(scenario_digest=digest,
                                    tool_version=__version__, wall_time=0.0)
        os.makedirs(output_dir, exist_ok=True)

    def write(self, name: str, text: str) -> None:
        atomic_write_text(os.path.join(self.output_dir, name), text)
        self.manifest.outputs.append(name)

    def finish(self, wall_time: float) -> RunManifest:
        self.manifest.wall_time = wall_time
        self.write("run.json", manifest_json(self.manifest))
        return self.manifest


def _solver_drift_budget(tag: str, t_end: float) -> float:
    if tag == "direct":
        return 1e-8 * max(1.0, t_end)
    return 1e-10


def _emit_trajectory(ws: _Workspace, trajectory, cfg: ScenarioConfig) -> None:
    report = invariant_report(trajectory, cfg)
    ws.write(f"trajectory_{trajectory.solver_tag}.csv",
             trajectory_csv(trajectory, report))
    ws.write(f"diagnostics_{trajectory.solver_tag}.csv", diagnostics_csv(report))
    budget = _solver_drift_budget(trajectory.solver_tag, cfg.t_end)
    ws.manifest.status[f"conservation_{trajectory.solver_tag}"] = (
        "pass" if report.max_kk_star_drift() <= budget else "fail")


def _run_simulate(ws: _Workspace, cfg: ScenarioConfig, overrides: dict) -> None:
    solver = overrides.get("solver", "factorized")
    try:
        if solver == "direct":
            trajectory = evolve_direct(cfg)
        elif solver == "series":
            trajectory = evolve_series(cfg, int(overrides.get("terms", 30)))
        else:
            trajectory = evolve_factorized(cfg)
    except NearSingularError as exc:
        # retain whatever was integrated before the rank loss
        if exc.partial is not None and exc.partial.states:
            _emit_trajectory(ws, exc.partial, cfg)
        ws.manifest.status["evolution_complete"] = "fail"
        raise
    ws.manifest.status["evolution_complete"] = "pass"
    _emit_trajectory(ws, trajectory, cfg)


def _run_compare(ws: _Workspace, cfg: ScenarioConfig, overrides: dict) -> None:
    trajectories = {
        "direct": evolve_direct(cfg),
        "factorized": evolve_factorized(cfg),
    }
    constant = cfg.hamiltonian.is_constant() and cfg.field.kind == "constant"
    if constant:
        trajectories["series"] = evolve_series(cfg, int(overrides.get("terms", 30)))
    rows = []
    names = sorted(trajectories)
    for i, a in enumerate(names):
        for b in names[i + 1:]:
            distance = max(
                float(np.linalg.norm(sa.k - sb.k))
                for sa, sb in zip(trajectories[a].states, trajectories[b].states))
            status = "pass" if distance <= COMPARE_TOLERANCE else "fail"
            rows.append((f"{a}_vs_{b}", distance, COMPARE_TOLERANCE, status))
            ws.manifest.status[f"{a}_vs_{b}"] = status
    ws.write("comparison.csv", comparison_csv(rows))
    for tag in names:
        _emit_trajectory(ws, trajectories[tag], cfg)


def _run_critical(ws: _Workspace, cfg: ScenarioConfig, doc: dict) -> None:
    h = cfg.hamiltonian.sample(0.0)
    b = cfg.field.sample(0.0)
    nu = doc.get("nu")
    if nu is None:
        nu = float(np.linalg.eigvalsh(h)[-1]) + 1.0
    if "unitary" in doc:
        try:
            unitary = matrix_from_json(doc["unitary"])
        except ValueError as exc:
            raise ConfigInvalidError(f"bad unitary literal: {exc}") from exc
    else:
        unitary = np.eye(h.shape[0], dtype=complex)
    k = critical_point(CriticalPointSpec(nu=float(nu), unitary=unitary,
                                         hamiltonian=h, b=float(b)))
    residual = float(np.linalg.norm(
        k @ h + (b * b) * adjoint_inverse(k, cfg.pd_floor) - float(nu) * k))
    relative = residual / float(np.linalg.norm(k))
    payload = {
        "nu": float(nu),
        "b": float(b),
        "k": matrix_to_json(k),
        "residual": residual,
        "relative_residual": relative,
    }
    ws.write("critical_point.json", json.dumps(payload, indent=2, sort_keys=True) + "\n")
    ws.manifest.status["euler_lagrange_residual"] = (
        "pass" if relative <= 1e-11 else "fail")


def _moving_inputs(cfg: ScenarioConfig, doc: dict):
    try:
        ambient_dim = int(doc["ambient_dim"])
        rank = int(doc["rank"])
        psi0 = matrix_from_json(doc["psi0"])
        phi0 = matrix_from_json(doc["phi0"])
        a0 = matrix_from_json(doc["coeff_a0"])
    except KeyError as exc:
        raise ConfigInvalidError(
            f"moving scenario is missing key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise ConfigInvalidError(f"bad moving scenario matrix: {exc}") from exc
    if cfg.hamiltonian.dim != ambient_dim:
        raise ConfigInvalidError(
            f"hamiltonian dimension {cfg.hamiltonian.dim} != ambient_dim {ambient_dim}")
    space = AmbientSpace(dim_h1=ambient_dim, dim_h2=phi0.shape[0], n=rank,
                         ambient_hamiltonian=cfg.hamiltonian)
    return space, psi0, phi0, a0


def _run_moving(ws: _Workspace, cfg: ScenarioConfig, doc: dict,
                overrides: dict) -> None:
    space, psi0, phi0, a0 = _moving_inputs(cfg, doc)
    literal = bool(overrides.get("literal_atime", False))
    try:
        solution = build_moving_solution(
            space, psi0, phi0, a0, cfg.field, cfg.hbar, cfg.t_end, cfg.dt,
            cfg.output_stride, cfg.pd_floor, literal=literal)
    except MesodynError as exc:
        raise ConfigInvalidError(f"moving scenario rejected: {exc}") from exc
    operators = assemble_moving_solution(space, solution.phi0,
                                         solution.samples(),
                                         solution.coefficient_samples())
    residuals = {t: r for t, r in
                 weak_residual(operators, space, cfg.field, cfg.hbar,
                               cfg.pd_floor)} if len(operators) >= 3 else {}
    k0 = operators[0][1]
    p0 = image_projector(k0, cfg.pd_floor)
    gram0 = k0 @ k0.conj().T
    rows = []
    image_worst = 0.0
    radial_worst = 0.0
    for t, k in operators:
        image_drift = float(np.linalg.norm(image_projector(k, cfg.pd_floor) - p0))
        radial_drift = float(np.linalg.norm(k @ k.conj().T - gram0))
        image_worst = max(image_worst, image_drift)
        radial_worst = max(radial_worst, radial_drift)
        rows.append((t, residuals.get(t), image_drift, radial_drift))
    ws.write("moving_report.csv", residual_report_csv(rows))
    ws.manifest.status["image_fixed"] = "pass" if image_worst <= 1e-10 else "fail"
    ws.manifest.status["radial_conserved"] = ("pass" if radial_worst <= 1e-9
                                              else "fail")


def _run_flux(ws: _Workspace, cfg: ScenarioConfig, doc: dict) -> None:
    if "upsilon" not in doc or "total_flux" not in doc:
        raise ConfigInvalidError(
            "flux scenario needs 'upsilon' (matrix literal) and 'total_flux'")
    try:
        upsilon = matrix_from_json(doc["upsilon"]).reshape(-1)
    except ValueError as exc:
        raise ConfigInvalidError(f"bad upsilon literal: {exc}") from exc
    total_flux = float(doc["total_flux"])
    flux = FluxInput(upsilon=upsilon, total_flux=total_flux)
    trajectory = evolve_factorized(cfg)
    times = []
    distributions = []
    worst = 0.0
    for state in trajectory.states:
        dist = flux_distribution(state.k, flux)
        times.append(state.t)
        distributions.append(dist)
        worst = max(worst, abs(float(np.sum(dist)) - total_flux))
    ws.write("flux.csv", flux_csv(times, distributions))
    ws.manifest.status["flux_normalization"] = (
        "pass" if worst <= 1e-12 * max(1.0, abs(total_flux)) else "fail")


def _run_verify(ws: _Workspace, overrides: dict) -> None:
    seed = int(overrides.get("seed", 42))
    results = run_battery(seed=seed)
    ws.write("checks.csv", checks_csv(results))
    for result in results:
        ws.manifest.status[result.name] = "pass" if result.passed else "fail"


def run(cmd: Command) -> RunManifest:
    """Dispatch one parsed command; returns the written manifest."""
    start = time.perf_counter()
    if cmd.verb == "verify":
        seed = int(cmd.overrides.get("seed", 42))
        digest = hashlib.sha256(f"verify-battery-seed-{seed}".encode()).hexdigest()
        ws = _Workspace(cmd.output_dir, digest)
        _run_verify(ws, cmd.overrides)
        # wall_time stays 0.0: verify manifests are byte-reproducible.
        return ws.finish(0.0)

    doc = _load_document(cmd.config_path)
    cfg = _scenario_from_document(doc, cmd.overrides)
    ws = _Workspace(cmd.output_dir, cfg.digest())
    try:
        if cmd.verb == "simulate":
            _run_simulate(ws, cfg, cmd.overrides)
        elif cmd.verb == "compare":
            _run_compare(ws, cfg, cmd.overrides)
        elif cmd.verb == "critical":
            _run_critical(ws, cfg, doc)
        elif cmd.verb == "moving":
            _run_moving(ws, cfg, doc, cmd.overrides)
        elif cmd.verb == "flux":
            _run_flux(ws, cfg, doc)
        else:
            raise UsageError(f"unknown verb {cmd.verb!r}")
    except NearSingularError:
        # partial artifacts are already on disk; still leave a manifest
        ws.finish(time.perf_counter() - start)
        raise
    return ws.finish(time.perf_counter() - start)


def main(argv=None) -> int:
    argv = sys.argv[1:] if argv is None else list(argv)
    try:
        cmd = parse_command(argv)
    except UsageError as exc:
        print(f"mesodyn: {exc}", file=sys.stderr)
        return 2
    try:
        manifest = run(cmd)
    except UsageError as exc:
        print(f"mesodyn: {exc}", file=sys.stderr)
        return 2
    except ConfigInvalidError as exc:
        print(f"mesodyn: invalid config: {exc}", file=sys.stderr)
        return 3
    except NearSingularError as exc:
        print(f"mesodyn: near-singular: {exc} "
              f"(last good time {exc.last_good_time})", file=sys.stderr)
        return 4
    except OSError as exc:
        print(f"mesodyn: i/o error: {exc}", file=sys.stderr)
        return 5
    except MesodynError as exc:
        print(f"mesodyn: {exc}", file=sys.stderr)
        return 1
    failed = [name for name, value in manifest.status.items() if value != "pass"]
    if failed:
        print(f"mesodyn: failed checks: {', '.join(sorted(failed))}",
              file=sys.stderr)
        return 1
    print(f"mesodyn: ok ({', '.join(manifest.outputs)})")
    return 0


if __name__ == "__main__":
    sys.exit(main())
