"""Batch driver: parse a key = value config, build the problem, run a
command, and write CSV/JSONL artifacts plus a manifest.

Commands: state (one solve), optimize (control recovery), verify (the
property suites), sweep-eps (optimization along a smoothing schedule),
make-target (solve at a reference control and write z.csv).
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .control import OptimizerConfig, epsilon_path, optimize
from .expressions import ExpressionError, parse_expression
from .field import (
    BoundaryData,
    Grid2D,
    ScalarField,
    SolverError,
    read_field_csv,
    write_field_csv,
)
from .regularization import Smoother, default_width
from .state import (
    ProblemData,
    free_boundary,
    solve_one_phase,
    solve_state,
    write_labels_csv,
)
from .verify import VerifyConfig, run_all

__all__ = ["RunConfig", "ConfigError", "parse_config", "run", "main"]

COMMANDS = ("state", "optimize", "verify", "sweep-eps", "make-target")

_COMMON_KEYS = {
    "command", "nx", "ny", "ax", "bx", "ay", "by", "out", "seed",
    "f_plus", "f_minus", "g", "phi", "eps", "tol", "max_newton", "mode",
}
_KEYS_BY_COMMAND = {
    "state": {"free_boundary", "utol", "gtol"},
    "optimize": {"z", "lambda", "step0", "armijo_c", "shrink", "max_iters", "stat_tol"},
    "sweep-eps": {
        "z", "lambda", "step0", "armijo_c", "shrink", "max_iters", "stat_tol", "eps_list",
    },
    "make-target": {"phi_dagger"},
    "verify": {"pairs", "directions", "check_tol"},
}
_REQUIRED_BY_COMMAND = {
    "state": {"g"},
    "optimize": {"g", "z", "lambda"},
    "sweep-eps": {"g", "z", "lambda", "eps_list"},
    "make-target": {"g", "phi_dagger"},
    "verify": set(),
}


class ConfigError(ValueError):
    """Bad config text: parse failure or invalid/missing keys."""


@dataclass
class RunConfig:
    """Validated run description built from the config text."""

    command: str
    raw: dict[str, str]
    text: str
    grid: Grid2D | None
    out: str = "out"
    seed: int = 0
    mode: str = "two-phase"
    numbers: dict[str, float] = field(default_factory=dict)
    eps_list: tuple[float, ...] = ()


def _parse_lines(text: str) -> dict[str, str]:
    entries: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = stripped.split("=", 1)
        key, value = key.strip(), value.strip()
        if not key or not value:
            raise ConfigError(f"line {lineno}: empty key or value")
        if key in entries:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        entries[key] = value
    return entries


def _float_key(raw: dict[str, str], key: str, *, positive: bool = False) -> float | None:
    if key not in raw:
        return None
    try:
        val = float(raw[key])
    except ValueError:
        raise ConfigError(f"key {key!r}: not a number: {raw[key]!r}") from None
    if positive and not val > 0.0:
        raise ConfigError(f"key {key!r}: must be positive, got {val!r}")
    return val


def parse_config(text: str, command: str | None = None) -> RunConfig:
    """Parse and validate key = value config text; unknown keys are rejected."""
    raw = _parse_lines(text)
    command = command or raw.get("command")
    if command is None:
        raise ConfigError("missing required key 'command'")
    if command not in COMMANDS:
        raise ConfigError(f"unknown command {command!r}; expected one of {COMMANDS}")
    if "command" in raw and raw["command"] != command:
        raise ConfigError(
            f"config says command = {raw['command']!r} but {command!r} was requested"
        )

    allowed = _COMMON_KEYS | _KEYS_BY_COMMAND[command]
    for key in raw:
        if key not in allowed:
            raise ConfigError(f"unknown key {key!r} for command {command!r}")
    for key in _REQUIRED_BY_COMMAND[command]:
        if key not in raw:
            raise ConfigError(f"missing required key {key!r} for command {command!r}")

    grid = None
    if command != "verify":
        try:
            nx = int(raw.get("nx", "33"))
            ny = int(raw.get("ny", "33"))
        except ValueError as exc:
            raise ConfigError(f"grid size keys nx/ny must be integers: {exc}") from None
        corners = {
            k: _float_key(raw, k) for k in ("ax", "bx", "ay", "by") if k in raw
        }
        try:
            grid = Grid2D(
                nx,
                ny,
                corners.get("ax", 0.0),
                corners.get("bx", 1.0),
                corners.get("ay", 0.0),
                corners.get("by", 1.0),
            )
        except ValueError as exc:
            raise ConfigError(str(exc)) from None

    mode = raw.get("mode", "two-phase")
    if mode not in ("two-phase", "one-phase"):
        raise ConfigError(f"key 'mode': expected two-phase or one-phase, got {mode!r}")

    numbers: dict[str, float] = {}
    for key, positive in (
        ("eps", True), ("tol", True), ("lambda", True), ("step0", True),
        ("armijo_c", True), ("shrink", True), ("stat_tol", True),
        ("utol", True), ("gtol", True), ("check_tol", True),
    ):
        val = _float_key(raw, key, positive=positive)
        if val is not None:
            numbers[key] = val
    for key in ("max_newton", "max_iters", "pairs", "directions"):
        if key in raw:
            try:
                ival = int(raw[key])
            except ValueError:
                raise ConfigError(f"key {key!r}: not an integer: {raw[key]!r}") from None
            if ival < 1:
                raise ConfigError(f"key {key!r}: must be at least 1")
            numbers[key] = ival
    if "armijo_c" in numbers and not numbers["armijo_c"] < 1.0:
        raise ConfigError("key 'armijo_c': must lie in (0, 1)")
    if "shrink" in numbers and not numbers["shrink"] < 1.0:
        raise ConfigError("key 'shrink': must lie in (0, 1)")

    eps_list: tuple[float, ...] = ()
    if "eps_list" in raw:
        try:
            eps_list = tuple(float(t) for t in raw["eps_list"].split(","))
        except ValueError:
            raise ConfigError(f"key 'eps_list': not a comma-separated float list") from None
        if any(b >= a for a, b in zip(eps_list, eps_list[1:])) or not eps_list:
            raise ConfigError("key 'eps_list': must be strictly decreasing")

    # expressions must at least parse now so errors carry the key name
    for key in ("f_plus", "f_minus", "g", "phi", "phi_dagger", "z"):
        if key in raw and not raw[key].endswith(".csv"):
            try:
                parse_expression(raw[key])
            except ExpressionError as exc:
                raise ConfigError(f"key {key!r}: {exc}") from None

    seed = int(raw.get("seed", "0"))
    return RunConfig(
        command=command,
        raw=raw,
        text=text,
        grid=grid,
        out=raw.get("out", "out"),
        seed=seed,
        mode=mode,
        numbers=numbers,
        eps_list=eps_list,
    )


def _field_from_key(
    config: RunConfig, key: str, default: str | None = None, base: Path | None = None
) -> ScalarField:
    """Evaluate an expression key (or read a field CSV) on the config grid."""
    raw = config.raw.get(key, default)
    if raw is None:
        raise ConfigError(f"missing required key {key!r}")
    if raw.endswith(".csv"):
        path = Path(raw)
        if base is not None and not path.is_absolute():
            path = base / path
        fld = read_field_csv(path)
        if config.grid is not None and fld.grid != config.grid:
            raise ConfigError(f"key {key!r}: CSV grid does not match the config grid")
        return fld
    expr = parse_expression(raw)
    return ScalarField.from_function(config.grid, expr.evaluate)


def _problem_from_config(config: RunConfig, base: Path | None = None) -> ProblemData:
    grid = config.grid
    fp = _field_from_key(config, "f_plus", default="0")
    fm = _field_from_key(config, "f_minus", default="0")
    for key, fld in (("f_plus", fp), ("f_minus", fm)):
        if fld.values.min() < 0.0:
            raise ConfigError(f"key {key!r}: coefficient must be nonnegative nodewise")
    g_expr = parse_expression(config.raw["g"])
    g_full = ScalarField.from_function(grid, g_expr.evaluate)
    ring = g_full.values[grid.boundary_indices()]
    changes_sign = bool(ring.min() < 0.0 < ring.max())
    if config.mode == "two-phase" and not changes_sign:
        print(
            "warning: boundary data g does not change sign on the ring",
            file=sys.stderr,
        )
    g = BoundaryData(ring, sign_changing=changes_sign)
    phi = _field_from_key(config, "phi", default="0", base=base)
    return ProblemData(grid, fp, fm, g, phi)


def _smoother(config: RunConfig, data: ProblemData) -> Smoother:
    eps = config.numbers.get("eps", default_width(data.g))
    return Smoother(eps)


def _optimizer_config(config: RunConfig) -> OptimizerConfig:
    n = config.numbers
    return OptimizerConfig(
        lam=n["lambda"],
        eps=n.get("eps", 0.1),
        step0=n.get("step0", 1.0),
        armijo_c=n.get("armijo_c", 0.1),
        shrink=n.get("shrink", 0.5),
        max_iters=int(n.get("max_iters", 500)),
        stat_tol=n.get("stat_tol", 1e-8),
        state_tol=n.get("tol", 1e-11),
        max_newton=int(n.get("max_newton", 60)),
    )


def _write_manifest(outdir: Path, config: RunConfig, timings: dict[str, float]) -> None:
    manifest = {
        "command": config.command,
        "config_sha256": hashlib.sha256(config.text.encode()).hexdigest(),
        "version": __version__,
        "seed": config.seed,
        "timings": timings,
    }
    (outdir / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")


def _run_state(config: RunConfig, outdir: Path) -> int:
    data = _problem_from_config(config)
    s = _smoother(config, data)
    tol = config.numbers.get("tol", 1e-9)
    max_newton = int(config.numbers.get("max_newton", 50))
    solver = solve_one_phase if config.mode == "one-phase" else solve_state
    sol = solver(data, s, tol=tol, max_newton=max_newton)
    write_field_csv(sol.u, outdir / "u.csv")
    diag = {
        "newton_iters": sol.newton_iters,
        "final_residual": sol.final_residual,
        "energy": sol.energy,
        "converged": sol.converged,
        "eps": s.eps,
    }
    (outdir / "state.json").write_text(json.dumps(diag, indent=2) + "\n")
    if config.raw.get("free_boundary", "false").lower() in ("true", "1", "yes"):
        utol = config.numbers.get("utol", 1e-6)
        gtol = config.numbers.get("gtol", 1e-3)
        write_labels_csv(free_boundary(sol.u, utol, gtol), outdir / "labels.csv")
    if not sol.converged:
        raise SolverError(
            f"state solve stagnated at residual {sol.final_residual:.3e}",
            residual=sol.final_residual,
        )
    return 0


def _write_optimize_artifacts(outdir: Path, report) -> None:
    write_field_csv(report.phi, outdir / "phi.csv")
    write_field_csv(report.u, outdir / "u.csv")
    write_field_csv(report.p, outdir / "p.csv")
    lines = []
    steps = [0.0] + list(report.step_trace)
    for k, (obj, stat) in enumerate(zip(report.objective_trace, report.stationarity_trace)):
        lines.append(
            json.dumps(
                {"iter": k, "objective": obj, "stationarity": stat, "step": steps[k]}
            )
        )
    (outdir / "log.jsonl").write_text("\n".join(lines) + "\n")


def _run_optimize(config: RunConfig, outdir: Path) -> int:
    data = _problem_from_config(config)
    z = _field_from_key(config, "z")
    cfg = _optimizer_config(config)
    report = optimize(data, z, cfg)
    _write_optimize_artifacts(outdir, report)
    return 0


def _run_sweep(config: RunConfig, outdir: Path) -> int:
    data = _problem_from_config(config)
    z = _field_from_key(config, "z")
    cfg = _optimizer_config(config)
    result = epsilon_path(data, z, cfg, config.eps_list)
    for eps, report in zip(config.eps_list, result.reports):
        sub = outdir / f"eps_{eps:g}"
        sub.mkdir(parents=True, exist_ok=True)
        _write_optimize_artifacts(sub, report)
    lines = ["eps_hi,eps_lo,phi_distance,u_distance"]
    for (hi, lo), dphi, du in zip(
        zip(config.eps_list, config.eps_list[1:]),
        result.phi_distances,
        result.u_distances,
    ):
        lines.append(f"{hi!r},{lo!r},{dphi!r},{du!r}")
    (outdir / "distances.csv").write_text("\n".join(lines) + "\n")
    return 0


def _run_make_target(config: RunConfig, outdir: Path) -> int:
    data = _problem_from_config(config)
    phi_dagger = _field_from_key(config, "phi_dagger")
    data = data.with_phi(phi_dagger)
    if not data.phi_in_box():
        raise ConfigError("key 'phi_dagger': reference control must lie in the box")
    s = _smoother(config, data)
    tol = config.numbers.get("tol", 1e-11)
    sol = solve_state(data, s, tol=tol, max_newton=int(config.numbers.get("max_newton", 60)))
    write_field_csv(sol.u, outdir / "z.csv")
    write_field_csv(phi_dagger, outdir / "phi_dagger.csv")
    return 0


def _run_verify(config: RunConfig, outdir: Path) -> int:
    n = config.numbers
    vcfg = VerifyConfig(
        seed=config.seed,
        pairs=int(n.get("pairs", 100)),
        directions=int(n.get("directions", 5)),
        tol=n.get("check_tol", 1e-7),
    )
    reports = run_all(vcfg)
    lines = [json.dumps(asdict(r)) for r in reports]
    (outdir / "checks.jsonl").write_text("\n".join(lines) + "\n")
    failed = [r.name for r in reports if not r.passed]
    for r in reports:
        print(f"{'PASS' if r.passed else 'FAIL'} {r.name}: {r.details}")
    if failed:
        print(f"failed checks: {', '.join(failed)}", file=sys.stderr)
        return 1
    return 0


_RUNNERS = {
    "state": _run_state,
    "optimize": _run_optimize,
    "sweep-eps": _run_sweep,
    "make-target": _run_make_target,
    "verify": _run_verify,
}


def run(config: RunConfig) -> int:
    """Execute a validated config; returns the process exit status."""
    outdir = Path(config.out)
    outdir.mkdir(parents=True, exist_ok=True)
    start = time.perf_counter()
    try:
        status = _RUNNERS[config.command](config, outdir)
    except (ConfigError, ExpressionError, ValueError, SolverError, OSError) as exc:
        record = {"error": type(exc).__name__, "message": str(exc)}
        print(json.dumps(record), file=sys.stderr)
        return 1
    _write_manifest(outdir, config, {"total_s": time.perf_counter() - start})
    return status


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="membrane-opt",
        description="Two-phase membrane solves, optimal control, and verification.",
    )
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, help="path to a key = value config file")
    parser.add_argument("--out", default=None, help="output directory (overrides config)")
    parser.add_argument("--seed", type=int, default=None, help="seed (overrides config)")
    args = parser.parse_args(argv)

    try:
        text = Path(args.config).read_text()
        config = parse_config(text, command=args.command)
    except (OSError, ConfigError) as exc:
        print(json.dumps({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
        return 1
    if args.out is not None:
        config.out = args.out
    if args.seed is not None:
        config.seed = args.seed
    return run(config)


if __name__ == "__main__":
    sys.exit(main())
