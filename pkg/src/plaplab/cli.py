"""Command-line front end and experiment orchestration.

Configuration comes from an optional UTF-8 JSON file plus flag overrides;
flags win.  Every run writes a ``manifest.json`` with the fully resolved
configuration, seed and package versions into the output directory, and all
artifacts are written atomically (write to a temp name, then rename), so a
rerun with an identical manifest reproduces bit-identical outputs.

Exit codes: 0 success, 1 numerical non-convergence (or sweep violations),
2 invalid configuration.
"""

from __future__ import annotations

import hashlib
import json
import math
import os
import sys
from pathlib import Path

import click
import numpy as np

from . import __version__
from .calculus import lq_norm
from .continuation import run_continuation
from .grid import Grid, VectorField, load_field, make_grid, save_field, field_from_fn
from .inequalities import (
    check_appendix,
    check_mu_bounds,
    check_tensor_lipschitz,
    check_young_type,
    sweeps_to_csv,
)
from .linear_elliptic import ConstantsReport, estimate_constants, solve_poisson
from .nonlinear import ConfigError, SolverConfig, solve_fixed_point
from .oracle import manufactured_problem, minimize

EXIT_OK = 0
EXIT_NONCONVERGED = 1
EXIT_CONFIG = 2

GRID_DEFAULTS = {"n_dims": 2, "resolution": [33, 33], "extents": [1.0, 1.0]}
SOLVER_DEFAULTS = {
    "p": 1.8,
    "mu": 0.1,
    "q": 4.0,
    "picard_tol": 1e-8,
    "picard_max_iters": 200,
    "damping_theta": 1.0,
    "sing_guard": 1e-12,
    "safety_factor": 1.25,
    "lin_tol": 1e-12,
    "samples": 12,
    "ascent_steps": 2,
    "seed": 0,
    "f": {"kind": "sine", "amplitude": 1.0, "modes": None, "components": 1},
}


def _atomic_write(path: Path, data: bytes) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(data)
    os.replace(tmp, path)


def _write_json(path: Path, obj) -> None:
    _atomic_write(path, (json.dumps(obj, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _write_text(path: Path, text: str) -> None:
    _atomic_write(path, text.encode("utf-8"))


def _load_config_file(path: str | None) -> dict:
    if path is None:
        return {}
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        cfg = json.loads(p.read_text("utf-8"))
    except json.JSONDecodeError as e:
        raise ConfigError(f"config file is not valid JSON: {e}") from e
    if not isinstance(cfg, dict):
        raise ConfigError("config file must hold a JSON object")
    return cfg


def _resolve(defaults: dict, file_cfg: dict, flag_cfg: dict) -> dict:
    """defaults < file < flags; nested dicts merge one level deep."""
    out = json.loads(json.dumps(defaults))
    for layer in (file_cfg, flag_cfg):
        for key, val in layer.items():
            if val is None:
                continue
            if isinstance(val, dict) and isinstance(out.get(key), dict):
                out[key].update({k: v for k, v in val.items() if v is not None})
            else:
                out[key] = val
    return out


def _parse_int_list(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return [int(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated integer list, got {text!r}") from e


def _parse_float_list(text: str | None) -> list[float] | None:
    if text is None:
        return None
    try:
        return [float(tok) for tok in text.split(",") if tok.strip()]
    except ValueError as e:
        raise ConfigError(f"expected a comma-separated float list, got {text!r}") from e


def _build_grid(cfg: dict) -> Grid:
    g = cfg["grid"]
    try:
        return make_grid(g["n_dims"], g["resolution"], g["extents"])
    except ValueError as e:
        raise ConfigError(str(e)) from e


def _build_f(cfg: dict, grid: Grid) -> VectorField:
    spec = cfg["f"]
    kind = spec.get("kind", "sine")
    comps = int(spec.get("components", 1))
    if kind == "sine":
        amp = float(spec.get("amplitude", 1.0))
        modes = spec.get("modes") or [1] * grid.n_dims
        if len(modes) != grid.n_dims:
            raise ConfigError(f"f.modes needs {grid.n_dims} entries, got {modes}")
        vals = np.full((comps, *grid.resolution), amp)
        for axis, k in enumerate(modes):
            vals *= np.sin(k * np.pi * grid.mesh[axis] / grid.extents[axis])
        return VectorField(grid, vals)
    if kind == "constant":
        return VectorField(
            grid, np.full((comps, *grid.resolution), float(spec.get("value", 1.0)))
        )
    if kind == "dump":
        path = spec.get("path")
        if not path:
            raise ConfigError("f.kind = dump needs f.path")
        f = load_field(path)
        if f.grid != grid:
            raise ConfigError("field dump grid does not match the configured grid")
        return f
    raise ConfigError(f"unknown f.kind {kind!r} (expected sine, constant or dump)")


def _manifest(command: str, cfg: dict) -> dict:
    return {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "versions": {
            "plaplab": __version__,
            "numpy": np.__version__,
            "python": sys.version.split()[0],
        },
    }


def _solver_config(cfg: dict) -> SolverConfig:
    return SolverConfig(
        p=float(cfg["p"]),
        mu=float(cfg["mu"]),
        q=float(cfg["q"]),
        picard_tol=float(cfg["picard_tol"]),
        picard_max_iters=int(cfg["picard_max_iters"]),
        damping_theta=float(cfg["damping_theta"]),
        sing_guard=float(cfg["sing_guard"]),
        safety_factor=float(cfg["safety_factor"]),
        lin_tol=float(cfg["lin_tol"]),
    )


def _constants_for(cfg: dict, grid: Grid, q: float) -> ConstantsReport | None:
    if float(cfg["p"]) == 2.0:
        return None
    return estimate_constants(
        grid, [q], samples=int(cfg["samples"]),
        ascent_steps=int(cfg["ascent_steps"]), seed=int(cfg["seed"]),
    )


def _common_options(fn):
    fn = click.option("--config", "config_path", type=str, default=None,
                      help="JSON configuration file; flags override it.")(fn)
    fn = click.option("--out", "out_dir", type=str, default="out",
                      help="Output directory for artifacts.")(fn)
    fn = click.option("--seed", type=int, default=None)(fn)
    return fn


@click.group(name="plaplab")
def cli_group():
    """Solver and verification lab for regularized p-Laplacian systems."""


@cli_group.command()
@_common_options
@click.option("--p", type=float, default=None)
@click.option("--mu", type=float, default=None)
@click.option("--q", type=float, default=None)
@click.option("--resolution", type=str, default=None, help="e.g. 65,65")
@click.option("--samples", type=int, default=None, help="constant-estimation samples")
@click.option("--picard-tol", type=float, default=None)
def solve(config_path, out_dir, seed, p, mu, q, resolution, samples, picard_tol):
    """Run the nonlinear fixed-point solver and dump solution and trace."""
    flags = {"seed": seed, "p": p, "mu": mu, "q": q, "samples": samples,
             "picard_tol": picard_tol}
    if resolution is not None:
        res = _parse_int_list(resolution)
        flags["grid"] = {"n_dims": len(res), "resolution": res,
                         "extents": [1.0] * len(res)}
    cfg = _resolve({**SOLVER_DEFAULTS, "grid": GRID_DEFAULTS},
                   _load_config_file(config_path), flags)
    grid = _build_grid(cfg)
    f = _build_f(cfg, grid)
    scfg = _solver_config(cfg)
    scfg.validate(grid)
    constants = _constants_for(cfg, grid, scfg.q)

    out = Path(out_dir)
    _write_json(out / "manifest.json", _manifest("solve", cfg))
    u, trace = solve_fixed_point(f, scfg, constants)
    save_field(u, out / "solution.f64")
    _write_text(out / "trace.csv", trace.to_csv_text())
    _write_json(out / "trace.json", trace.to_dict())
    if constants is not None:
        _write_json(out / "constants.json", constants.to_dict())
    click.echo(f"solve: converged={trace.converged} iters={len(trace.rows)} R={trace.R:.6g}")
    if not trace.converged:
        raise _Nonconverged()


@cli_group.command()
@_common_options
@click.option("--p", type=float, default=None)
@click.option("--mu", type=float, default=None)
@click.option("--tol", type=float, default=None, help="gradient tolerance")
@click.option("--max-iters", type=int, default=None)
@click.option("--resolution", type=str, default=None)
def oracle(config_path, out_dir, seed, p, mu, tol, max_iters, resolution):
    """Minimize the convex flux energy (valid for all mu >= 0)."""
    flags = {"seed": seed, "p": p, "mu": mu, "tol": tol, "max_iters": max_iters}
    if resolution is not None:
        res = _parse_int_list(resolution)
        flags["grid"] = {"n_dims": len(res), "resolution": res,
                         "extents": [1.0] * len(res)}
    defaults = {**SOLVER_DEFAULTS, "grid": GRID_DEFAULTS, "tol": 1e-8,
                "max_iters": 2000}
    cfg = _resolve(defaults, _load_config_file(config_path), flags)
    if not 1.0 < float(cfg["p"]) <= 2.0:
        raise ConfigError(f"p must lie in (1, 2], got {cfg['p']}")
    if float(cfg["mu"]) < 0:
        raise ConfigError(f"mu must be >= 0, got {cfg['mu']}")
    grid = _build_grid(cfg)
    f = _build_f(cfg, grid)

    out = Path(out_dir)
    _write_json(out / "manifest.json", _manifest("oracle", cfg))
    u, rep = minimize(f, float(cfg["p"]), float(cfg["mu"]), float(cfg["tol"]),
                      max_iters=int(cfg["max_iters"]))
    save_field(u, out / "solution.f64")
    _write_json(out / "energy.json", rep.to_dict())
    click.echo(f"oracle: converged={rep.converged} iters={rep.iterations} "
               f"gradient_norm={rep.gradient_norm:.6g}")
    if not rep.converged:
        raise _Nonconverged()


@cli_group.command()
@_common_options
@click.option("--q-list", type=str, default=None, help="e.g. 2,4,8,16")
@click.option("--samples", type=int, default=None)
@click.option("--ascent-steps", type=int, default=None)
@click.option("--resolution", type=str, default=None)
def constants(config_path, out_dir, seed, q_list, samples, ascent_steps, resolution):
    """Estimate the elliptic constants C1, C2(q), C3(q) on a grid."""
    flags = {"seed": seed, "samples": samples, "ascent_steps": ascent_steps}
    if q_list is not None:
        flags["q_list"] = _parse_float_list(q_list)
    if resolution is not None:
        res = _parse_int_list(resolution)
        flags["grid"] = {"n_dims": len(res), "resolution": res,
                         "extents": [1.0] * len(res)}
    defaults = {"grid": GRID_DEFAULTS, "q_list": [2.0, 4.0, 8.0, 16.0],
                "samples": 16, "ascent_steps": 3, "seed": 0}
    cfg = _resolve(defaults, _load_config_file(config_path), flags)
    grid = _build_grid(cfg)

    out = Path(out_dir)
    _write_json(out / "manifest.json", _manifest("constants", cfg))
    try:
        report = estimate_constants(grid, [float(v) for v in cfg["q_list"]],
                                    samples=int(cfg["samples"]),
                                    ascent_steps=int(cfg["ascent_steps"]),
                                    seed=int(cfg["seed"]))
    except ValueError as e:
        raise ConfigError(str(e)) from e
    _write_json(out / "constants.json", report.to_dict())
    click.echo(f"constants: C1={report.C1:.6g} K_band={report.K_band}")


@cli_group.command()
@_common_options
@click.option("--samples", type=int, default=None)
@click.option("--p", type=float, default=None)
@click.option("--mu", type=float, default=None)
@click.option("--mu-list", type=str, default=None, help="for the flux Lipschitz sweep")
def inequalities(config_path, out_dir, seed, samples, p, mu, mu_list):
    """Run all four randomized inequality sweeps."""
    flags = {"seed": seed, "samples": samples, "p": p, "mu": mu}
    if mu_list is not None:
        flags["mu_list"] = _parse_float_list(mu_list)
    defaults = {"samples": 100_000, "seed": 0, "p": 1.5, "mu": 0.01,
                "mu_list": [1e-6, 1e-3, 1.0], "N": 2, "n": 3}
    cfg = _resolve(defaults, _load_config_file(config_path), flags)
    s, sd = int(cfg["samples"]), int(cfg["seed"])
    try:
        sweeps = [
            check_appendix(s, sd, N=int(cfg["N"]), n=int(cfg["n"])),
            check_tensor_lipschitz(s, sd, float(cfg["p"]),
                                   [float(m) for m in cfg["mu_list"]]),
            check_young_type(s, sd, float(cfg["p"])),
            check_mu_bounds(s, sd, float(cfg["p"]), float(cfg["mu"])),
        ]
    except ValueError as e:
        raise ConfigError(str(e)) from e

    out = Path(out_dir)
    _write_json(out / "manifest.json", _manifest("inequalities", cfg))
    for sweep in sweeps:
        _write_json(out / f"{sweep.name}.json", sweep.to_dict())
    _write_text(out / "inequalities.csv", sweeps_to_csv(sweeps))
    total = sum(sw.violations for sw in sweeps)
    click.echo(f"inequalities: {total} violations over {len(sweeps)} sweeps")
    if total > 0:
        raise _Nonconverged()


@cli_group.command()
@_common_options
@click.option("--p", type=float, default=None)
@click.option("--q", type=float, default=None)
@click.option("--mu-schedule", type=str, default=None, help="e.g. 1e-1,1e-2,1e-3")
@click.option("--oracle-tol", type=float, default=None)
@click.option("--resolution", type=str, default=None)
def continuation(config_path, out_dir, seed, p, q, mu_schedule, oracle_tol, resolution):
    """Solve along a decreasing mu schedule and compare to the mu = 0 oracle."""
    flags = {"seed": seed, "p": p, "q": q, "oracle_tol": oracle_tol}
    if mu_schedule is not None:
        flags["mu_schedule"] = _parse_float_list(mu_schedule)
    if resolution is not None:
        res = _parse_int_list(resolution)
        flags["grid"] = {"n_dims": len(res), "resolution": res,
                         "extents": [1.0] * len(res)}
    defaults = {**SOLVER_DEFAULTS, "grid": GRID_DEFAULTS,
                "mu_schedule": [1e-1, 1e-2, 1e-3, 1e-4, 1e-5],
                "oracle_tol": 1e-6}
    cfg = _resolve(defaults, _load_config_file(config_path), flags)
    grid = _build_grid(cfg)
    f = _build_f(cfg, grid)
    scfg = _solver_config(cfg)
    schedule = [float(m) for m in cfg["mu_schedule"]]
    if schedule:
        scfg = SolverConfig(**{**scfg.__dict__, "mu": schedule[0]})
    scfg.validate(grid)
    constants_rep = _constants_for(cfg, grid, scfg.q)

    out = Path(out_dir)
    _write_json(out / "manifest.json", _manifest("continuation", cfg))
    report = run_continuation(f, scfg, schedule, constants_rep,
                              oracle_tol=float(cfg["oracle_tol"]),
                              seed=int(cfg["seed"]))
    _write_json(out / "continuation.json", report.to_dict())
    _write_text(out / "continuation.csv", report.to_csv_text())
    bad = [r.mu for r in report.rows if not r.converged]
    click.echo(f"continuation: envelope_ok={report.monotone_envelope_ok} "
               f"nonconverged={bad}")
    if bad or not report.oracle_converged:
        raise _Nonconverged()


@cli_group.command()
@_common_options
@click.option("--p", type=float, default=None)
@click.option("--mu", type=float, default=None)
@click.option("--q", type=float, default=None)
@click.option("--grids", type=str, default=None, help="e.g. 17,33,65")
@click.option("--amplitude", type=float, default=None, help="manufactured solution amplitude")
def mms(config_path, out_dir, seed, p, mu, q, grids, amplitude):
    """Manufactured-solution convergence study across a grid list."""
    flags = {"seed": seed, "p": p, "mu": mu, "q": q, "amplitude": amplitude}
    if grids is not None:
        flags["grids"] = _parse_int_list(grids)
    defaults = {**SOLVER_DEFAULTS, "grids": [17, 33, 65], "amplitude": 1.0,
                "n_dims": 2}
    cfg = _resolve(defaults, _load_config_file(config_path), flags)
    grids_list = [int(m) for m in cfg["grids"]]
    if len(grids_list) < 2:
        raise ConfigError("an order study needs at least two grids")
    if float(cfg["mu"]) <= 0:
        raise ConfigError("mms uses the nondivergence manufacturing, which needs mu > 0")

    out = Path(out_dir)
    _write_json(out / "manifest.json", _manifest("mms", cfg))
    table = mms_study(
        amplitude=float(cfg["amplitude"]),
        p=float(cfg["p"]),
        mu=float(cfg["mu"]),
        q=float(cfg["q"]),
        grids=grids_list,
        n_dims=int(cfg["n_dims"]),
        picard_tol=float(cfg["picard_tol"]),
        samples=int(cfg["samples"]),
        ascent_steps=int(cfg["ascent_steps"]),
        seed=int(cfg["seed"]),
    )
    lines = ["m,h,err_same,err_cross,order_cross,converged"]
    for row in table:
        oc = "" if row["order_cross"] is None else f"{row['order_cross']:.17g}"
        lines.append(
            f"{row['m']},{row['h']:.17g},{row['err_same']:.17g},"
            f"{row['err_cross']:.17g},{oc},{int(row['converged'])}"
        )
    _write_text(out / "mms.csv", "\n".join(lines) + "\n")
    click.echo("\n".join(lines))
    if any(not row["converged"] for row in table):
        raise _Nonconverged()


def mms_study(
    amplitude: float,
    p: float,
    mu: float,
    q: float,
    grids: list[int],
    n_dims: int = 2,
    picard_tol: float = 1e-9,
    samples: int = 10,
    ascent_steps: int = 2,
    seed: int = 0,
) -> list[dict]:
    """Per grid: same-discretization recovery error and cross-solver distance.

    The manufactured datum makes the sampled field an exact solution of the
    fixed-point solver's discretization, so its recovery error is solver
    tolerance; the distance to the energy minimizer run on the same datum is
    pure cross-discretization error and carries the observed order column.
    """
    if len(grids) < 2:
        raise ConfigError("an order study needs at least two grids")

    def u_fn(*xs):
        out = amplitude
        for x in xs:
            out = out * math.sin(math.pi * x)
        return out

    rows: list[dict] = []
    prev_cross = None
    for m in grids:
        grid = make_grid(n_dims, [m] * n_dims, [1.0] * n_dims)
        ue, f = manufactured_problem(u_fn, p, mu, grid, "nondivergence")
        cfg = SolverConfig(p=p, mu=mu, q=q, picard_tol=picard_tol,
                           picard_max_iters=300)
        constants = (
            None if p == 2.0
            else estimate_constants(grid, [q], samples=samples,
                                    ascent_steps=ascent_steps, seed=seed)
        )
        u_fp, trace = solve_fixed_point(f, cfg, constants)
        u_min, rep = minimize(f, p, mu, tol=min(1e-9, picard_tol),
                              max_iters=4000)
        err_same = lq_norm(VectorField(grid, u_fp.values - ue.values), 2.0)
        err_cross = lq_norm(VectorField(grid, u_fp.values - u_min.values), 2.0)
        order = None if prev_cross is None else float(np.log2(prev_cross / err_cross))
        prev_cross = err_cross
        rows.append({
            "m": m,
            "h": grid.spacing[0],
            "err_same": err_same,
            "err_cross": err_cross,
            "order_cross": order,
            "converged": bool(trace.converged and rep.converged),
        })
    return rows


@cli_group.command()
@_common_options
def report(config_path, out_dir, seed):
    """Summarize the artifacts in an output directory."""
    out = Path(out_dir)
    if not out.is_dir():
        raise ConfigError(f"output directory not found: {out_dir}")
    rows = []
    for path in sorted(out.iterdir()):
        if path.suffix not in (".json", ".csv", ".f64") or path.name == "report.json":
            continue
        data = path.read_bytes()
        rows.append({
            "name": path.name,
            "bytes": len(data),
            "sha256": hashlib.sha256(data).hexdigest(),
        })
    _write_json(out / "report.json", {"artifacts": rows})
    lines = ["name,bytes,sha256"] + [f"{r['name']},{r['bytes']},{r['sha256']}" for r in rows]
    _write_text(out / "report.csv", "\n".join(lines) + "\n")
    click.echo(f"report: {len(rows)} artifacts summarized")


class _Nonconverged(Exception):
    """Internal signal mapping numerical non-convergence to exit code 1."""


def cli(argv: list[str]) -> int:
    """Run the CLI on an argument vector and return the process exit code."""
    try:
        cli_group.main(args=argv, standalone_mode=False)
        return EXIT_OK
    except _Nonconverged:
        return EXIT_NONCONVERGED
    except ConfigError as e:
        click.echo(f"configuration error: {e}", err=True)
        return EXIT_CONFIG
    except click.exceptions.UsageError as e:
        click.echo(f"usage error: {e.format_message()}", err=True)
        return EXIT_CONFIG
    except click.exceptions.Abort:
        return EXIT_CONFIG
    except click.exceptions.ClickException as e:
        e.show()
        return EXIT_CONFIG


def main() -> None:
    sys.exit(cli(sys.argv[1:]))


if __name__ == "__main__":
    main()
