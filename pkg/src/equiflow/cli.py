"""Command-line entry point.

Exit codes: 0 success, 1 validation failure or infeasible model, 2 usage or
input-format error, 3 internal failure. Every flag can also be set through an
environment variable prefixed EQUIFLOW_ (precedence: flag > env > config file
> default).
"""

from __future__ import annotations

import json
import os
import shlex
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace

import click

from . import __version__, _json
from .assembler import FarePolicy, FlowSolution, ObjectiveKind
from .demand import cross_validate, demand_set_from_doc, load_demand
from .errors import (
    ConfigError,
    EquiflowError,
    PartitionError,
    ScenarioFailure,
    SchemaError,
    SpecError,
)
from .metrics import (
    evaluate,
    write_demand_histogram_csv,
    write_heatmap_csv,
    write_histogram_csv,
    write_metrics_json,
)
from .netmodel import load_network, network_from_doc, save_network, validate_network
from .paths import decompose, write_paths_csv
from .scenarios import (
    GridCitySpec,
    ScenarioConfig,
    generate_grid_city,
    run_scenario,
    working_network,
)
from .demand import save_demand

_CONTEXT = {"auto_envvar_prefix": "EQUIFLOW", "help_option_names": ["-h", "--help"]}

_OBJECTIVES = click.Choice([k.value for k in ObjectiveKind])
_POLICIES = click.Choice([p.value for p in FarePolicy])


@click.group(context_settings=_CONTEXT)
@click.version_option(__version__, prog_name="equiflow")
def cli() -> None:
    """Intermodal mobility planning: build networks, solve the efficiency LP or
    the sufficiency QP, decompose flows into paths, and report metrics.

    All JSON artifacts embed the format version string "equiflow/1"."""


def _load_config(path: str | None) -> ScenarioConfig:
    if path is None:
        return ScenarioConfig()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SchemaError(f"config {path} is not valid JSON: {exc}") from exc
    return ScenarioConfig.from_doc(doc)


def _apply_overrides(cfg: ScenarioConfig, **kw) -> ScenarioConfig:
    solver = cfg.solver
    for name in ("feas_tol", "gap_tol", "max_iter", "backend"):
        if kw.get(name) is not None:
            solver = replace(solver, **{name: kw.pop(name)})
        else:
            kw.pop(name, None)
    if kw.get("external_cmd") is not None:
        solver = replace(solver, external_command=tuple(shlex.split(kw.pop("external_cmd"))))
    else:
        kw.pop("external_cmd", None)
    updates = {k: v for k, v in kw.items() if v is not None}
    if "n_amod_max" in updates and isinstance(updates["n_amod_max"], str):
        updates["n_amod_max"] = float(updates["n_amod_max"])
    return replace(cfg, solver=solver, **updates)


@cli.command()
@click.option("--network", "network_path", required=True, type=click.Path(exists=False))
@click.option("--demand", "demand_path", type=click.Path(exists=False))
def validate(network_path: str, demand_path: str | None) -> None:
    """Check a network file (and optionally a demand file) against the model
    rules; prints one line per violation."""
    net = load_network(network_path)
    violations = validate_network(net)
    if demand_path:
        dem = load_demand(demand_path)
        violations += cross_validate(net, dem)
    for v in violations:
        click.echo(v)
    if violations:
        raise _Failure(f"{len(violations)} violations")
    click.echo("OK")


@cli.command()
@click.option("--spec", "spec_path", required=True, type=click.Path(exists=False))
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
def generate(spec_path: str, seed: int, out_dir: str) -> None:
    """Generate a deterministic synthetic grid-city instance."""
    try:
        with open(spec_path, "r", encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise SpecError(f"cannot read spec {spec_path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise SpecError(f"spec {spec_path} is not valid JSON: {exc}") from exc
    spec = GridCitySpec.from_doc(doc)
    net, dem = generate_grid_city(spec, seed)
    os.makedirs(out_dir, exist_ok=True)
    save_network(net, os.path.join(out_dir, "network.json"))
    save_demand(dem, os.path.join(out_dir, "demand.json"))
    echo = spec.to_doc()
    echo["seed"] = seed
    _json.dump_path(echo, os.path.join(out_dir, "grid_spec.json"))
    click.echo(
        f"generated {len(net.nodes)} nodes, {len(net.arcs)} arcs, "
        f"{len(dem.demands)} demands -> {out_dir}"
    )


@cli.command()
@click.option("--network", "network_path", required=True, type=click.Path(exists=False))
@click.option("--demand", "demand_path", required=True, type=click.Path(exists=False))
@click.option("--config", "config_path", type=click.Path(exists=False))
@click.option("--objective", type=_OBJECTIVES, required=True)
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--t-suff", type=float)
@click.option("--n-amod-max", type=str)
@click.option("--gamma-reb", type=float)
@click.option("--gamma-time", type=float)
@click.option("--budget/--no-budget", "budget_enabled", default=None)
@click.option("--fare-policy", type=_POLICIES)
@click.option("--safety-threshold", type=float)
@click.option("--seed", type=int)
@click.option("--feas-tol", type=float)
@click.option("--gap-tol", type=float)
@click.option("--max-iter", type=int)
@click.option("--backend", type=click.Choice(["embedded", "external"]))
@click.option("--external-cmd", type=str, help="Backend command line (for --backend external).")
def solve(network_path, demand_path, config_path, objective, out_dir, **overrides) -> None:
    """Run the full pipeline on a network/demand pair and write a scenario
    directory (config, flows, metrics, histogram, heatmap, paths)."""
    net = load_network(network_path)
    dem = load_demand(demand_path)
    fare = overrides.pop("fare_policy", None)
    cfg = _apply_overrides(_load_config(config_path), **overrides)
    if fare is not None:
        cfg = replace(cfg, fare_policy=FarePolicy(fare))
    kind = ObjectiveKind(objective)
    flows, report, assignment = run_scenario(net, dem, cfg, kind, out_dir=out_dir)
    click.echo(f"status: {flows.status}")
    click.echo(f"avg_travel_time_min: {_json.format_float(report.avg_travel_time)}")
    click.echo(f"commute_insufficiency_min2: {_json.format_float(report.commute_insufficiency)}")
    click.echo(f"wrote {out_dir}")


def _load_solution_dir(solution_dir: str):
    def read(name: str):
        p = os.path.join(solution_dir, name)
        try:
            with open(p, "r", encoding="utf-8") as fh:
                return json.load(fh)
        except OSError as exc:
            raise SchemaError(f"cannot read {p}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{p} is not valid JSON: {exc}") from exc

    cfg_doc = read("config.json")
    kind = ObjectiveKind(cfg_doc.get("objective", ObjectiveKind.UTIL_EFF.value))
    cfg = ScenarioConfig.from_doc(cfg_doc)
    net = network_from_doc(read("network.json"))
    dem = demand_set_from_doc(read("demand.json"))
    flows = FlowSolution.from_doc(read("flows.json"))
    return net, dem, cfg, kind, flows, working_network(net, cfg)


@cli.command("decompose")
@click.option("--solution", "solution_dir", required=True, type=click.Path())
def decompose_cmd(solution_dir: str) -> None:
    """Rebuild the explicit path decomposition from a stored scenario directory."""
    _, dem, cfg, _, flows, working = _load_solution_dir(solution_dir)
    assignment = decompose(flows, working, dem, solver_tol=cfg.solver.feas_tol)
    write_paths_csv(assignment, os.path.join(solution_dir, "paths.csv"))
    n_paths = sum(len(v) for v in assignment.paths.values())
    n_cycles = sum(len(v) for v in assignment.cycles.values())
    click.echo(f"decomposed into {n_paths} paths, {n_cycles} cycles -> paths.csv")


@cli.command()
@click.option("--solution", "solution_dir", required=True, type=click.Path())
def report(solution_dir: str) -> None:
    """Recompute every derived artifact (metrics, histograms, heatmap, paths)
    from the inputs stored in a scenario directory."""
    _, dem, cfg, _, flows, working = _load_solution_dir(solution_dir)
    assignment = decompose(flows, working, dem, solver_tol=cfg.solver.feas_tol)
    rep = evaluate(
        flows, dem, working, cfg.t_suff,
        gamma_reb=cfg.gamma_reb, gamma_time=cfg.gamma_time,
        assignment=assignment, bin_width=cfg.histogram_bin_min,
    )
    write_metrics_json(rep, os.path.join(solution_dir, "metrics.json"))
    write_histogram_csv(rep, os.path.join(solution_dir, "histogram.csv"))
    write_demand_histogram_csv(rep, os.path.join(solution_dir, "histogram_by_demand.csv"))
    write_heatmap_csv(rep, os.path.join(solution_dir, "heatmap.csv"))
    write_paths_csv(assignment, os.path.join(solution_dir, "paths.csv"))
    click.echo(f"avg_travel_time_min: {_json.format_float(rep.avg_travel_time)}")
    click.echo(f"commute_insufficiency_min2: {_json.format_float(rep.commute_insufficiency)}")


def _batch_worker(entry_path: str, out_root: str) -> tuple[str, bool, str]:
    name = os.path.splitext(os.path.basename(entry_path))[0]
    try:
        with open(entry_path, "r", encoding="utf-8") as fh:
            entry = json.load(fh)
        name = entry.get("name", name)
        base = os.path.dirname(os.path.abspath(entry_path))

        def resolve(p):
            return p if os.path.isabs(p) else os.path.join(base, p)

        cfg = ScenarioConfig.from_doc(entry.get("config", {})) if entry.get("config") else ScenarioConfig()
        if "seed" in entry:
            cfg = replace(cfg, seed=int(entry["seed"]))
        kind = ObjectiveKind(entry["objective"])
        if entry.get("grid_spec"):
            with open(resolve(entry["grid_spec"]), "r", encoding="utf-8") as fh:
                spec = GridCitySpec.from_doc(json.load(fh))
            net, dem = generate_grid_city(spec, cfg.seed)
        elif entry.get("network") and entry.get("demand"):
            net = load_network(resolve(entry["network"]))
            dem = load_demand(resolve(entry["demand"]))
        else:
            raise SchemaError("batch entry needs either grid_spec or network+demand")
        run_scenario(net, dem, cfg, kind, out_dir=os.path.join(out_root, name))
        return name, True, "ok"
    except Exception as exc:  # report per-scenario failures, do not kill the batch
        return name, False, f"{type(exc).__name__}: {exc}"


@cli.command()
@click.option("--config-dir", "config_dir", required=True, type=click.Path())
@click.option("--out", "out_root", required=True, type=click.Path())
@click.option("--jobs", type=int, default=os.cpu_count() or 1, show_default="logical cores")
def batch(config_dir: str, out_root: str, jobs: int) -> None:
    """Run a scenario matrix: every *.json in CONFIG_DIR is one scenario."""
    entries = sorted(
        os.path.join(config_dir, f) for f in os.listdir(config_dir) if f.endswith(".json")
    )
    if not entries:
        raise SchemaError(f"no *.json scenario entries in {config_dir}")
    os.makedirs(out_root, exist_ok=True)
    failures = 0
    if jobs <= 1 or len(entries) == 1:
        results = [_batch_worker(e, out_root) for e in entries]
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_batch_worker, entries, [out_root] * len(entries)))
    for name, ok, message in results:
        click.echo(f"{name}: {'ok' if ok else 'FAILED: ' + message}")
        failures += 0 if ok else 1
    if failures:
        raise _Failure(f"{failures} of {len(results)} scenarios failed")


class _Failure(Exception):
    """Completed with a negative verdict (exit code 1)."""


def main(argv: list[str] | None = None) -> int:
    try:
        cli.main(args=argv, standalone_mode=False)
        return 0
    except _Failure as exc:
        click.echo(str(exc), err=True)
        return 1
    except ScenarioFailure as exc:
        click.echo(f"scenario failed: {exc}", err=True)
        return 1
    except (SchemaError, SpecError, PartitionError, ConfigError) as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return 2
    except click.UsageError as exc:
        click.echo(f"usage error: {exc.format_message()}", err=True)
        return 2
    except click.exceptions.Exit as exc:
        return int(exc.exit_code)
    except click.Abort:
        return 2
    except EquiflowError as exc:
        click.echo(f"{type(exc).__name__}: {exc}", err=True)
        return 1
    except Exception:
        traceback.print_exc()
        return 3


if __name__ == "__main__":
    sys.exit(main())
