"""Command-line pipeline: fixture, build, calibrate, simulate, r0, analyze, scan.

Every command writes its artifacts plus a ``manifest.json`` recording the
command, input digests, master seed, tool version, timing, and output
digests, so any output file can be reproduced from the manifest alone.

Exit codes: 0 success, 1 runtime failure, 2 usage/validation error.
The report-producing commands render matplotlib figures next to their
delimited outputs.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
import traceback
from datetime import datetime, timezone
from pathlib import Path

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_USAGE = 2

_THREADS_ENV = "EPIFORGE_THREADS"


class CliError(Exception):
    """Validation failure; maps to exit code 2."""


def _version() -> str:
    try:
        from importlib.metadata import version
        return version("epiforge")
    except Exception:
        return "0.1.0"


def _sha256(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _digest_inputs(paths) -> dict:
    out = {}
    for p in paths:
        p = Path(p)
        if p.is_dir():
            for child in sorted(p.rglob("*")):
                if child.is_file():
                    out[str(child)] = _sha256(child)
        elif p.is_file():
            out[str(p)] = _sha256(p)
    return out


def write_manifest(out_dir: Path, command: str, config: dict, inputs,
                   outputs, seed, started: float) -> Path:
    """Atomically write the run manifest at the end of a command."""
    finished = time.time()
    manifest = {
        "command": command,
        "tool_version": _version(),
        "config": config,
        "config_digest": hashlib.sha256(
            json.dumps(config, sort_keys=True, default=str).encode()).hexdigest(),
        "master_seed": seed,
        "input_digests": _digest_inputs(inputs),
        "outputs": {str(Path(p).relative_to(out_dir)): _sha256(Path(p))
                    for p in outputs if Path(p).is_file()},
        "started_utc": datetime.fromtimestamp(started, tz=timezone.utc).isoformat(),
        "finished_utc": datetime.fromtimestamp(finished, tz=timezone.utc).isoformat(),
        "duration_seconds": finished - started,
    }
    path = out_dir / "manifest.json"
    tmp = out_dir / "manifest.json.tmp"
    tmp.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    os.replace(tmp, path)
    return path


def _args_dict(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _resolve_threads(value) -> int | None:
    if value is not None:
        return int(value)
    env = os.environ.get(_THREADS_ENV)
    return int(env) if env else None


def _prepare_numba_threads(threads: int | None) -> None:
    # NUMBA_NUM_THREADS caps set_num_threads and must be set before numba
    # is first imported.
    if threads and "numba" not in sys.modules:
        current = int(os.environ.get("NUMBA_NUM_THREADS", "0") or 0)
        if current < threads:
            os.environ["NUMBA_NUM_THREADS"] = str(threads)


def _int_list(text: str) -> list[int]:
    return [int(x) for x in text.split(",") if x.strip() != ""]


def _float_list(text: str) -> list[float]:
    return [float(x) for x in text.split(",") if x.strip() != ""]


# ----------------------------------------------------------------------
# Commands
# ----------------------------------------------------------------------

def cmd_fixture(args) -> int:
    from .census import write_bundle
    from .fixtures import FixtureError, FixtureSpec, generate_fixture

    started = time.time()
    try:
        spec = FixtureSpec(
            n_slas=args.slas, n_cds_per_sla=args.cds, population_per_cd=args.pop,
            seed=args.seed, n_dzns_per_sla=args.dzns_per_sla, n_states=args.states,
            sla_size_spread=args.spread, n_airports=args.airports)
        spec.validate()
    except FixtureError as exc:
        raise CliError(str(exc)) from exc
    bundle = generate_fixture(spec)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = write_bundle(bundle, out)
    write_manifest(out, "fixture", _args_dict(args) | {"out": str(out)}, [], files,
                   args.seed, started)
    print(f"fixture: {bundle.total_population()} people in {len(bundle.hierarchy.slas)} SLAs -> {out}")
    return EXIT_OK


def cmd_build(args) -> int:
    from .census import BundleValidationError, parse_bundle
    from .popgen import build_population

    started = time.time()
    census_dir = Path(args.census)
    if not census_dir.exists():
        raise CliError(f"census directory {census_dir} does not exist")
    try:
        bundle = parse_bundle(census_dir)
    except BundleValidationError as exc:
        raise CliError(str(exc)) from exc
    population = build_population(bundle, args.seed)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    population.save(out)
    outputs = [out]
    report_path = out.parent / "synthesis_report.json"
    report_path.write_text(json.dumps(population.report, indent=2, sort_keys=True) + "\n")
    outputs.append(report_path)
    if args.csvset:
        outputs += population.export_csvset(Path(args.csvset))
    write_manifest(out.parent, "build", _args_dict(args) | {"out": str(out)},
                   [census_dir], outputs, args.seed, started)
    print(f"build: {population.n_agents} agents, {population.n_groups} groups -> {out}")
    return EXIT_OK


def cmd_calibrate(args) -> int:
    threads = _resolve_threads(args.threads)
    _prepare_numba_threads(threads)
    from . import plots
    from .disease import (DiseaseModel, calibrate_infectious_duration,
                          calibrate_rho, preset, DEFAULT_SETTING_TARGETS)
    from .popgen import Population
    from .rng import stream

    started = time.time()
    pop_path = Path(args.population)
    if not pop_path.exists():
        raise CliError(f"population file {pop_path} does not exist")
    population = Population.load(pop_path)
    model = DiseaseModel.load(args.base_model) if args.base_model else preset()

    gen = calibrate_infectious_duration(
        model.natural_history, stream(args.seed, "calibrate-duration"),
        tables=model.tables)
    from dataclasses import replace
    model = replace(model, natural_history=replace(
        model.natural_history, infectious_days=gen.infectious_days))

    rho = calibrate_rho(population, model, master_seed=args.seed, kappa=args.kappa,
                        n_epidemics=args.epidemics, duration_days=args.duration)
    model = model.with_rho(rho.rho)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    model.save(out)
    report = {
        "infectious_days": gen.infectious_days,
        "generation_time_by_kappa": gen.generation_time_by_kappa,
        "generation_time_converged": gen.converged,
        "rho": rho.rho,
        "setting_fractions": rho.fractions,
        "rho_converged": rho.converged,
    }
    report_path = out.parent / "calibration_report.json"
    report_path.write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
    fig = plots.calibration_figure(rho.fractions, DEFAULT_SETTING_TARGETS,
                                   out.parent / "calibration.png")
    write_manifest(out.parent, "calibrate", _args_dict(args) | {"out": str(out)},
                   [pop_path] + ([args.base_model] if args.base_model else []),
                   [out, report_path, fig], args.seed, started)
    print(f"calibrate: rho={rho.rho:.5f} fractions={rho.fractions} "
          f"infectious_days={gen.infectious_days} -> {out}")
    if not rho.converged:
        print("calibrate: warning: setting fractions missed their target bands",
              file=sys.stderr)
    return EXIT_OK


def _load_sim_inputs(args):
    from .disease import DiseaseModel, preset
    from .popgen import Population

    pop_path = Path(args.population)
    if not pop_path.exists():
        raise CliError(f"population file {pop_path} does not exist")
    population = Population.load(pop_path)
    if args.disease_model:
        model_path = Path(args.disease_model)
        if not model_path.exists():
            raise CliError(f"disease model {model_path} does not exist")
        model = DiseaseModel.load(model_path)
    else:
        model = preset()
    return population, model


def cmd_simulate(args) -> int:
    threads = _resolve_threads(args.threads)
    _prepare_numba_threads(threads)
    from . import analysis, plots
    from .engine import ScenarioError, SimConfig, run_many

    started = time.time()
    scenario_path = Path(args.scenario)
    if not scenario_path.exists():
        raise CliError(f"scenario file {scenario_path} does not exist")
    try:
        config = SimConfig.load(scenario_path)
    except (ScenarioError, KeyError, json.JSONDecodeError) as exc:
        raise CliError(f"invalid scenario: {exc}") from exc
    population, model = _load_sim_inputs(args)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if threads is not None:
        overrides["threads"] = threads
    if overrides:
        from dataclasses import replace
        config = replace(config, **overrides)

    outputs = run_many(population, model, config, args.runs)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for r, out in enumerate(outputs):
        run_dir = out_dir / f"run_{r:03d}"
        run_dir.mkdir(exist_ok=True)
        written += out.write_csv(run_dir, config.output_cadence_days)
        npz = run_dir / "output.npz"
        out.save(npz)
        written.append(npz)
        summary = _run_summary(out)
        sp = run_dir / "summary.json"
        sp.write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
        written.append(sp)
    agg_path = out_dir / "aggregate_incidence.csv"
    analysis.write_aggregate_csv(outputs, agg_path)
    written.append(agg_path)
    fig = plots.epidemic_curve_figure(outputs, out_dir / "epidemic_curve.png")
    written.append(fig)
    write_manifest(out_dir, "simulate", config.to_dict() | {"runs": args.runs},
                   [scenario_path, args.population] +
                   ([args.disease_model] if args.disease_model else []),
                   written, config.seed, started)
    print(f"simulate: {args.runs} run(s), cumulative ill "
          f"{[int(o.cumulative[-1]) if len(o.cumulative) else 0 for o in outputs]} -> {out_dir}")
    return EXIT_OK


def _run_summary(out) -> dict:
    from . import analysis
    from .disease import setting_fractions

    features = analysis.curve_features(out)
    rates = analysis.attack_rate_tables(out)
    return {
        "attack_rates_per_10k": {
            "community": rates.community | {"overall": rates.community_overall},
            "national": rates.national | {"overall": rates.national_overall},
        },
        "setting_fractions": setting_fractions(out.setting_counts),
        "peak_day": features.peak_day,
        "peak_incidence": features.peak_incidence,
        "cumulative_ill": features.cumulative_ill,
        "total_seeds": out.total_seeds,
        "total_transmissions": out.total_transmissions,
    }


def cmd_r0(args) -> int:
    threads = _resolve_threads(args.threads)
    _prepare_numba_threads(threads)
    from . import plots
    from .analysis import r0_curve

    import numpy as np

    started = time.time()
    population, model = _load_sim_inputs(args)
    kappas = _float_list(args.kappas)
    if not kappas:
        raise CliError("--kappas must list at least one value")
    curve = r0_curve(population, model, kappas, args.samples, args.seed, threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "r0_curve.csv"
    with open(csv_path, "w", encoding="utf-8") as fh:
        fh.write("kappa,r0_mean,r0_stderr,n_samples\n")
        for est in curve.estimates:
            counts = [k for k, v in est.histogram.items() for _ in range(v)]
            stderr = (float(np.std(counts, ddof=1)) / (len(counts) ** 0.5)
                      if len(counts) > 1 else 0.0)
            fh.write(f"{est.kappa!r},{est.r0!r},{stderr!r},{est.n_samples}\n")
    figs = [plots.r0_curve_figure(curve, out_dir / "r0_curve.png"),
            plots.secondary_cases_figure(curve, out_dir / "secondary_cases.png")]
    write_manifest(out_dir, "r0", _args_dict(args) | {"out_dir": str(out_dir)},
                   [args.population] + ([args.disease_model] if args.disease_model else []),
                   [csv_path] + figs, args.seed, started)
    print(f"r0: slope={curve.slope:.3f} intercept={curve.intercept:.3f} "
          f"R2={curve.r_squared:.4f} -> {out_dir}")
    return EXIT_OK


def cmd_analyze(args) -> int:
    threads = _resolve_threads(args.threads)
    _prepare_numba_threads(threads)
    from . import analysis, plots
    from .engine import SimOutput
    from .popgen import Population

    started = time.time()
    sim_dir = Path(args.sim)
    run_files = sorted(sim_dir.glob("run_*/output.npz"))
    if not run_files:
        raise CliError(f"no run_*/output.npz found under {sim_dir}")
    outputs = [SimOutput.load(p) for p in run_files]
    population = Population.load(args.population) if args.population else None

    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    features = analysis.curve_features(outputs[0])
    fpath = out_dir / "curve_features.json"
    fpath.write_text(json.dumps(features.to_json(), indent=2, sort_keys=True) + "\n")
    written.append(fpath)

    rates = analysis.attack_rate_tables(outputs[0], population)
    rpath = out_dir / "attack_rates.csv"
    rates.to_csv(rpath)
    written += [rpath, plots.attack_rates_figure(rates, out_dir / "attack_rates.png")]

    n_slas = len(outputs[0].sla_ids)
    if n_slas >= args.bins:
        size_report = analysis.synchrony_by_size(outputs, n_bins=args.bins)
        spath = out_dir / "synchrony_size.csv"
        size_report.to_csv(spath)
        written += [spath, plots.synchrony_report_figure(size_report, out_dir / "synchrony_size.png")]
    if population is not None and n_slas >= 2:
        dist_report = analysis.pairwise_synchrony_by_distance(outputs, population,
                                                              n_bins=args.bins)
        dpath = out_dir / "synchrony_distance.csv"
        dist_report.to_csv(dpath)
        written += [dpath, plots.synchrony_report_figure(dist_report, out_dir / "synchrony_distance.png")]

    if args.choropleth_days:
        days = _int_list(args.choropleth_days)
        try:
            choro = analysis.export_choropleth(outputs[0], days)
        except ValueError as exc:
            raise CliError(str(exc)) from exc
        cpath = out_dir / "choropleth.csv"
        choro.to_csv(cpath)
        mpath = out_dir / "choropleth_meta.json"
        choro.write_metadata(mpath)
        written += [cpath, mpath]

    write_manifest(out_dir, "analyze", _args_dict(args) | {"out_dir": str(out_dir)},
                   [sim_dir] + ([args.population] if args.population else []),
                   written, None, started)
    print(f"analyze: {len(outputs)} run(s) -> {out_dir}")
    return EXIT_OK


def cmd_scan(args) -> int:
    threads = _resolve_threads(args.threads)
    _prepare_numba_threads(threads)
    from . import analysis, plots
    from .popgen import Population

    started = time.time()
    population, model = _load_sim_inputs(args)
    counts = []
    for token in args.sla_counts.split(","):
        token = token.strip()
        counts.append(len(population.sla_ids) if token == "all" else int(token))
    if args.proportions:
        proportions = _float_list(args.proportions)
    else:
        proportions = analysis.log_spaced_proportions(args.proportion_steps)
    scan = analysis.seeding_scan(population, model, counts, proportions,
                                 args.runs_per_cell, args.seed,
                                 duration_days=args.duration, kappa=args.kappa,
                                 threads=threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "seeding_scan.csv"
    scan.to_csv(csv_path)
    fig = plots.seeding_scan_figure(scan, out_dir / "seeding_scan.png")
    write_manifest(out_dir, "scan", _args_dict(args) | {"out_dir": str(out_dir)},
                   [args.population] + ([args.disease_model] if args.disease_model else []),
                   [csv_path, fig], args.seed, started)
    print(f"scan: {len(scan.cells)} cells -> {out_dir}")
    return EXIT_OK


# ----------------------------------------------------------------------
# Parser
# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="epiforge",
        description="Census-driven stochastic influenza epidemic simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fixture", help="generate a synthetic census bundle")
    p.add_argument("--slas", type=int, required=True)
    p.add_argument("--cds", type=int, required=True, help="CDs per SLA")
    p.add_argument("--pop", type=int, required=True, help="people per CD")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--dzns-per-sla", type=int, default=1)
    p.add_argument("--states", type=int, default=2)
    p.add_argument("--spread", type=float, default=0.0,
                   help="lognormal sigma for per-SLA size variation")
    p.add_argument("--airports", type=int, default=1)
    p.set_defaults(func=cmd_fixture)

    p = sub.add_parser("build", help="synthesize a population from census CSVs")
    p.add_argument("--census", required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True, help="population .npz path")
    p.add_argument("--csvset", help="also export the CSV interchange set here")
    p.set_defaults(func=cmd_build)

    p = sub.add_parser("calibrate", help="calibrate rho and the infectious window")
    p.add_argument("--population", required=True)
    p.add_argument("--base-model", help="starting disease model JSON (default preset)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--kappa", type=float, default=2.0)
    p.add_argument("--epidemics", type=int, default=20)
    p.add_argument("--duration", type=int, default=100)
    p.add_argument("--threads", type=int)
    p.add_argument("--out", required=True, help="calibrated disease model JSON path")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("simulate", help="run the epidemic engine")
    p.add_argument("--scenario", required=True)
    p.add_argument("--population", required=True)
    p.add_argument("--disease-model")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--threads", type=int)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--seed", type=int, help="override the scenario seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("r0", help="estimate the reproductive ratio curve")
    p.add_argument("--population", required=True)
    p.add_argument("--disease-model")
    p.add_argument("--kappas", default="1,2,3,4")
    p.add_argument("--samples", type=int, default=500)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_r0)

    p = sub.add_parser("analyze", help="post-process simulate outputs")
    p.add_argument("--sim", required=True, help="simulate out-dir")
    p.add_argument("--population", help="population .npz (for coordinates/attack rates)")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--bins", type=int, default=10)
    p.add_argument("--choropleth-days", help="comma-separated days, e.g. 30,50,62,88")
    p.add_argument("--threads", type=int)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scan", help="seeding-scenario synchrony scan")
    p.add_argument("--population", required=True)
    p.add_argument("--disease-model")
    p.add_argument("--sla-counts", default="1,all",
                   help="comma-separated counts; 'all' = every SLA")
    p.add_argument("--proportions", help="explicit comma-separated proportions")
    p.add_argument("--proportion-steps", type=int, default=6,
                   help="log-spaced steps from 1e-5 to 1 when --proportions is absent")
    p.add_argument("--runs-per-cell", type=int, default=3)
    p.add_argument("--duration", type=int, default=150)
    p.add_argument("--kappa", type=float)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--threads", type=int)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_scan)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except Exception:
        traceback.print_exc()
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
