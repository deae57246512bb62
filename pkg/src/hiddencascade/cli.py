"""Command-line entry point: synth, infer, eval, ingest, report and rerun.

Every command writes ``manifest.json`` (command, resolved parameters, seed,
input/output digests, tool version) into its output directory. Wall-clock
timings go to ``timing.json`` so manifests stay byte-reproducible.
Exit codes: 0 success, 1 validation error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import datetime as dt
import hashlib
import json
import logging
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np

from . import __version__
from .evaluate import (ROWS, DEGRADATION_RULE, ScenarioSpec, SCENARIOS, deviation_alpha,
                       deviation_t, deviation_z, run_scenarios)
from .ingest import EventError, load_events, prepare_inputs
from .likelihood import PoissonProfile, obs_model_from_dict
from .model import (COUNT, REAL, LatentState, ModelError, load_network, load_observations, read_json,
                    save_network, save_observations, write_json)
from .sampler import ConfigurationError, GibbsConfig, SupportError, run_chains, summarize
from .synth import SynthConfig, generate_dataset

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

log = logging.getLogger("hiddencascade")

# ModelError, ConfigurationError, EventError and the JSON/TOML decode errors are ValueErrors
VALIDATION_ERRORS = (ValueError, FileNotFoundError, KeyError, TypeError)


def load_config(path) -> dict:
    """TOML or JSON, chosen by extension (JSON for anything not ending in .toml)."""
    if path is None:
        return {}
    text = Path(path).read_text()
    return tomllib.loads(text) if str(path).endswith(".toml") else json.loads(text)


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _rel(path, out) -> str:
    return os.path.relpath(Path(path).resolve(), Path(out).resolve())


def write_manifest(out: Path, command: str, params: dict, seed, inputs: dict, started: float):
    outputs = {p.name: sha256(p) for p in sorted(out.iterdir())
               if p.is_file() and p.name not in ("manifest.json", "timing.json")}
    manifest = {
        "command": command,
        "params": params,
        "seed": seed,
        "inputs": {k: {"path": _rel(v, out), "sha256": sha256(v)} for k, v in sorted(inputs.items())},
        "outputs": outputs,
        "version": __version__,
    }
    write_json(out / "manifest.json", manifest)
    write_json(out / "timing.json", {"wall_clock_s": round(time.time() - started, 3),
                                     "finished": dt.datetime.now().isoformat(timespec="seconds")})


# -- synth ----------------------------------------------------------------------------

def cmd_synth(args) -> dict:
    cfg_data = load_config(args.config)
    if args.scenario:
        cfg_data = {**SCENARIOS[args.scenario], **cfg_data}
    cfg = SynthConfig.from_dict(cfg_data)
    seed = cfg.tree_seed if args.seed is None else args.seed
    ds = generate_dataset(cfg, seed=seed)
    out = args.out
    save_network(out / "network.json", ds.net)
    save_observations(out / "observations.csv", ds.obs)
    write_json(out / "truth.json", {
        **ds.truth.to_dict(ds.net),
        "tree": [[int(i) + 1, int(j) + 1] for i, j in zip(*np.nonzero(ds.tree))],
    })
    write_json(out / "obs_model.json", cfg.obs_model().to_dict())
    return dict(params={"config": cfg.to_dict()}, seed=seed, inputs={})


# -- infer ----------------------------------------------------------------------------

def _obs_model(args, conf, n_nodes, obs_kind):
    if args.obs_model:
        return obs_model_from_dict(read_json(args.obs_model), n_nodes)
    if "model" in conf:
        return obs_model_from_dict(conf["model"], n_nodes)
    if obs_kind == COUNT:
        return PoissonProfile()
    raise ModelError("real-valued observations need a Gaussian model (--obs-model or [model])")


def cmd_infer(args) -> dict:
    conf = load_config(args.config)
    net = load_network(args.network)
    obs = load_observations(args.observations)
    model = _obs_model(args, conf, net.n_nodes, obs.kind)
    if model.kind == REAL and obs.kind == COUNT:
        # integer-valued series are valid Gaussian data too
        obs = load_observations(args.observations, kind=REAL)
    gibbs = dict(conf.get("gibbs", {}))
    if args.seed is not None:
        gibbs["seed"] = args.seed
    for key in ("total_iters", "burn_in"):
        if getattr(args, key) is not None:
            gibbs[key] = getattr(args, key)
    cfg = GibbsConfig.from_dict(gibbs)
    top_k = int(conf.get("top_k", args.top_k))
    chains = run_chains(net, obs, model, cfg, n_chains=args.chains)
    summary = summarize(chains, top_k=top_k)
    data = summary.to_dict()
    data["chains"] = [{"seed": c.seed, "acceptance_rate": c.acceptance_rate, "mh_step": c.mh_step,
                       "n_samples": len(c)} for c in chains]
    data["labels"] = [net.label(i) for i in range(net.n_nodes)]
    write_json(args.out / "summary.json", data)
    if args.write_chain:
        with open(args.out / "chain.jsonl", "w") as fh:
            for c in chains:
                c.to_jsonl(fh)
    inputs = {"network": args.network, "observations": args.observations}
    if args.obs_model:
        inputs["obs_model"] = args.obs_model
    return dict(params={"gibbs": cfg.to_dict(), "model": model.to_dict(), "top_k": top_k,
                        "chains": args.chains, "write_chain": args.write_chain},
                seed=cfg.seed, inputs=inputs)


# -- eval -----------------------------------------------------------------------------

def pair_metrics(truth: dict, summary: dict) -> dict:
    n = len(truth["t"])
    if len(summary["t_hat"]) != n:
        raise ModelError("truth and summary have different node counts")
    est = LatentState.from_dict({"z": summary["z_hat"], "t": summary["t_hat"],
                                 "alpha": summary["alpha_hat"]}, n)
    ref = LatentState.from_dict(truth, n)
    return {"D_t": deviation_t(est.t, ref.t), "D_z": deviation_z(est.z, ref.z),
            "D_alpha": deviation_alpha(est.alpha, ref.alpha)}


def cmd_eval(args) -> dict:
    if args.truth and args.summary:
        metrics = pair_metrics(read_json(args.truth), read_json(args.summary))
        write_json(args.out / "metrics.json", metrics)
        return dict(params={"mode": "pair"}, seed=None,
                    inputs={"truth": args.truth, "summary": args.summary})
    if not args.scenarios:
        raise ModelError("eval needs --truth and --summary, or --scenarios")
    seed = 0 if args.seed is None else args.seed
    conf = load_config(args.config)
    specs = []
    for label in args.scenarios.split(","):
        base = {**SCENARIOS.get(label, {}), **conf.get(label, {})}
        for key in ("replications", "total_iters", "burn_in", "n_nodes"):
            if getattr(args, key, None) is not None:
                base[key] = getattr(args, key)
        specs.append(ScenarioSpec(label=label, **base))

    def progress(label, done, total):
        log.info("scenario %s: %d/%d replications", label, done, total)

    report = run_scenarios(specs, seed=seed, progress=progress)
    (args.out / "report.csv").write_text(report.to_csv())
    write_json(args.out / "report.json", report.to_dict())
    return dict(params={"mode": "scenarios", "scenarios": [s.__dict__ for s in specs]},
                seed=seed, inputs={})


# -- ingest ---------------------------------------------------------------------------

def cmd_ingest(args) -> dict:
    events = load_events(args.events)
    seed = 0 if args.seed is None else args.seed
    start = dt.date.fromisoformat(args.start) if args.start else None
    end = dt.date.fromisoformat(args.end) if args.end else None
    res = prepare_inputs(events, k=args.k, seed=seed, start=start, end=end,
                         silent_threshold=args.silent_threshold)
    write_json(args.out / "regions.json", res.regions_dict())
    save_network(args.out / "network.json", res.net)
    save_observations(args.out / "observations.csv", res.obs)
    write_json(args.out / "obs_model.json", PoissonProfile().to_dict())
    return dict(params={"k": args.k, "start": res.start.isoformat(), "end": res.end.isoformat(),
                        "silent_threshold": args.silent_threshold},
                seed=seed, inputs={"events": args.events})


# -- report ---------------------------------------------------------------------------

def format_report(report: dict) -> str:
    lines = [f"{'scenario':<9}{'metric':<9}{'estimator':<10}{'mean':>10}{'95% CI':>24}"]
    for r in report["summary"]:
        lines.append(f"{r['scenario']:<9}{r['metric']:<9}{r['estimator']:<10}{r['mean']:>10.4f}"
                     f"   [{r['ci_low']:9.4f}, {r['ci_high']:9.4f}]")
    lines.append("")
    lines.append("graceful degradation, " + report["degradation_rule"])
    for label, ok in report["degradation_holds"].items():
        lines.append(f"  {label}: {'holds' if ok else 'violated'}")
    return "\n".join(lines) + "\n"


def cmd_report(args) -> dict:
    text = format_report(read_json(args.report))
    (args.out / "report.txt").write_text(text)
    sys.stdout.write(text)
    return dict(params={}, seed=None, inputs={"report": args.report})


# -- rerun ----------------------------------------------------------------------------

def rerun_argv(manifest_path, out, scratch) -> list[str]:
    """Rebuild the command line that produced ``manifest_path``, writing to ``out``.

    Inline configuration is materialised as files under ``scratch``.
    """
    manifest_path = Path(manifest_path)
    m = read_json(manifest_path)
    base = manifest_path.parent
    inp = {k: str((base / v["path"]).resolve()) for k, v in m["inputs"].items()}
    for k, v in m["inputs"].items():
        if sha256(inp[k]) != v["sha256"]:
            raise ModelError(f"input {k} ({inp[k]}) changed since the manifest was written")
    p, cmd = m["params"], m["command"]
    argv = [cmd, "--out", str(out)]
    if m["seed"] is not None:
        argv += ["--seed", str(m["seed"])]
    if cmd == "synth":
        cfg_path = Path(scratch) / "synth_config.json"
        write_json(cfg_path, p["config"])
        argv += ["--config", str(cfg_path)]
    elif cmd == "infer":
        cfg_path = Path(scratch) / "infer_config.json"
        write_json(cfg_path, {"gibbs": p["gibbs"], "model": p["model"], "top_k": p["top_k"]})
        argv += ["--network", inp["network"], "--observations", inp["observations"],
                 "--config", str(cfg_path), "--chains", str(p["chains"])]
        if "obs_model" in inp:
            argv += ["--obs-model", inp["obs_model"]]
        if p["write_chain"]:
            argv.append("--write-chain")
    elif cmd == "ingest":
        argv += ["--events", inp["events"], "--k", str(p["k"]), "--start", p["start"],
                 "--end", p["end"], "--silent-threshold", str(p["silent_threshold"])]
    elif cmd == "eval" and p["mode"] == "pair":
        argv += ["--truth", inp["truth"], "--summary", inp["summary"]]
    elif cmd == "eval":
        cfg_path = Path(scratch) / "scenario_config.json"
        specs = {s["label"]: {k: v for k, v in s.items() if k != "label"} for s in p["scenarios"]}
        write_json(cfg_path, specs)
        argv += ["--scenarios", ",".join(specs), "--config", str(cfg_path)]
    elif cmd == "report":
        argv += ["--report", inp["report"]]
    return argv


def cmd_rerun(args) -> int:
    with tempfile.TemporaryDirectory() as scratch:
        try:
            argv = rerun_argv(args.manifest, args.out, scratch)
        except VALIDATION_ERRORS as exc:
            print(f"error: {exc}", file=sys.stderr)
            return 1
        return main(argv + (["--verbose"] if args.verbose else []))


# -- parser ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="single source of randomness")
    common.add_argument("--out", type=Path, required=True, help="output directory")
    common.add_argument("--chains", type=int, default=1, help="independent chains (infer)")
    common.add_argument("--verbose", "-v", action="store_true")

    parser = argparse.ArgumentParser(prog="hiddencascade", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset bundle")
    p.add_argument("--config", help="SynthConfig as TOML or JSON")
    p.add_argument("--scenario", choices=sorted(SCENARIOS), help="preset mu2/b2 values")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("infer", parents=[common], help="sample the posterior and summarise it")
    p.add_argument("--network", required=True)
    p.add_argument("--observations", required=True)
    p.add_argument("--obs-model", help="observation model JSON (as written by synth)")
    p.add_argument("--config", help="TOML/JSON with [gibbs], [model] and top_k")
    p.add_argument("--total-iters", dest="total_iters", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--top-k", dest="top_k", type=int, default=4)
    p.add_argument("--write-chain", action="store_true", help="also write chain.jsonl")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", parents=[common], help="metrics for a summary, or scenario runs")
    p.add_argument("--truth")
    p.add_argument("--summary")
    p.add_argument("--scenarios", help="comma-separated labels, e.g. A,B,C,D")
    p.add_argument("--config", help="per-scenario overrides keyed by label")
    p.add_argument("--replications", type=int)
    p.add_argument("--total-iters", dest="total_iters", type=int)
    p.add_argument("--burn-in", dest="burn_in", type=int)
    p.add_argument("--n-nodes", dest="n_nodes", type=int)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ingest", parents=[common], help="events CSV to inference inputs")
    p.add_argument("--events", required=True)
    p.add_argument("--k", type=int, default=8)
    p.add_argument("--start", help="first day of the study period (YYYY-MM-DD)")
    p.add_argument("--end", help="last day of the study period (YYYY-MM-DD)")
    p.add_argument("--silent-threshold", dest="silent_threshold", type=float, default=1.0)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("report", parents=[common], help="render a scenario report as a table")
    p.add_argument("--report", required=True, help="report.json from eval --scenarios")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("rerun", help="repeat the run described by a manifest")
    p.add_argument("manifest")
    p.add_argument("--out", type=Path, required=True)
    p.add_argument("--verbose", "-v", action="store_true")
    p.set_defaults(func=cmd_rerun)
    return parser


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:
        # argparse exits with 2 on usage errors; those are validation errors here
        return 1 if exc.code else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "rerun":
        return cmd_rerun(args)
    started = time.time()
    try:
        args.out.mkdir(parents=True, exist_ok=True)
        info = args.func(args)
        write_manifest(args.out, args.command, info["params"], info["seed"], info["inputs"], started)
    except VALIDATION_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (SupportError, RuntimeError, OSError) as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
