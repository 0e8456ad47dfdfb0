"""Command line entry point: ``patchdd run | reference | sweep | compare``.

Exit codes: 0 success, 1 configuration error, 2 non-convergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from importlib import resources
from pathlib import Path

import numpy as np

from .config import (ConfigError, build_params, build_relaxation, build_spec, config_hash,
                     dumps, load_config)
from .global_local import PceField, error_indicator, iterate
from .mesh import MeshError
from .postproc import export_statistics, merge_multiscale, write_node_csv
from .problem import ConfigurationError, GlobalProblem
from .reference import ReferenceSolution, solve_reference

EXIT_OK, EXIT_CONFIG, EXIT_NOT_CONVERGED = 0, 1, 2


def bundled_config(name: str) -> Path:
    """Path of a configuration shipped with the package (e.g. ``bench_iso``)."""
    if not name.endswith(".json"):
        name += ".json"
    return Path(str(resources.files("patchdd") / "configs" / name))


def _resolve_config(arg: str) -> Path:
    p = Path(arg)
    if not p.exists() and not p.is_absolute() and bundled_config(arg).exists():
        return bundled_config(arg)
    return p


def _fmt(v) -> str:
    return repr(float(v)) if not (isinstance(v, float) and math.isnan(v)) else "nan"


def history_columns(Q: int) -> list:
    cols = ["k", "rho_k", "error_indicator"]
    for name in ("N", "dim_w", "dim_lambda"):
        cols += [f"{name}_{q + 1}" for q in range(Q)]
    return cols


def write_history(path, history, Q, chash):
    with open(path, "w", newline="") as fh:
        fh.write(f"# config_hash={chash}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(history_columns(Q))
        for row in history:
            w.writerow([row["k"], _fmt(row["rho_k"]), _fmt(row["error_indicator"])]
                       + row["N"] + row["dim_w"] + row["dim_lambda"])


def read_history(path):
    with open(path) as fh:
        lines = [l for l in fh if not l.startswith("#")]
    return list(csv.DictReader(lines))


def load_reference(path) -> ReferenceSolution:
    return ReferenceSolution.from_dict(json.loads(Path(path).read_text()))


def load_global_field(path) -> PceField:
    """Global field ``U`` of a solution or reference JSON document."""
    return PceField.from_dict(json.loads(Path(path).read_text())["U"])


def degree_table(ref: ReferenceSolution) -> list:
    """Rows ``(name, p_1..p_m, #A)`` of partial degrees, U first, then w_q and lambda_q."""
    rows = [("U", *ref.U.indices.max_degrees().tolist(), len(ref.U.indices))]
    for q, (w, lam) in enumerate(zip(ref.w, ref.lam)):
        rows.append((f"w_{q + 1}", *w.indices.max_degrees().tolist(), len(w.indices)))
        rows.append((f"lambda_{q + 1}", *lam.indices.max_degrees().tolist(), len(lam.indices)))
    return rows


def run_config(cfg, out: Path, reference_path=None, write_fields=True) -> dict:
    """Run the global-local iteration for a validated config and write its artifacts."""
    out.mkdir(parents=True, exist_ok=True)
    chash = config_hash(cfg)
    gp = GlobalProblem(build_spec(cfg))
    reference_path = reference_path or cfg["reference"]["path"]
    ref = load_reference(reference_path).U if reference_path else None
    t0 = time.perf_counter()
    res = iterate(gp, k_max=int(cfg["iteration"]["k_max"]), relaxation=build_relaxation(cfg),
                  params=build_params(cfg), seed=int(cfg["seed"]),
                  newton_tol=cfg["iteration"]["newton_tol"], reference=ref,
                  stop_tol=cfg["iteration"]["stop_tol"])
    wall = time.perf_counter() - t0
    write_history(out / "history.csv", res.history, gp.Q, chash)
    st = res.state
    solution = {"config_hash": chash, "k": st.k, "U": st.U.to_dict(),
                "w": [f.to_dict() for f in st.w], "lambda": [f.to_dict() for f in st.lam]}
    (out / "solution.json").write_text(json.dumps(solution))
    newton = [it for its in res.newton_iterations for it in its]
    summary = {
        "config_hash": chash,
        "converged": bool(res.converged),
        "iterations": st.k,
        "global_factorizations": res.factorizations,
        "wall_time_s": wall,
        "timings": res.timings,
        "newton_iterations_max": max(newton, default=0),
        "newton_iterations_mean": float(np.mean(newton)) if newton else 0.0,
        "final_error_indicator": res.history[-1]["error_indicator"] if ref is not None else None,
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2))
    (out / "config.json").write_text(dumps(cfg))
    if write_fields:
        field = merge_multiscale(st.U, st.w, gp)
        export_statistics(out / "fields", field)
        for part, stats in zip(field.parts, field.statistics()):
            cols = {"mean": stats["mean"], "variance": stats["variance"]}
            for i in range(stats["sensitivity"].shape[0]):
                cols[f"S_{i + 1}"] = stats["sensitivity"][i]
            write_node_csv(out / "fields" / f"{part.name}.csv", part.nodes, cols,
                           node_ids=part.node_ids)
    return {"converged": res.converged, "history": res.history, "summary": summary}


def reference_config(cfg, out: Path) -> ReferenceSolution:
    out.mkdir(parents=True, exist_ok=True)
    gp = GlobalProblem(build_spec(cfg))
    ref = solve_reference(gp, build_params(cfg, cfg["reference"]["eps_cv"]), seed=int(cfg["seed"]),
                          tol=cfg["iteration"]["newton_tol"])
    doc = ref.to_dict()
    doc["config_hash"] = config_hash(cfg)
    table = degree_table(ref)
    doc["n_ref"] = ref.n_samples
    doc["dim_ref"] = {row[0]: row[-1] for row in table}
    doc["degree_table"] = [list(r) for r in table]
    (out / "reference.json").write_text(json.dumps(doc))
    with open(out / "degree_table.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={doc['config_hash']} n_ref={ref.n_samples}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["solution"] + [f"p_{i + 1}" for i in range(gp.m)] + ["dim"])
        w.writerows(table)
    return ref


def _sweep_job(args):
    cfg, out, ref_path = args
    r = run_config(cfg, Path(out), ref_path, write_fields=False)
    return r["history"], r["converged"]


def _parse_list(text, name):
    if text is None:
        return []
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(name, f"expected comma-separated numbers, got {text!r}") from None


def cmd_run(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg["output_dir"])
    r = run_config(cfg, out, args.reference)
    print(f"wrote {out / 'history.csv'}")
    return EXIT_OK if r["converged"] else EXIT_NOT_CONVERGED


def cmd_reference(args) -> int:
    cfg = _load(args)
    out = Path(args.out or cfg["output_dir"])
    ref = reference_config(cfg, out)
    print(f"wrote {out / 'reference.json'} (N_ref={ref.n_samples})")
    return EXIT_OK if ref.converged else EXIT_NOT_CONVERGED


def cmd_sweep(args) -> int:
    cfg = _load(args)
    rhos = _parse_list(args.rho, "--rho")
    epss = _parse_list(args.eps_cv, "--eps-cv")
    if not rhos and not epss and not args.aitken:
        raise ConfigError("sweep", "empty sweep list")
    out = Path(args.out or cfg["output_dir"])
    out.mkdir(parents=True, exist_ok=True)
    ref_path = args.reference or cfg["reference"]["path"]
    if ref_path is None:
        reference_config(cfg, out / "reference")
        ref_path = str(out / "reference" / "reference.json")
    runs = []
    for eps in epss or [cfg["adaptive"]["eps_cv"]]:
        variants = [("fixed", r) for r in rhos] + ([("aitken", 1.0)] if args.aitken or not rhos else [])
        for kind, rho in variants:
            c = json.loads(json.dumps(cfg))
            c["adaptive"]["eps_cv"] = eps
            c["relaxation"]["kind"] = kind
            c["relaxation"]["rho"] = rho
            rid = f"{kind}" + (f"_rho{rho:g}" if kind == "fixed" else "") + f"_eps{eps:g}"
            runs.append((rid, (c, str(out / rid), ref_path)))
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            results = list(ex.map(_sweep_job, [a for _, a in runs]))
    else:
        results = [_sweep_job(a) for _, a in runs]
    with open(out / "sweep.csv", "w", newline="") as fh:
        fh.write(f"# config_hash={config_hash(cfg)}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["run_id", "k", "error_indicator"])
        for (rid, _), (hist, _) in zip(runs, results):
            for row in hist:
                w.writerow([rid, row["k"], _fmt(row["error_indicator"])])
    print(f"wrote {out / 'sweep.csv'}")
    return EXIT_OK if all(c for _, c in results) else EXIT_NOT_CONVERGED


def cmd_compare(args) -> int:
    cfg = _load(args)
    gp = GlobalProblem(build_spec(cfg))
    e = error_indicator(load_global_field(args.solution), load_global_field(args.against), gp.M_ext)
    print(repr(e))
    return EXIT_OK


def _load(args) -> dict:
    cfg = load_config(_resolve_config(args.config))
    if args.seed_override is not None:
        cfg["seed"] = args.seed_override
    return cfg


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="patchdd", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", required=True, help="JSON config file or bundled config name")
        sp.add_argument("--out", help="output directory (default: config output_dir)")
        sp.add_argument("--seed-override", type=int, dest="seed_override")
        sp.add_argument("--jobs", type=int, default=1)

    r = sub.add_parser("run", help="run the global-local iteration")
    common(r)
    r.add_argument("--reference", help="reference JSON for the error indicator")
    r.set_defaults(func=cmd_run)
    ref = sub.add_parser("reference", help="build the reference solution")
    common(ref)
    ref.set_defaults(func=cmd_reference)
    s = sub.add_parser("sweep", help="sweep relaxation parameters and/or tolerances")
    common(s)
    s.add_argument("--reference")
    s.add_argument("--rho", help="comma-separated fixed relaxation parameters")
    s.add_argument("--eps-cv", dest="eps_cv", help="comma-separated cross-validation tolerances")
    s.add_argument("--aitken", action="store_true", help="include an Aitken run")
    s.set_defaults(func=cmd_sweep)
    c = sub.add_parser("compare", help="error indicator between two solution files")
    common(c)
    c.add_argument("solution")
    c.add_argument("against")
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, ConfigurationError, MeshError) as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as e:
        print(f"configuration error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
