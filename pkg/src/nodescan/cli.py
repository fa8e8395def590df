"""Command-line front end.

Subcommands:

* train    -- fit a model from a manual training CSV (plus non-nodal spectra)
* classify -- classify node scans against a model, writing result JSON / PPM
* eval     -- score result files against a truth manifest
* synth    -- generate a synthetic training set and node scans
* sweep    -- grid the smoothing strength and degrees of freedom

Exit codes: 0 ok, 1 input error, 2 numerical failure.  Every command
accepts --config (JSON file of flat keys; the NODESCAN_CONFIG environment
variable supplies a default path) and per-key override flags.
"""

from __future__ import annotations

import argparse
import dataclasses
import sys
from pathlib import Path

import numpy as np

from . import io
from .classify import (
    _state_to_result,
    classify_node,
    evaluate,
    node_context,
    render_ppm,
    roc_points,
)
from .config import CONFIG_KEYS, make_config
from .dimred import choose_k_ext
from .mixture import run_stage1
from .model import fit_model
from .mrf import run_stage2
from .preprocess import preprocess_matrix, preprocess_node, preprocess_training
from .priors import DEFAULT_K_DIAG, position_field
from .synth import SynthConfig, gen_node, gen_nonnodal, gen_training
from .types import METASTATIC, NORMAL, InputError, NumericalError

_SEQ_FLAGS = {"k_diag_normal", "k_diag_metastatic", "k_diag_nonnodal"}


def _parse_floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError as exc:
        raise InputError(f"bad numeric list {text!r}") from exc


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    group = parser.add_argument_group(
        "tuning", "config-file keys; flags override the file"
    )
    group.add_argument("--config", metavar="PATH",
                       help="JSON config file (default: $NODESCAN_CONFIG)")
    for key, default in CONFIG_KEYS.items():
        flag = "--" + key.replace("_", "-")
        if key in _SEQ_FLAGS:
            cls = key.split("_")[-1]
            group.add_argument(
                flag, metavar="D1,D2,...", default=None,
                help=f"prior weight diagonal for the {cls} component "
                     f"(default: {','.join(str(v) for v in DEFAULT_K_DIAG[cls])} "
                     f"when k = 2)",
            )
        else:
            group.add_argument(
                flag, type=float, default=None, metavar="V",
                help=f"(default: {default})",
            )


def _config_from_args(args) -> "RunConfig":
    overrides = {}
    for key in CONFIG_KEYS:
        value = getattr(args, key, None)
        if value is None:
            continue
        overrides[key] = _parse_floats(value) if key in _SEQ_FLAGS else value
    return make_config(getattr(args, "config", None), overrides)


# ---------------------------------------------------------------------------
# commands

def cmd_train(args) -> int:
    cfg = _config_from_args(args)
    ppcfg = cfg.preprocess_config()
    train = preprocess_training(io.read_training(args.training), ppcfg)
    if args.select_k_ext:
        candidates = [int(v) for v in str(args.select_k_ext).split(",")]
        k_ext = choose_k_ext(train, candidates)
        print(f"selected k_ext = {k_ext} from {sorted(set(candidates))}")
    else:
        k_ext = cfg.k_ext
    nonnodal = None
    if args.nonnodal:
        nonnodal = preprocess_matrix(io.read_nonnodal(args.nonnodal), ppcfg)
    model = fit_model(
        train, k_ext, cfg.k_int,
        nonnodal=nonnodal,
        nonnodal_kspace=cfg.nonnodal_prior,
        k_diags=cfg.k_diag_dict(),
        preprocess=ppcfg,
    )
    io.write_model(model, args.out)
    print(f"model written to {args.out} "
          f"(p = {len(model.grid)}, k_ext = {k_ext}, k_int = {cfg.k_int})")
    return 0


def cmd_classify(args) -> int:
    cfg = _config_from_args(args)
    model = io.read_model(args.model)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    failures = []
    for node_path in args.nodes:
        try:
            node = preprocess_node(io.read_node(node_path), model.preprocess)
            result = classify_node(node, model, cfg, stage1_only=args.stage1_only)
            io.write_result(result, out_dir / f"{result.node_id}.json")
            if args.ppm:
                io.write_atomic(out_dir / f"{result.node_id}.ppm",
                                 render_ppm(result, node.R, node.C))
            print(f"{result.node_id}: {result.verdict} (score {result.score:.4f})")
        except (InputError, NumericalError, np.linalg.LinAlgError, OSError) as exc:
            failures.append((node_path, exc))
    if failures:
        for node_path, exc in failures:
            print(f"failed {node_path}: {exc}", file=sys.stderr)
        numerical = any(
            isinstance(e, (NumericalError, np.linalg.LinAlgError)) for _, e in failures
        )
        return 2 if numerical else 1
    return 0


def _load_results(results_dir, truth_path):
    truths = io.read_truth_manifest(truth_path)
    files = sorted(Path(results_dir).glob("*.json"))
    if not files:
        raise InputError(f"no result files in {results_dir}")
    results = []
    for f in files:
        r = io.read_result(f)
        if r.node_id not in truths:
            raise InputError(f"truth manifest has no entry for {r.node_id!r}")
        r.truth = truths[r.node_id]
        results.append(r)
    return results


def cmd_eval(args) -> int:
    cfg = _config_from_args(args)
    results = _load_results(args.results, args.truth)
    report = evaluate(results, cfg.prevalence)
    print(f"nodes: {report.n_nodes}  sens: {report.sensitivity:.4f}  "
          f"spec: {report.specificity:.4f}  auc: {report.auc:.4f}  "
          f"ppv@{report.prevalence:g}: {report.ppv_at_prevalence:.4f}")
    if args.out:
        io.write_atomic(args.out, _json_dumps(report.to_dict()))
    if args.roc:
        pts = roc_points(results)
        lines = ["fpr,tpr"] + [f"{float(fpr)!r},{float(tpr)!r}" for fpr, tpr in pts]
        io.write_atomic(args.roc, "\n".join(lines) + "\n")
    return 0


def _json_dumps(doc) -> str:
    import json

    return json.dumps(doc, indent=1) + "\n"


def cmd_synth(args) -> int:
    out = Path(args.out_dir)
    (out / "nodes").mkdir(parents=True, exist_ok=True)
    (out / "truth").mkdir(parents=True, exist_ok=True)
    scfg = SynthConfig(
        seed=args.seed,
        R=args.rows,
        C=args.cols,
        sites_per_class=args.sites_per_class,
        spectra_per_site=args.spectra_per_site,
    )
    io.write_training(gen_training(scfg), out / "training.csv")
    io.write_nonnodal(gen_nonnodal(scfg, args.nonnodal_count), out / "nonnodal.csv")
    n_met = int(round(args.nodes * args.met_fraction))
    truths = {}
    for i in range(args.nodes):
        truth = METASTATIC if i < n_met else NORMAL
        node, field = gen_node(scfg, truth, index=i)
        io.write_node(node, out / "nodes" / f"{node.node_id}.csv")
        lines = [f"# grid: {scfg.R} {scfg.C}"] + [str(int(v)) for v in field]
        io.write_atomic(out / "truth" / f"{node.node_id}.csv",
                         "\n".join(lines) + "\n")
        truths[node.node_id] = truth
    io.write_truth_manifest(truths, out / "truth.csv")
    print(f"wrote training + {args.nodes} nodes ({n_met} metastatic) to {out}")
    return 0


def cmd_sweep(args) -> int:
    cfg = _config_from_args(args)
    model = io.read_model(args.model)
    truths = io.read_truth_manifest(args.truth)
    node_files = sorted(Path(args.nodes_dir).glob("*.csv"))
    if not node_files:
        raise InputError(f"no node files in {args.nodes_dir}")
    betas = list(_parse_floats(args.betas))
    nus = list(_parse_floats(args.nus))
    nodes = []
    for f in node_files:
        node = preprocess_node(io.read_node(f), model.preprocess)
        if node.node_id not in truths:
            raise InputError(f"truth manifest has no entry for {node.node_id!r}")
        node.truth = truths[node.node_id]
        nodes.append(node)
    rows = []
    for nu in nus:
        cfg_nu = dataclasses.replace(cfg, nu_s1=nu, nu_s2=nu)
        per_beta = {b: [] for b in betas}
        for node in nodes:
            red, gp = node_context(node, model, cfg_nu)
            field1 = position_field(node.R, node.C, cfg_nu.rho_s1)
            field2 = position_field(node.R, node.C, cfg_nu.rho_s2)
            st1 = run_stage1(red.scores, field1, gp, cfg_nu.em_config())
            for beta in betas:
                mrf_cfg = dataclasses.replace(cfg_nu.mrf_config(), beta=beta)
                st2 = run_stage2(red.scores, st1, field2, gp, mrf_cfg)
                per_beta[beta].append(_state_to_result(node, st2))
        for beta in betas:
            rep = evaluate(per_beta[beta], cfg.prevalence)
            rows.append((beta, nu, rep.sensitivity, rep.specificity, rep.auc))
            print(f"beta = {beta:g} nu = {nu:g}: sens {rep.sensitivity:.4f} "
                  f"spec {rep.specificity:.4f} auc {rep.auc:.4f}")
    lines = ["beta,nu,sensitivity,specificity,auc"]
    lines += [f"{b!r},{n!r},{s!r},{sp!r},{a!r}" for b, n, s, sp, a in rows]
    io.write_atomic(args.out, "\n".join(lines) + "\n")
    return 0


# ---------------------------------------------------------------------------
# parser

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="nodescan",
        description="Two-stage Bayesian classification of scanned-tissue "
                    "spectral images.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model from manual training spectra")
    p.add_argument("--training", required=True, metavar="CSV")
    p.add_argument("--nonnodal", metavar="CSV",
                   help="labelled non-nodal spectra for the background prior")
    p.add_argument("--out", required=True, metavar="JSON")
    p.add_argument("--select-k-ext", metavar="K1,K2,...",
                   help="choose k_ext by leave-one-site-out cross-validation")
    _add_config_flags(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("classify", help="classify node scans against a model")
    p.add_argument("--model", required=True, metavar="JSON")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--stage1-only", action="store_true",
                   help="stop after the mixture fit (no label smoothing)")
    p.add_argument("--ppm", action="store_true",
                   help="also render a posterior pixmap per node")
    p.add_argument("nodes", nargs="+", metavar="NODE_CSV")
    _add_config_flags(p)
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("eval", help="score result files against a truth manifest")
    p.add_argument("--results", required=True, metavar="DIR")
    p.add_argument("--truth", required=True, metavar="CSV")
    p.add_argument("--out", metavar="JSON", help="write the report as JSON")
    p.add_argument("--roc", metavar="CSV", help="write fpr,tpr points")
    _add_config_flags(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate synthetic training data and nodes")
    p.add_argument("--out-dir", required=True, metavar="DIR")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--nodes", type=int, default=10)
    p.add_argument("--met-fraction", type=float, default=0.5)
    p.add_argument("--rows", type=int, default=20)
    p.add_argument("--cols", type=int, default=20)
    p.add_argument("--sites-per-class", type=int, default=30)
    p.add_argument("--spectra-per-site", type=int, default=10)
    p.add_argument("--nonnodal-count", type=int, default=200)
    _add_config_flags(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep", help="grid beta and nu over a node directory")
    p.add_argument("--model", required=True, metavar="JSON")
    p.add_argument("--nodes-dir", required=True, metavar="DIR")
    p.add_argument("--truth", required=True, metavar="CSV")
    p.add_argument("--out", required=True, metavar="CSV")
    p.add_argument("--betas", default="0,5,10,15,20,25,30", metavar="B1,B2,...")
    p.add_argument("--nus", default="3,4,8,12,20", metavar="N1,N2,...")
    _add_config_flags(p)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return int(args.func(args) or 0)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (NumericalError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
