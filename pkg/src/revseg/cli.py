"""Command-line harness.

Subcommands:

    gen          phantom volume + mask + support manifest from a spec file
    segment      run one pipeline variant from a run-config file
    ablate       mean dice per variant over the pinned decoy suite
    sweep        k x N grid of mean dice over the pinned suite
    score-curve  per-slice (index, score, forward dice) CSV + rank correlation
    fixture      aggregation checks against bundled reference tables
    serve-toy    wire-protocol server wrapping the in-process segmenter

Exit codes: 0 success, 2 config error, 3 backend/protocol error,
4 fixture failure.  Every command is deterministic given its inputs.
"""

from __future__ import annotations

import argparse
import csv
import importlib.resources
import json
import math
import sys
from pathlib import Path

import numpy as np

from revseg import suite
from revseg.backbone import BackboneConfig
from revseg.backend import BackendError, OracleBackend, make_backend
from revseg.metrics import EvalRow, aggregate, dice, nsd, spearman
from revseg.phantom import gen_phantom, spec_from_dict
from revseg.pipeline import PipelineConfig, VARIANTS, run_variant
from revseg.protocol import ProtocolError
from revseg.rvol import (
    read_support_manifest,
    read_volume,
    write_support_manifest,
    write_volume,
)
from revseg.volume import MaskVolume, SupportSet, ValidationError, Volume


class ConfigError(ValueError):
    pass


def _load_json(path: Path) -> dict:
    try:
        return json.loads(path.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from None


def _reject_unknown(doc: dict, known: set[str], where: str) -> None:
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown keys in {where}: {sorted(unknown)}")


# ---------------------------------------------------------------- gen


def cmd_gen(args) -> int:
    doc = _load_json(Path(args.spec))
    _reject_unknown(doc, {"phantom", "support_slices", "class_name"}, args.spec)
    if "phantom" not in doc:
        raise ConfigError(f"{args.spec} must contain a 'phantom' section")
    spec = spec_from_dict(doc["phantom"])
    support_slices = doc.get("support_slices", [spec.support_slice])
    class_name = doc.get("class_name", "target")
    for s in support_slices:
        if not (0 <= s < spec.shape[0]):
            raise ConfigError(f"support slice {s} outside volume of {spec.shape[0]}")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    vol, mask = gen_phantom(spec)
    write_volume(out / "volume.rvol", vol)
    write_volume(out / "mask.rvol", mask)
    pairs = []
    for s in support_slices:
        img_name, msk_name = f"support_{s:03d}_img.rvol", f"support_{s:03d}_msk.rvol"
        write_volume(out / img_name, Volume(vol.data[s : s + 1]))
        write_volume(out / msk_name, MaskVolume(mask.data[s : s + 1]))
        pairs.append((img_name, msk_name))
    write_support_manifest(out / "manifest.json", pairs, class_name)
    print(f"wrote volume.rvol mask.rvol manifest.json ({len(pairs)} support pairs) to {out}")
    return 0


# ------------------------------------------------------------- segment


_RUN_KEYS = {"backbone", "pipeline", "backend", "support_manifest", "query", "gt", "out_dir"}


def _load_run_config(path: Path, args) -> dict:
    doc = _load_json(path)
    _reject_unknown(doc, _RUN_KEYS, str(path))
    bb = doc.get("backbone", {})
    _reject_unknown(bb, {"patch", "feat_dim", "temperature", "lambda_pos", "threshold", "seed"}, "backbone")
    pl = doc.get("pipeline", {})
    _reject_unknown(pl, {"k", "tau", "variant", "random_seed"}, "pipeline")
    for key in ("support_manifest", "query"):
        if key not in doc:
            raise ConfigError(f"run config misses required key {key!r}")
    # CLI flags override file values
    if args.variant:
        pl["variant"] = args.variant
    if args.k is not None:
        pl["k"] = args.k
    if args.tau is not None:
        pl["tau"] = args.tau
    if args.seed is not None:
        pl["random_seed"] = args.seed
    backend = args.backend or doc.get("backend", "toy")
    out_dir = args.out or doc.get("out_dir", ".")
    base = path.parent
    paths = {
        "support_manifest": base / doc["support_manifest"],
        "query": base / doc["query"],
        "gt": (base / doc["gt"]) if doc.get("gt") else None,
    }
    for key, p in paths.items():
        if p is not None and not p.exists():
            raise ConfigError(f"{key} file does not exist: {p}")
    try:
        bb_cfg = BackboneConfig(**bb)
        pl_cfg = PipelineConfig(backend=backend, **pl)
    except (TypeError, ValidationError) as e:
        raise ConfigError(str(e)) from None
    return {
        "backbone": bb_cfg,
        "pipeline": pl_cfg,
        "backend": backend,
        "out_dir": Path(out_dir),
        **paths,
    }


def _build_backend(selector: str, bb_cfg, support: SupportSet, query, gt):
    if selector == "oracle":
        if gt is None:
            raise ConfigError("oracle backend requires a gt volume")
        be = OracleBackend()
        be.register_volume(query, gt)
        be.register_support(support)
        return be
    try:
        return make_backend(selector, bb_cfg)
    except ValidationError as e:
        raise ConfigError(str(e)) from None


def cmd_segment(args) -> int:
    rc = _load_run_config(Path(args.config), args)
    support = read_support_manifest(rc["support_manifest"])
    query = read_volume(rc["query"])
    if not isinstance(query, Volume):
        raise ConfigError("query file is a mask volume, expected intensities")
    gt = read_volume(rc["gt"]) if rc["gt"] else None
    if gt is not None and not isinstance(gt, MaskVolume):
        raise ConfigError("gt file is not a mask volume")
    backend = _build_backend(rc["backend"], rc["backbone"], support, query, gt)
    try:
        out, report = run_variant(
            rc["pipeline"].variant, support, query, backend, rc["pipeline"], gt
        )
    finally:
        backend.close()
    out_dir = rc["out_dir"]
    out_dir.mkdir(parents=True, exist_ok=True)
    write_volume(out_dir / "prediction.rvol", out)
    doc = report.to_dict()
    if gt is not None:
        doc["volume_nsd"] = nsd(out.data, gt.data, args.nsd_tol)
        doc["nsd_tol"] = args.nsd_tol
    (out_dir / "report.json").write_text(json.dumps(doc, indent=2) + "\n")
    (out_dir / "report.csv").write_text(report.to_csv())
    msg = f"variant={report.variant} wall={report.wall_clock:.2f}s"
    if report.volume_dice is not None:
        msg += f" final_dice={report.volume_dice:.4f} final_nsd={doc['volume_nsd']:.4f}"
    print(msg)
    print(f"wrote prediction.rvol report.json report.csv to {out_dir}")
    return 0


# ----------------------------------------------------- suite commands


def _suite_params(args) -> tuple[list[int], int]:
    if args.suite == "standard":
        return list(suite.STANDARD_SEEDS), suite.N_SUPPORT
    doc = _load_json(Path(args.suite))
    _reject_unknown(doc, {"seeds", "n_support"}, args.suite)
    return list(doc.get("seeds", suite.STANDARD_SEEDS)), int(
        doc.get("n_support", suite.N_SUPPORT)
    )


def cmd_ablate(args) -> int:
    seeds, n_support = _suite_params(args)
    backend = make_backend("toy", suite.SUITE_BACKBONE)
    results: dict[str, list[float]] = {v: [] for v in VARIANTS}
    for seed in seeds:
        support, query, gt = suite.build_episode(seed, n_support)
        for variant in VARIANTS:
            cfg = PipelineConfig(variant=variant, random_seed=seed)
            _, report = run_variant(variant, support, query, backend, cfg, gt)
            results[variant].append(report.volume_dice)
    rows = [
        (v, float(np.mean(results[v])), float(np.std(results[v])), len(seeds))
        for v in VARIANTS
    ]
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "mean_dice", "std_dice", "n_seeds"])
        for v, mean, std, n in rows:
            w.writerow([v, f"{mean:.4f}", f"{std:.4f}", n])
    for v, mean, std, _ in rows:
        print(f"{v:14s} mean={mean:.4f} std={std:.4f}")
    print(f"wrote {args.out}")
    return 0


def cmd_sweep(args) -> int:
    ks = [int(v) for v in args.k.split(",")]
    ns = [int(v) for v in args.n.split(",")]
    seeds, _ = _suite_params(args)
    backend = make_backend("toy", suite.SUITE_BACKBONE)
    from revseg.pipeline import (
        forward_propagate,
        select_conditional,
        self_propagate,
        _reverse_score_encoded,
    )

    grid: dict[tuple[int, int], list[float]] = {(k, n): [] for k in ks for n in ns}
    for n in ns:
        for seed in seeds:
            support, query, gt = suite.build_episode(seed, n)
            cfg = PipelineConfig(random_seed=seed)
            backend.reset()
            # forward + reverse once per (seed, n); selection differs per k
            preds = forward_propagate(support, query, backend, cfg)
            grids = [backend.encode_image(s) for s in support.slices]
            for p in preds:
                qg = backend.encode_image(query.slice(p.index))
                p.score = _reverse_score_encoded(
                    grids, support.masks, qg, p.mask, backend, support.slice_shape
                )
            for k in ks:
                sel = select_conditional(preds, k)
                out = self_propagate(
                    query, (sel, [preds[i].mask for i in sel]), backend,
                    PipelineConfig(k=k, random_seed=seed),
                )
                grid[(k, n)].append(dice(out.data, gt.data))
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["k", "n_support", "mean_dice", "std_dice", "n_seeds"])
        for k in ks:
            for n in ns:
                vals = grid[(k, n)]
                w.writerow(
                    [k, n, f"{np.mean(vals):.4f}", f"{np.std(vals):.4f}", len(vals)]
                )
    for k in ks:
        line = " ".join(f"N={n}:{np.mean(grid[(k, n)]):.4f}" for n in ns)
        print(f"k={k}  {line}")
    print(f"wrote {args.out}")
    return 0


def cmd_score_curve(args) -> int:
    rc = _load_run_config(Path(args.config), args)
    if rc["gt"] is None:
        raise ConfigError("score-curve requires a gt volume in the run config")
    support = read_support_manifest(rc["support_manifest"])
    query = read_volume(rc["query"])
    gt = read_volume(rc["gt"])
    backend = _build_backend(rc["backend"], rc["backbone"], support, query, gt)
    cfg = rc["pipeline"]
    try:
        _, report = run_variant("revprop", support, query, backend, cfg, gt)
    finally:
        backend.close()
    scores = [r.score for r in report.slices]
    dices = [r.forward_dice for r in report.slices]
    rho = spearman(scores, dices)
    with open(args.out, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["index", "score", "forward_dice"])
        for r in report.slices:
            w.writerow([r.index, f"{r.score:.6f}", f"{r.forward_dice:.6f}"])
        w.writerow(["spearman", "" if math.isnan(rho) else f"{rho:.6f}", ""])
    print("spearman_rho=" + ("undefined" if math.isnan(rho) else f"{rho:.4f}"))
    print(f"wrote {args.out}")
    return 0


# ------------------------------------------------------------- fixture


def load_reference_tables() -> dict:
    blob = (
        importlib.resources.files("revseg") / "data" / "reference_tables.json"
    ).read_text()
    return json.loads(blob)


def cmd_fixture(args) -> int:
    doc = load_reference_tables()
    failures = 0
    for case in doc["aggregation_cases"]:
        rows = [EvalRow(f"c{i}", "g0", v, v) for i, v in enumerate(case["values"])]
        got = aggregate(rows).mdsc
        ok = abs(got - case["expected_mean"]) <= case["tol"]
        status = "PASS" if ok else "FAIL"
        print(
            f"{status} {case['name']}: mean={got:.4f} "
            f"expected={case['expected_mean']} tol={case['tol']}"
        )
        failures += 0 if ok else 1
    return 4 if failures else 0


# ------------------------------------------------------------------ main


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="revseg", description=__doc__)
    sub = p.add_subparsers(dest="cmd", required=True)

    g = sub.add_parser("gen", help="generate a phantom volume from a spec file")
    g.add_argument("--spec", required=True)
    g.add_argument("--out", required=True)
    g.set_defaults(fn=cmd_gen)

    s = sub.add_parser("segment", help="run the pipeline from a run config")
    s.add_argument("--config", required=True)
    s.add_argument("--backend", help="toy | oracle | subprocess:<cmd>")
    s.add_argument("--variant", choices=VARIANTS)
    s.add_argument("--k", type=int)
    s.add_argument("--tau", type=int)
    s.add_argument("--seed", type=int)
    s.add_argument("--out", help="output directory")
    s.add_argument("--nsd-tol", type=float, default=1.0,
                   help="surface-dice tolerance in voxels (default 1.0)")
    s.set_defaults(fn=cmd_segment)

    a = sub.add_parser("ablate", help="variant comparison over the pinned suite")
    a.add_argument("--suite", default="standard")
    a.add_argument("--out", required=True)
    a.set_defaults(fn=cmd_ablate)

    w = sub.add_parser("sweep", help="k x N grid over the pinned suite")
    w.add_argument("--k", default="1,3,7,9")
    w.add_argument("--n", default="1,5,10")
    w.add_argument("--suite", default="standard")
    w.add_argument("--out", required=True)
    w.set_defaults(fn=cmd_sweep)

    c = sub.add_parser("score-curve", help="per-slice score vs dice CSV")
    c.add_argument("--config", required=True)
    c.add_argument("--backend")
    c.add_argument("--variant", choices=VARIANTS)
    c.add_argument("--k", type=int)
    c.add_argument("--tau", type=int)
    c.add_argument("--seed", type=int)
    c.add_argument("--out", required=True)
    c.set_defaults(fn=cmd_score_curve)

    f = sub.add_parser("fixture", help="check bundled aggregation fixtures")
    f.set_defaults(fn=cmd_fixture)

    t = sub.add_parser("serve-toy", help="serve the toy backend on stdin/stdout")
    t.set_defaults(fn=None)

    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.cmd == "serve-toy":
        from revseg.server import serve

        serve()
        return 0
    try:
        return args.fn(args)
    except (ConfigError, ValidationError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except (BackendError, ProtocolError) as e:
        print(f"backend error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
