"""Command line front end.

Exit codes: 0 on success, 1 for bad arguments, 2 when a run fails.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import data as D
from . import debugging as DBG
from . import models as M
from . import pipeline as P
from . import sanity as SAN
from . import synthetic as SYN
from .errors import InvalidSpec, IoFailure, MvizError


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; this tool reserves 2 for runtime."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def _build_parser() -> _Parser:
    p = _Parser(prog="mviz", description="multimodal model analysis")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-data", help="generate a synthetic dataset")
    g.add_argument("--spec", required=True, help="task description JSON")
    g.add_argument("--out", required=True, help="output directory")
    g.add_argument("--train", type=int, default=None)
    g.add_argument("--val", type=int, default=None)
    g.add_argument("--test", type=int, default=None)
    g.add_argument("--seed", type=int, default=None)

    t = sub.add_parser("train", help="train a model on a generated dataset")
    t.add_argument("--data", required=True)
    t.add_argument("--arch", required=True, choices=M.ARCHITECTURES)
    t.add_argument("--out", required=True, help="checkpoint path")
    t.add_argument("--epochs", type=int, default=None)
    t.add_argument("--lr", type=float, default=None)
    t.add_argument("--batch-size", type=int, default=None)
    t.add_argument("--seed", type=int, default=None)
    t.add_argument("--hidden1", type=int, default=None)
    t.add_argument("--hidden2", type=int, default=None)

    a = sub.add_parser("analyze", help="run analysis stages on one point")
    a.add_argument("--data", required=True)
    a.add_argument("--model", required=True)
    a.add_argument("--split", default="test")
    a.add_argument("--point", type=int, default=0)
    a.add_argument(
        "--stages",
        default="U,C,Rl,Rg,P",
        help="subset of U C Rl Rg P, e.g. U,P or UCRl",
    )
    a.add_argument("--method", default="gradient")
    a.add_argument("--num-features", type=int, default=2)
    a.add_argument("--features", default=None, help="comma list of feature ids")
    a.add_argument("--top-k", type=int, default=5)
    a.add_argument("--seed", type=int, default=0)
    a.add_argument("--cache-dir", default=None)
    a.add_argument("--out", default=None, help="write JSON here instead of stdout")

    s = sub.add_parser("sanity", help="randomization controls for a method")
    s.add_argument("--data", required=True)
    s.add_argument("--model", required=True)
    s.add_argument("--check", default="both", choices=("model", "data", "both"))
    s.add_argument("--method", default="gradient")
    s.add_argument("--split", default="test")
    s.add_argument("--points", type=int, default=20)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default=None)

    d = sub.add_parser("debug", help="active-collection debugging experiment")
    d.add_argument("--data", required=True)
    d.add_argument("--model", required=True)
    d.add_argument("--strategies", default="random,uncertainty,feature_targeted")
    d.add_argument("--n", type=int, default=200)
    d.add_argument("--seeds", type=int, default=10)
    d.add_argument("--num-features", type=int, default=2)
    d.add_argument("--lr", type=float, default=None)
    d.add_argument("--out", default=None)

    v = sub.add_parser("serve", help="start the analysis HTTP service")
    v.add_argument("--registry", required=True, help="registry JSON")
    v.add_argument("--host", default="127.0.0.1")
    v.add_argument("--port", type=int, default=8731)
    v.add_argument(
        "--dry-run", action="store_true", help="validate the registry and exit"
    )
    return p


def _load_splits(data_dir: str) -> dict:
    return {s: D.load_split(data_dir, s) for s in D.available_splits(data_dir)}


def _emit(payload: dict, out: str | None) -> None:
    text = P.canonical_json(payload)
    if out:
        with open(out, "w") as f:
            f.write(text)
    else:
        print(text)


def _cmd_gen_data(args) -> int:
    with open(args.spec) as f:
        spec, sizes = SYN.spec_from_dict(json.load(f))
    n_train = args.train if args.train is not None else sizes.get("n_train", 1000)
    n_val = args.val if args.val is not None else sizes.get("n_val", 200)
    n_test = args.test if args.test is not None else sizes.get("n_test", 200)
    seed = args.seed if args.seed is not None else sizes.get("seed", 0)
    splits = SYN.make_synthetic_dataset(spec, n_train, n_val, n_test, seed=seed)
    D.save_splits(args.out, spec.schema, splits, truth=spec.truth_dict())
    print(
        f"wrote {', '.join(f'{k}={len(v)}' for k, v in splits.items())} to {args.out}"
    )
    return 0


def _cmd_train(args) -> int:
    splits = _load_splits(args.data)
    overrides = {
        k: v
        for k, v in (
            ("epochs", args.epochs),
            ("lr", args.lr),
            ("batch_size", args.batch_size),
            ("seed", args.seed),
            ("hidden1", args.hidden1),
            ("hidden2", args.hidden2),
        )
        if v is not None
    }
    cfg = M.TrainConfig(**overrides)
    model = M.train_model(args.arch, splits["train"], splits.get("val"), cfg)
    M.save_model(model, args.out)
    acc = model.info.get("val_accuracy", model.info["train_accuracy"])
    print(f"saved {args.arch} to {args.out} (accuracy {acc:.3f})")
    return 0


def _cmd_analyze(args) -> int:
    splits = _load_splits(args.data)
    model = M.load_model(args.model)
    features = None
    if args.features:
        features = tuple(int(x) for x in args.features.split(","))
    cfg = P.RunConfig(
        stages=P.parse_stages(args.stages),
        split=args.split,
        point_index=args.point,
        method=args.method,
        num_features=args.num_features,
        features=features,
        top_k=args.top_k,
        seed=args.seed,
    )
    result, hit = P.run_cached(model, splits, cfg, cache_dir=args.cache_dir)
    _emit(result, args.out)
    if args.out:
        print(f"wrote {args.out}" + (" (cache hit)" if hit else ""))
    return 0


def _cmd_sanity(args) -> int:
    splits = _load_splits(args.data)
    model = M.load_model(args.model)
    points = splits[args.split]
    reports = []
    if args.check in ("model", "both"):
        reports.append(
            SAN.model_randomization_check(
                model, points, method=args.method, seed=args.seed, num_points=args.points
            )
        )
    if args.check in ("data", "both"):
        reports.append(
            SAN.data_randomization_check(
                model,
                splits["train"],
                points,
                method=args.method,
                seed=args.seed,
                num_points=args.points,
            )
        )
    _emit({"reports": [r.to_dict() for r in reports]}, args.out)
    # a FAIL verdict is still a completed run; 2 is reserved for breakage
    for r in reports:
        status = "pass" if r.passed else "FAIL"
        print(
            f"{r.check}: {status} (mean correlation {r.mean_correlation:.3f})",
            file=sys.stderr,
        )
    return 0


def _cmd_debug(args) -> int:
    splits = _load_splits(args.data)
    model = M.load_model(args.model)
    probe_set, pool, _ = DBG.standard_split_roles(splits)
    strategies = []
    for name in args.strategies.split(","):
        name = name.strip()
        if name == "feature_targeted":
            strategies.append(
                DBG.SelectionStrategy(name, num_features=args.num_features)
            )
        else:
            strategies.append(DBG.SelectionStrategy(name))
    report = DBG.debug_experiment(
        model,
        probe_set,
        pool,
        splits["test"],
        strategies=strategies,
        n=args.n,
        seeds=args.seeds,
        lr=args.lr,
    )
    _emit(report.to_dict(), args.out)
    for o in report.outcomes:
        print(
            f"{o.strategy}: targeted {o.mean_targeted_delta:+.3f} "
            f"overall {o.mean_overall_delta:+.3f}",
            file=sys.stderr,
        )
    return 0


def _cmd_serve(args) -> int:
    from . import service as SVC

    registry = SVC.load_registry(args.registry)
    app = SVC.build_app(registry)
    if args.dry_run:
        print(
            f"registry ok: {len(registry.datasets)} datasets, "
            f"{len(registry.models)} models"
        )
        return 0
    import uvicorn

    uvicorn.run(app, host=args.host, port=args.port, log_level="warning")
    return 0


_COMMANDS = {
    "gen-data": _cmd_gen_data,
    "train": _cmd_train,
    "analyze": _cmd_analyze,
    "sanity": _cmd_sanity,
    "debug": _cmd_debug,
    "serve": _cmd_serve,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (MvizError, OSError, json.JSONDecodeError, KeyError) as e:
        print(f"mviz {args.command}: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
