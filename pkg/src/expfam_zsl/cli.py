"""Command-line interface: ``expfam-zsl <command> [options]``.

Commands: ``synth``, ``fit``, ``tune``, ``predict``, ``transduce``,
``fewshot``, ``eval``. Every command accepts ``--config FILE`` with
``key=value`` lines (keys are option names, dashes or underscores); command
line flags override the file.

Exit codes: 0 success, 1 data or model error, 2 usage error.
"""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

import numpy as np

from . import dataset, eval as evaluation, fewshot, model as gmodel, synthgen, transductive
from .expfam import BERNOULLI, GAUSSIAN, FamilySpec
from .regression import KernelSpec

log = logging.getLogger("expfam_zsl")

_FAMILIES = {"gaussian": GAUSSIAN, "bernoulli": BERNOULLI}


class UsageError(Exception):
    pass


def _id_list(text: str) -> List[int]:
    """Comma-separated class ids, or ``@path`` / a path to a file holding them."""
    src = text
    if text.startswith("@"):
        src = Path(text[1:]).read_text()
    elif Path(text).is_file():
        src = Path(text).read_text()
    try:
        return [int(t) for t in src.replace("\n", ",").split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad class id list {text!r}") from None


def _float_list(text: str) -> List[float]:
    try:
        return [float(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad number list {text!r}") from None


def _int_list(text: str) -> List[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad integer list {text!r}") from None


# ------------------------------------------------------------------ parser


def _add_data_args(p, with_split=True):
    p.add_argument("--features", required=True, help="feature table (CSV or packed binary)")
    p.add_argument("--features-format", choices=("csv", "binary"), default="csv")
    p.add_argument("--attributes", required=True, help="class attribute CSV")
    if with_split:
        p.add_argument("--seen", type=_id_list, required=True, help="seen class ids: 0,1,2 or @file")
        p.add_argument("--unseen", type=_id_list, required=True, help="unseen class ids")
    p.add_argument("--zscore-attributes", action="store_true",
                   help="standardize attributes with seen-class statistics")


def _add_model_args(p, lambdas=True):
    p.add_argument("--family", choices=tuple(_FAMILIES), default="gaussian")
    p.add_argument("--regressor", choices=("linear", "kernel"), default="linear")
    p.add_argument("--kernel", choices=("linear", "quadratic", "rbf"), default="quadratic")
    p.add_argument("--gamma", type=float, default=1.0, help="rbf kernel width")
    p.add_argument("--var-floor", type=float, default=1e-6)
    p.add_argument("--smoothing", type=float, default=1.0)
    if lambdas:
        p.add_argument("--lambda-mu", type=float, help="ridge penalty of the mean regressor")
        p.add_argument("--lambda-sigma", type=float, help="ridge penalty of the log-variance regressor")


def build_parser():
    parser = argparse.ArgumentParser(prog="expfam-zsl", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")
    sub.required = True
    subs = {}

    def add(name, help_):
        p = sub.add_parser(name, help=help_)
        p.add_argument("--config", help="key=value defaults file")
        p.add_argument("--threads", type=int, default=None, help="worker threads (default: all cores)")
        subs[name] = p
        return p

    p = add("synth", "write a synthetic dataset")
    p.add_argument("--out-dir", required=True)
    defaults = synthgen.SynthConfig()
    for flag in ("S", "U", "K", "D"):
        p.add_argument(f"--{flag}", type=int, default=getattr(defaults, flag), dest=flag)
    p.add_argument("--n-per-class", type=int, default=defaults.n_per_class)
    p.add_argument("--gating", choices=("linear", "quadratic"), default=defaults.gating)
    p.add_argument("--mean-scale", type=float, default=defaults.mean_scale)
    p.add_argument("--logvar-scale", type=float, default=defaults.logvar_scale)
    p.add_argument("--noise", type=float, default=defaults.noise)
    p.add_argument("--offset", type=float, default=0.0, help="domain shift added to unseen-class samples")
    p.add_argument("--binary", action="store_true")
    p.add_argument("--seed", type=int, default=0)

    p = add("fit", "fit a model on seen classes and synthesize unseen ones")
    _add_data_args(p)
    _add_model_args(p)
    p.add_argument("--out", required=True, help="model file to write")

    p = add("tune", "choose ridge penalties on held-out seen classes")
    _add_data_args(p)
    _add_model_args(p, lambdas=False)
    p.add_argument("--grid", type=_float_list, required=True,
                   help="candidate penalties, e.g. 0.01,0.1,1 (all pairs are tried)")
    p.add_argument("--grid-sigma", type=_float_list,
                   help="separate candidates for the log-variance penalty")
    p.add_argument("--n-val", type=int, default=None, help="held-out class count (default S/4)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV of validation accuracy per pair")

    p = add("predict", "classify examples")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True)
    p.add_argument("--features-format", choices=("csv", "binary"), default="csv")
    p.add_argument("--candidates", choices=("unseen", "all"), default="unseen")
    p.add_argument("--scores", action="store_true", help="also write per-class log-likelihoods")
    p.add_argument("--no-mixing", action="store_true", help="ignore EM mixing proportions")
    p.add_argument("--out", help="prediction CSV (default: stdout)")

    p = add("transduce", "refine unseen classes by EM on unlabeled data")
    p.add_argument("--model", required=True)
    p.add_argument("--unlabeled", required=True)
    p.add_argument("--features-format", choices=("csv", "binary"), default="csv")
    em = transductive.EmConfig()
    p.add_argument("--max-iters", type=int, default=em.max_iters)
    p.add_argument("--tol", type=float, default=em.tol)
    p.add_argument("--min-mix", type=float, default=em.min_mix)
    p.add_argument("--var-floor", type=float, default=em.var_floor)
    p.add_argument("--clamp-labels", action="store_true",
                   help="keep rows labeled with an unseen class fixed to that class")
    p.add_argument("--trace", help="per-iteration CSV trace")
    p.add_argument("--out", required=True)

    p = add("fewshot", "update unseen classes from a few labeled examples")
    p.add_argument("--model", required=True)
    p.add_argument("--labeled", required=True)
    p.add_argument("--features-format", choices=("csv", "binary"), default="csv")
    p.add_argument("--out", required=True)

    p = add("eval", "evaluate a model")
    p.add_argument("--model", required=True)
    p.add_argument("--features", required=True, help="labeled test pool")
    p.add_argument("--features-format", choices=("csv", "binary"), default="csv")
    p.add_argument("--protocol", choices=("zsl", "fewshot", "generalized"), default="zsl")
    p.add_argument("--candidates", choices=("unseen", "all"), default="unseen",
                   help="candidate classes for the zsl protocol")
    p.add_argument("--shots", type=_int_list, default=[2, 5, 10, 15, 20])
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="CSV report")

    return parser, subs


def _read_config(path: str) -> dict:
    out = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}: line {lineno}: expected key=value")
        out[key.strip().lstrip("-").replace("-", "_")] = value.strip()
    return out


def _apply_config(subparser: argparse.ArgumentParser, values: dict) -> None:
    actions = {a.dest: a for a in subparser._actions}
    defaults = {}
    for key, raw in values.items():
        act = actions.get(key)
        if act is None or key in ("config", "help"):
            raise UsageError(f"unknown config key {key!r}")
        if isinstance(act, argparse._StoreTrueAction):
            val = raw.lower() in ("1", "true", "yes", "on")
        else:
            try:
                val = act.type(raw) if act.type else raw
            except (ValueError, argparse.ArgumentTypeError) as exc:
                raise UsageError(f"config key {key!r}: {exc}") from None
            if act.choices and val not in act.choices:
                raise UsageError(f"config key {key!r}: {val!r} not in {act.choices}")
        defaults[key] = val
        act.required = False
    subparser.set_defaults(**defaults)


def parse_args(argv):
    parser, subs = build_parser()
    pre = argparse.ArgumentParser(add_help=False)
    pre.add_argument("--config")
    known, _ = pre.parse_known_args(argv)
    if known.config:
        cmd = next((a for a in argv if a in subs), None)
        if cmd is None:
            parser.error("--config needs a command")
        try:
            _apply_config(subs[cmd], _read_config(known.config))
        except (UsageError, OSError) as exc:
            subs[cmd].error(str(exc))
    args = parser.parse_args(argv)
    args._parser = subs[args.command]
    return args


# ---------------------------------------------------------------- commands


def _load_data(args):
    feats = dataset.load_features(args.features, args.features_format)
    attrs = dataset.load_attributes(args.attributes)
    if feats.dim == 0:
        raise dataset.LoadError(f"{args.features}: no feature columns")
    split = dataset.make_split(feats, attrs, args.seen, args.unseen)
    if args.zscore_attributes:
        attrs = dataset.zscore_attributes(attrs, args.seen)
    return feats, attrs, split


def _family(args) -> FamilySpec:
    return FamilySpec(_FAMILIES[args.family], args.var_floor, args.smoothing)


def _write(path: Optional[str], text: str) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def cmd_synth(args) -> int:
    cfg = synthgen.SynthConfig(
        S=args.S, U=args.U, K=args.K, D=args.D, n_per_class=args.n_per_class,
        gating=args.gating, mean_scale=args.mean_scale, logvar_scale=args.logvar_scale,
        noise=args.noise, offset=args.offset or None, binary=args.binary, seed=args.seed,
    )
    feats, attrs, split, _ = synthgen.generate(cfg)
    paths = synthgen.write_dataset(args.out_dir, feats, attrs, split)
    print(f"wrote {feats.n_examples} examples, {attrs.n_classes} classes to {args.out_dir}")
    for k, v in paths.items():
        log.info("%s: %s", k, v)
    return 0


def cmd_fit(args) -> int:
    if args.lambda_mu is None or args.lambda_sigma is None:
        args._parser.error("--lambda-mu and --lambda-sigma are required")
    feats, attrs, split = _load_data(args)
    config = gmodel.GfzslConfig(
        args.lambda_mu, args.lambda_sigma, _family(args), args.regressor,
        KernelSpec(args.kernel, args.gamma),
    )
    m = gmodel.fit(split, feats, attrs, config)
    gmodel.save_model(m, args.out)
    print(
        f"S={split.n_seen} U={split.n_unseen} D={feats.dim} K={attrs.dim} "
        f"lambda_mu={args.lambda_mu:g} lambda_sigma={args.lambda_sigma:g} -> {args.out}"
    )
    return 0


def cmd_tune(args) -> int:
    feats, attrs, split = _load_data(args)
    sig = args.grid_sigma or args.grid
    grid = [(a, b) for a in args.grid for b in sig]
    base = gmodel.GfzslConfig(1.0, 1.0, _family(args), args.regressor, KernelSpec(args.kernel, args.gamma))
    best, scores = evaluation.tune(split, feats, attrs, grid, base, args.n_val, args.seed)
    rows = ["lambda_mu,lambda_sigma,val_accuracy"]
    rows += [f"{a!r},{b!r},{acc!r}" for (a, b), acc in sorted(scores.items())]
    if args.out:
        _write(args.out, "\n".join(rows) + "\n")
    print(f"best lambda_mu={best[0]:g} lambda_sigma={best[1]:g} val_accuracy={scores[best]:.4f}")
    return 0


def cmd_predict(args) -> int:
    m = gmodel.load_model(args.model)
    if args.no_mixing:
        m = m.replace(use_mixing=False)
    feats = dataset.load_features(args.features, args.features_format)
    if feats.dim != m.dim:
        raise dataset.LoadError(f"{args.features}: {feats.dim} feature columns, model expects {m.dim}")
    cands = m.unseen_ids if args.candidates == "unseen" else m.class_ids
    pred = gmodel.classify_batch(m, feats.rows, cands)
    head = ["example_index", "predicted_class"]
    if args.scores:
        ll, ids = gmodel.score_batch(m, feats.rows, cands)
        head += [f"loglik_{c}" for c in ids]
    lines = [",".join(head)]
    for i, p in enumerate(pred):
        row = [str(i), str(int(p))]
        if args.scores:
            row += [format(v, ".17g") for v in ll[i]]
        lines.append(",".join(row))
    _write(args.out, "\n".join(lines) + "\n")
    return 0


def cmd_transduce(args) -> int:
    m = gmodel.load_model(args.model)
    feats = dataset.load_features(args.unlabeled, args.features_format)
    cfg = transductive.EmConfig(args.max_iters, args.tol, args.min_mix, args.var_floor)
    clamped = None
    if args.clamp_labels:
        unseen = set(m.unseen_ids)
        clamped = {i: int(c) for i, c in enumerate(feats.labels) if int(c) in unseen}
    refined, trace = transductive.run_em(m, feats.rows, None, cfg, clamped)
    gmodel.save_model(refined, args.out)
    if args.trace:
        trace.to_csv(args.trace)
    state = "converged" if trace.converged else "stopped at max-iters"
    print(f"EM {state} after {trace.n_iter} iterations, loglik={trace.loglik[-1]:.6f} -> {args.out}")
    return 0


def cmd_fewshot(args) -> int:
    m = gmodel.load_model(args.model)
    feats = dataset.load_features(args.labeled, args.features_format, allow_empty=True)
    updated = fewshot.apply_fewshot(m, feats)
    gmodel.save_model(updated, args.out)
    counts = {c: s.n for c, s in sorted(updated.fewshot_stats.items())}
    print(f"few-shot counts per class: {counts} -> {args.out}")
    return 0


def cmd_eval(args) -> int:
    m = gmodel.load_model(args.model)
    pool = dataset.load_features(args.features, args.features_format)
    if args.protocol == "zsl":
        cands = m.unseen_ids if args.candidates == "unseen" else m.class_ids
        keep = np.isin(pool.labels, m.unseen_ids if args.candidates == "unseen" else m.class_ids)
        if not keep.any():
            raise ValueError("test pool has no examples of the candidate classes")
        pred = gmodel.classify_batch(m, pool.rows[keep], cands)
        report = evaluation.evaluate(pred, pool.labels[keep])
        sys.stdout.write(f"protocol zsl candidates={args.candidates} n={int(keep.sum())}\n")
        sys.stdout.write(report.to_text())
        if args.out:
            _write(args.out, report.to_csv())
        return 0
    fn = evaluation.fewshot_protocol if args.protocol == "fewshot" else evaluation.generalized_protocol
    res = fn(m, pool, args.shots, args.trials, args.seed, args.threads)
    header = f"protocol {args.protocol} shots={','.join(map(str, res.shots))} trials={args.trials} seed={args.seed}\n"
    sys.stdout.write(header + res.to_text())
    if args.out:
        _write(args.out, "# " + header + res.to_csv())
    return 0


COMMANDS = {
    "synth": cmd_synth,
    "fit": cmd_fit,
    "tune": cmd_tune,
    "predict": cmd_predict,
    "transduce": cmd_transduce,
    "fewshot": cmd_fewshot,
    "eval": cmd_eval,
}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    try:
        args = parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except SystemExit as exc:
        return int(exc.code or 0)
    except (ValueError, KeyError, OSError, np.linalg.LinAlgError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"error: {msg}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
