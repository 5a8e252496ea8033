"""Command-line entry point: ``nlrl <command> [flags]``.

Exit codes: 0 success, 1 check failure, 2 usage error, 3 numerical divergence.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import subprocess
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .data import N_TARGETS, TARGET_NAMES, generate, load_csv, save_csv
from .errors import DivergenceError, NLRLError
from .gradcheck import run_grad_check
from .layer import NegationMode, Variant
from .logic import parse
from .network import NetworkSpec, load_checkpoint, parse_arch, save_checkpoint
from .rules import extract, init_from_formula
from .train import (
    GRID_ARCHITECTURES,
    TrainConfig,
    evaluate,
    run_grid,
    train,
    write_grid_csv,
    write_metrics_csv,
    write_table1_csv,
    write_table2_csv,
    write_timing_csv,
)

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_DIVERGED = 0, 1, 2, 3


class UsageError(Exception):
    pass


def _default_seed() -> int:
    try:
        return int(os.environ.get("NLRL_SEED", "0"))
    except ValueError:
        return 0


def version_string() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty", "--tags"],
                             cwd=Path(__file__).resolve().parent, capture_output=True, text=True, timeout=5)
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def write_manifest(path, command: str, argv, args, seeds: dict, outputs) -> None:
    config = {k: v for k, v in vars(args).items() if k not in ("func", "config")}
    manifest = {
        "command": command,
        "argv": list(argv),
        "config": config,
        "seeds": seeds,
        "version": version_string(),
        "outputs": [str(o) for o in outputs],
    }
    Path(path).write_text(json.dumps(manifest, indent=1, default=str) + "\n")


def _out_dir(path) -> Path:
    p = Path(path)
    try:
        p.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise UsageError(f"cannot create output directory {p}: {exc}") from None
    return p


def _train_config(args) -> TrainConfig:
    try:
        return TrainConfig(learning_rate=args.lr, batch_size=args.batch, max_epochs=args.epochs,
                           early_stop_patience=args.patience, accuracy_tolerance=args.tau,
                           init_range=args.init_range, seed=args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _spec(arch: str, variant: str, negation_mode: str, epsilon: float) -> NetworkSpec:
    try:
        return NetworkSpec(parse_arch(arch), Variant(variant), NegationMode(negation_mode), epsilon)
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _print_metrics(rec, label="") -> None:
    for k in range(len(rec.accuracy)):
        name = TARGET_NAMES[k] if len(rec.accuracy) == N_TARGETS else f"f{k}"
        print(f"  f{k:<2d} {name:<10s} {rec.accuracy[k]:7.2f}%")
    print(f"{label}overall accuracy: {rec.overall:.2f}%")


# -- commands -------------------------------------------------------------------

def cmd_gen_data(args, argv) -> int:
    if args.count < 2:
        raise UsageError("--count must be at least 2")
    d = generate(args.seed, args.count)
    try:
        save_csv(d, args.out)
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from None
    write_manifest(f"{args.out}.manifest.json", "gen-data", argv, args, {"data": args.seed}, [args.out])
    print(f"wrote {len(d)} samples ({d.n_train} train / {d.n_test} test) to {args.out}")
    return EXIT_OK


def _load_data(path, seed=0):
    try:
        return load_csv(path, seed)
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from None


def cmd_train(args, argv) -> int:
    spec = _spec(args.arch, args.variant, args.negation_mode, args.epsilon)
    config = _train_config(args)
    data = _load_data(args.data)
    out = _out_dir(args.out)

    def progress(rec):
        if not args.quiet:
            print(f"epoch {rec.epoch:3d}  iter {rec.iteration:7d}  train {rec.train_loss:.6f}  "
                  f"val {rec.val_loss:.6f}  acc {rec.overall:6.2f}%", flush=True)

    try:
        net, history = train(spec, data, config, on_epoch=progress)
    except DivergenceError as exc:
        print(f"diverged: {exc} (last finite epoch {exc.last_finite_epoch})", file=sys.stderr)
        return EXIT_DIVERGED
    ckpt, metrics = out / "checkpoint.json", out / "metrics.csv"
    save_checkpoint(net, ckpt)
    write_metrics_csv(history, metrics)
    write_manifest(out / "manifest.json", "train", argv, args, {"train": args.seed}, [ckpt, metrics])
    rec = evaluate(net, data, args.tau)
    _print_metrics(rec, "final ")
    return EXIT_OK


def cmd_eval(args, argv) -> int:
    net = load_checkpoint(args.checkpoint)
    data = _load_data(args.data)
    if data.inputs.shape[1] != net.spec.n_in or data.targets.shape[1] != net.spec.n_out:
        raise UsageError(f"checkpoint {net.spec.arch} does not fit data with {data.inputs.shape[1]} inputs "
                         f"and {data.targets.shape[1]} targets")
    if not 0 < args.tau <= 1:
        raise UsageError("--tau must lie in (0, 1]")
    testset = (data.inputs, data.targets) if args.split == "all" else data
    if len(_rows(testset)) == 0:
        raise UsageError(f"the {args.split} split is empty")
    rec = evaluate(net, testset, args.tau)
    _print_metrics(rec)
    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["checkpoint", "tau", "val_loss"] + [f"acc_f{k}" for k in range(len(rec.accuracy))]
                       + ["acc_overall"])
            w.writerow([args.checkpoint, repr(args.tau), repr(rec.val_loss)] + [repr(a) for a in rec.accuracy]
                       + [repr(rec.overall)])
        write_manifest(f"{args.out}.manifest.json", "eval", argv, args, {}, [args.out])
    return EXIT_OK


def _rows(testset):
    return testset.test[0] if hasattr(testset, "test") else testset[0]


def _split_list(text, allowed=None):
    items = [t.strip() for t in text.split(",") if t.strip()]
    if allowed is not None:
        bad = [t for t in items if t not in allowed]
        if bad:
            raise UsageError(f"unknown value(s) {', '.join(bad)}; choose from {', '.join(allowed)}")
    return items


def cmd_grid(args, argv) -> int:
    archs = _split_list(args.archs)
    for a in archs:
        _spec(a, Variant.AND_NONEG.value, args.negation_mode, 1e-5)
    variants = _split_list(args.variants, [v.value for v in Variant])
    config = _train_config(args)
    data = _load_data(args.data)
    out = _out_dir(args.out)
    cells = run_grid(archs, variants, data, config, args.negation_mode, parallel=args.parallel,
                     timing_repetitions=args.timing_reps)
    paths = [out / "grid.csv", out / "table1.csv", out / "table2.csv", out / "timing.csv"]
    write_grid_csv(cells, paths[0])
    write_table1_csv(cells, paths[1], TARGET_NAMES)
    write_table2_csv(cells, paths[2])
    write_timing_csv(cells, paths[3])
    seeds = {f"{c.architecture}/{c.variant}": c.seed for c in cells}
    write_manifest(out / "manifest.json", "grid", argv, args, seeds, paths)
    for c in cells:
        print(f"{c.architecture:<14s} {c.variant:<10s} {c.overall_acc:7.2f}%  {c.train_seconds:8.1f}s  {c.status}")
    return EXIT_OK


def cmd_surface(args, argv) -> int:
    if not 0 < args.step <= 0.5:
        raise UsageError("--step must lie in (0, 0.5]")
    net = load_checkpoint(args.checkpoint)
    if net.spec.n_in != 2:
        raise UsageError("surfaces need a two-input network")
    count = int(np.floor(1.0 / args.step + 1e-9)) + 1
    ticks = np.minimum(np.arange(count) * args.step, 1.0)
    xx, yy = np.meshgrid(ticks, ticks, indexing="ij")
    pts = np.column_stack([xx.ravel(), yy.ravel()])
    pred = net.predict(pts)
    try:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x", "y"] + [f"pred_f{k}" for k in range(net.spec.n_out)])
            for p, row in zip(pts, pred):
                w.writerow([repr(float(p[0])), repr(float(p[1]))] + [repr(float(v)) for v in row])
    except OSError as exc:
        raise UsageError(f"cannot write {args.out}: {exc}") from None
    write_manifest(f"{args.out}.manifest.json", "surface", argv, args, {}, [args.out])
    print(f"wrote {len(pts)} grid points to {args.out}")
    return EXIT_OK


def cmd_extract(args, argv) -> int:
    if not 0.5 < args.theta < 1:
        raise UsageError("--theta must lie in (0.5, 1)")
    net = load_checkpoint(args.checkpoint)
    report = extract(net, args.theta)
    print(report.text())
    if args.out:
        Path(args.out).write_text(report.to_json() + "\n")
        write_manifest(f"{args.out}.manifest.json", "extract", argv, args, {}, [args.out])
    return EXIT_OK


def cmd_grad_check(args, argv) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    if not args.h > 0:
        raise UsageError("--h must be positive")
    report = run_grad_check(args.trials, args.h, args.seed)
    n_fail = len(report.failures())
    for variant in Variant:
        for mode in NegationMode:
            rows = [t for t in report.trials if t.variant is variant and t.negation_mode is mode]
            worst = max(t.worst_rel for t in rows)
            bad = sum(not t.passed for t in rows)
            print(f"{variant.value:<10s} {mode.value:<19s} trials {len(rows):4d}  failed {bad:4d}  "
                  f"worst rel err {worst:.3e}")
    if n_fail:
        print("worst offenders:")
        for t in sorted(report.failures(), key=lambda t: -t.worst_rel)[:10]:
            print(f"  {t.variant.value} {t.negation_mode.value} trial {t.trial} arch {t.arch}: "
                  f"{t.worst_coord} rel err {t.worst_rel:.3e}")
        return EXIT_CHECK
    print("gradient check passed")
    return EXIT_OK


def cmd_inject(args, argv) -> int:
    spec = _spec(args.arch, args.variant, args.negation_mode, args.epsilon)
    formulas = [None] * spec.n_out
    for item in args.formula:
        idx, sep, text = item.partition("=")
        if not sep:
            formulas = parse(item)
            continue
        try:
            k = int(idx)
        except ValueError:
            raise UsageError(f"--formula expects INDEX=FORMULA, got {item!r}") from None
        if not 0 <= k < spec.n_out:
            raise UsageError(f"output index {k} outside 0..{spec.n_out - 1}")
        if not isinstance(formulas, list):
            raise UsageError("cannot mix a global formula with per-output formulas")
        formulas[k] = parse(text)
    net = init_from_formula(formulas, spec)
    save_checkpoint(net, args.out)
    write_manifest(f"{args.out}.manifest.json", "inject", argv, args, {}, [args.out])
    print(f"wrote injected {spec.arch} {spec.variant.value} checkpoint to {args.out}")
    return EXIT_OK


def cmd_replay(args, argv) -> int:
    manifest = json.loads(Path(args.manifest).read_text())
    return main(manifest["argv"])


# -- parser -----------------------------------------------------------------------

def _add_model_flags(p, arch_required=True):
    p.add_argument("--arch", required=arch_required, help="layer sizes, e.g. 2-4-4-10")
    p.add_argument("--variant", default=Variant.AND_NONEG.value, choices=[v.value for v in Variant])
    p.add_argument("--negation-mode", default=NegationMode.PER_INPUT.value,
                   choices=[m.value for m in NegationMode])
    p.add_argument("--epsilon", type=float, default=1e-5)


def _add_train_flags(p):
    p.add_argument("--lr", type=float, default=10.0)
    p.add_argument("--batch", type=int, default=20)
    p.add_argument("--epochs", type=int, default=50)
    p.add_argument("--patience", type=int, default=5)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--init-range", type=float, default=0.5)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlrl", description="Neural logic rule layers")
    parser.add_argument("--version", action="version", version=f"nlrl {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    seed = _default_seed()

    def command(name, func, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="file of key=value defaults; flags win")
        p.set_defaults(func=func)
        return p

    p = command("gen-data", cmd_gen_data, "generate the synthetic dataset")
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--count", type=int, default=100_000)
    p.add_argument("--out", required=True)

    p = command("train", cmd_train, "train one network")
    _add_model_flags(p)
    _add_train_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--out", default="run")
    p.add_argument("--quiet", action="store_true")

    p = command("eval", cmd_eval, "evaluate a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--tau", type=float, default=0.1)
    p.add_argument("--split", choices=["test", "all"], default="test")
    p.add_argument("--out")

    p = command("grid", cmd_grid, "train the architecture x variant grid")
    p.add_argument("--archs", default=",".join(GRID_ARCHITECTURES))
    p.add_argument("--variants", default=",".join(v.value for v in Variant))
    p.add_argument("--negation-mode", default=NegationMode.PER_INPUT.value,
                   choices=[m.value for m in NegationMode])
    _add_train_flags(p)
    p.add_argument("--data", required=True)
    p.add_argument("--seed", type=int, default=seed)
    p.add_argument("--parallel", type=int, default=1)
    p.add_argument("--timing-reps", type=int, default=200)
    p.add_argument("--out", default="grid")

    p = command("surface", cmd_surface, "evaluate a checkpoint on a regular grid over [0,1]^2")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--step", type=float, default=0.01)
    p.add_argument("--out", required=True)

    p = command("extract", cmd_extract, "read rules out of a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--theta", type=float, default=0.9)
    p.add_argument("--out", help="JSON report path")

    p = command("grad-check", cmd_grad_check, "compare analytic and finite-difference gradients")
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--h", type=float, default=1e-5)
    p.add_argument("--seed", type=int, default=seed)

    p = command("inject", cmd_inject, "write a checkpoint encoding given formulas")
    _add_model_flags(p)
    p.add_argument("--formula", action="append", required=True,
                   help="FORMULA for every output, or INDEX=FORMULA (repeatable)")
    p.add_argument("--out", required=True)

    p = command("replay", cmd_replay, "re-run the command recorded in a manifest")
    p.add_argument("manifest")
    return parser


def read_config(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise UsageError(f"{path}:{lineno}: expected key=value")
        values[key.strip().replace("-", "_")] = value.strip()
    return values


def _parse(parser, argv):
    args = parser.parse_args(argv)
    if getattr(args, "config", None):
        values = read_config(args.config)
        subparser = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest: a for a in subparser._actions}
        unknown = sorted(set(values) - set(known))
        if unknown:
            raise UsageError(f"unknown config key(s): {', '.join(unknown)}")
        defaults = {}
        for key, raw in values.items():
            action = known[key]
            defaults[key] = action.type(raw) if action.type else raw
        subparser.set_defaults(**defaults)
        args = parser.parse_args(argv)
    return args


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _parse(parser, argv)
        return args.func(args, argv)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, NLRLError, ValueError, OSError) as exc:
        print(f"nlrl: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
