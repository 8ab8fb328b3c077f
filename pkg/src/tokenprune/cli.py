"""Command-line entry point: ``tokenprune <command> ...``.

Commands::

    gen-model    random weights for a config
    gen-dataset  seeded synthetic token dataset
    profile      latency / proxy-accuracy grid
    plan         choose N_keep and the prune layer from a profile
    run          pruned inference, optionally timed against the unpruned model
    detect       report disproportionate latency steps in a profile

Exit codes: 0 success, 1 usage error, 2 invalid input, 3 measurement error.
Each command writes a ``<output>.manifest.json`` next to its main output,
and every JSON output carries that manifest's hash.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import hashlib
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from tokenprune import __version__, schemas
from tokenprune.data import load_dataset, synthetic_dataset
from tokenprune.model import (
    embed_tokens,
    forward,
    generate_random_model,
    load_config,
    load_model,
    mean_pool_model,
)
from tokenprune.profiler import (
    DEFAULT_REPS,
    DEFAULT_WARMUP,
    MODES,
    MeasurementError,
    compare_latency,
    detect_nonlinearities,
    load_profile,
    merge_accuracy,
    median_iqr,
    profile_grid,
    steps_document,
    time_call,
)
from tokenprune.pruning import TokenPruner
from tokenprune.scheduler import load_schedule, report_csv, schedule_report, select_schedule
from tokenprune.serialization import ModelFormatError, atomic_write_bytes, encode_tensors

log = logging.getLogger("tokenprune")

EXIT_OK, EXIT_USAGE, EXIT_INVALID, EXIT_MEASUREMENT = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def config_path_for(weights: str | Path) -> Path:
    """Sidecar config of a weight file: ``model.vitw`` -> ``model.config.json``."""
    return Path(weights).with_suffix(".config.json")


def _sha256_file(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _json_bytes(doc) -> bytes:
    return (json.dumps(doc, indent=2) + "\n").encode()


class Manifest:
    """Provenance record for one command invocation.

    The hash covers command, arguments, input file digests, seeds, outputs and
    tool version, but not the timestamp, so reruns with identical inputs
    reproduce it.
    """

    def __init__(self, command: str, args: argparse.Namespace, inputs: dict[str, str],
                 seeds: dict[str, int], outputs: list[Path]):
        arguments = {k: (str(v) if isinstance(v, Path) else v)
                     for k, v in sorted(vars(args).items()) if k not in ("func", "verbose")}
        self.doc = {
            "command": command,
            "arguments": arguments,
            "inputs": {k: _sha256_file(v) for k, v in sorted(inputs.items()) if v is not None},
            "seeds": seeds,
            "outputs": [str(p) for p in outputs],
            "tool_version": __version__,
        }
        self.hash = hashlib.sha256(json.dumps(self.doc, sort_keys=True).encode()).hexdigest()
        self.path = Path(str(outputs[0]) + ".manifest.json")

    def render(self) -> bytes:
        doc = dict(self.doc, timestamp=_dt.datetime.now(_dt.timezone.utc).isoformat(),
                   manifest_hash=self.hash)
        schemas.validate(doc, "manifest")
        return _json_bytes(doc)


def _commit(manifest: Manifest, files: dict[Path, bytes]) -> None:
    # everything is rendered before the first write, so a failure leaves no outputs
    blobs = dict(files)
    blobs[manifest.path] = manifest.render()
    for path, data in blobs.items():
        atomic_write_bytes(path, data)
        log.info("wrote %s", path)


def _load_model(path: str):
    cfg = config_path_for(path)
    try:
        return load_model(cfg, path)
    except ModelFormatError as exc:
        raise ModelFormatError(f"{path}: {exc}") from exc


# --- commands -------------------------------------------------------------------


def cmd_gen_model(args) -> int:
    config = load_config(args.config)
    model = mean_pool_model(config) if args.rule_based else generate_random_model(config, args.seed)
    out = Path(args.out)
    cfg_out = config_path_for(out)
    manifest = Manifest("gen-model", args, {"config": args.config}, {"seed": args.seed},
                        [out, cfg_out])
    cfg_bytes = (json.dumps(config.to_dict(), indent=2, sort_keys=True) + "\n").encode()
    _commit(manifest, {out: encode_tensors(model.weights), cfg_out: cfg_bytes})
    return EXIT_OK


def cmd_gen_dataset(args) -> int:
    config = load_config(args.config)
    out = Path(args.out)
    manifest = Manifest("gen-dataset", args, {"config": args.config}, {"seed": args.seed}, [out])
    params = {"samples": args.samples, "seed": args.seed, "signal": args.signal,
              "signal_fraction": args.signal_fraction}
    if args.classes is not None:
        params["classes"] = args.classes
    dataset = synthetic_dataset(config, **params)
    if out.suffix == ".json":
        doc = {"synthetic": params, "manifest_hash": manifest.hash}
        schemas.validate(doc, "dataset_spec")
        payload = _json_bytes(doc)
    else:
        payload = encode_tensors({"tokens": dataset.tokens,
                                  "labels": dataset.labels.astype(np.float32)})
    _commit(manifest, {out: payload})
    return EXIT_OK


def cmd_profile(args) -> int:
    model = _load_model(args.model)
    dataset = load_dataset(args.dataset, model.config) if args.dataset else None
    stored = load_profile(args.accuracy_from) if args.accuracy_from else None
    out = Path(args.out)
    csv_out = out.with_suffix(".csv")
    inputs = {"model": args.model, "model_config": config_path_for(args.model),
              "dataset": args.dataset, "accuracy_from": args.accuracy_from}
    manifest = Manifest("profile", args, inputs, {"seed": args.seed}, [out, csv_out])

    def progress(done, total):
        log.info("grid point %d/%d", done, total)

    profile = profile_grid(
        model, dataset, n_min=args.n_min, n_max=args.n_max, stride=args.stride, mode=args.mode,
        reps=args.reps, warmup=args.warmup, seed=args.seed, device_label=args.device_label,
        prune_layer=args.prune_layer, skip_accuracy=stored is not None, trials=args.trials,
        progress=progress,
    )
    if stored is not None:
        profile = merge_accuracy(profile, stored)
    profile = replace(profile, manifest_hash=manifest.hash)
    doc = profile.to_dict()
    schemas.validate(doc, "profile")
    _commit(manifest, {out: _json_bytes(doc), csv_out: profile.to_csv().encode()})
    return EXIT_OK


def cmd_plan(args) -> int:
    profile = load_profile(args.profile)
    depth = args.depth
    if args.depth_from_model:
        depth = load_config(config_path_for(args.depth_from_model)).depth
    if depth is None and args.prune_layer is None:
        raise UsageError("one of --depth, --depth-from-model or --prune-layer is required")
    schedule = select_schedule(profile, args.alpha, depth=depth, prune_layer=args.prune_layer)
    out = Path(args.out)
    csv_out = out.with_suffix(".csv")
    inputs = {"profile": args.profile}
    if args.depth_from_model:
        inputs["model_config"] = config_path_for(args.depth_from_model)
    manifest = Manifest("plan", args, inputs, {}, [out, csv_out])
    schedule = replace(schedule, manifest_hash=manifest.hash)
    doc = schedule.to_dict()
    schemas.validate(doc, "schedule")
    report = schedule_report(schedule, profile)
    _commit(manifest, {out: _json_bytes(doc), csv_out: report_csv(report).encode()})
    print(f"N={schedule.num_tokens} n_keep={schedule.n_keep} R={schedule.r} "
          f"prune_layer={schedule.prune_layer} alpha={schedule.alpha}")
    return EXIT_OK


def _timing(median_iqr_pair, reps, warmup) -> dict:
    med, iqr = median_iqr_pair
    if not med > 0:
        raise MeasurementError(f"non-positive median latency {med}")
    return {"median_us": med, "iqr_us": iqr, "reps": reps, "warmup": warmup}


def cmd_run(args) -> int:
    model = _load_model(args.model)
    cfg = model.config
    schedule = load_schedule(args.schedule)
    if schedule.num_tokens != cfg.num_tokens:
        raise ValueError(f"{args.schedule}: N={schedule.num_tokens} but model has "
                         f"num_tokens={cfg.num_tokens}")
    if schedule.special_count != cfg.num_special_tokens:
        raise ValueError(f"{args.schedule}: special_count={schedule.special_count} but model has "
                         f"num_special_tokens={cfg.num_special_tokens}")
    if not 0 <= schedule.prune_layer < cfg.depth:
        raise ValueError(f"{args.schedule}: prune_layer={schedule.prune_layer} outside model "
                         f"depth {cfg.depth}")
    if args.input:
        x = embed_tokens(load_dataset(args.input, cfg).tokens, cfg)
    else:
        x = embed_tokens(None, cfg, batch=args.batch, seed=args.seed)
    if x.shape[1] != cfg.num_tokens:
        raise ValueError(f"input has {x.shape[1]} tokens, model expects {cfg.num_tokens}")

    hook = TokenPruner(schedule.r, schedule.prune_layer, cfg.num_special_tokens)
    out = Path(args.out)
    summary_out = out.with_suffix(".summary.json")
    inputs = {"model": args.model, "model_config": config_path_for(args.model),
              "schedule": args.schedule, "input": args.input}
    manifest = Manifest("run", args, inputs, {"seed": args.seed}, [out, summary_out])

    logits = forward(model, x, hook)
    tokens_after = cfg.num_tokens - schedule.r + (1 if schedule.r else 0)
    summary = {"schema_version": 1, "N": cfg.num_tokens, "R": schedule.r,
               "prune_layer": schedule.prune_layer, "batch": int(x.shape[0]),
               "tokens_after_prune": tokens_after, "baseline": None,
               "manifest_hash": manifest.hash}
    if args.compare_baseline:
        base_logits = forward(model, x)
        summary["max_abs_logit_diff"] = float(np.max(np.abs(logits - base_logits)))
        if args.reps > 0:
            pruned_t, base_t = compare_latency(lambda: forward(model, x, hook),
                                               lambda: forward(model, x),
                                               args.reps, args.warmup)
            summary["pruned"] = _timing(pruned_t, args.reps, args.warmup)
            summary["baseline"] = _timing(base_t, args.reps, args.warmup)
            change = 100.0 * (pruned_t[0] - base_t[0]) / base_t[0]
            summary["latency_change_percent"] = change
            print(f"baseline median {base_t[0] / 1e3:.3f} ms, pruned median "
                  f"{pruned_t[0] / 1e3:.3f} ms ({change:+.1f}%)")
        else:
            summary["pruned"] = None
        print(f"max |logit difference| vs baseline: {summary['max_abs_logit_diff']:.3g}")
    elif args.reps > 0:
        times = time_call(lambda: forward(model, x, hook), args.reps, args.warmup)
        summary["pruned"] = _timing(median_iqr(times), args.reps, args.warmup)
        print(f"pruned median {summary['pruned']['median_us'] / 1e3:.3f} ms")
    else:
        summary["pruned"] = None
    schemas.validate(summary, "run_summary")
    _commit(manifest, {out: encode_tensors({"logits": logits}), summary_out: _json_bytes(summary)})
    return EXIT_OK


def cmd_detect(args) -> int:
    profile = load_profile(args.profile)
    steps = detect_nonlinearities(profile, args.threshold)
    out = Path(args.out)
    manifest = Manifest("detect", args, {"profile": args.profile}, {}, [out])
    doc = steps_document(steps, args.threshold, profile.content_hash(), manifest.hash)
    schemas.validate(doc, "steps")
    _commit(manifest, {out: _json_bytes(doc)})
    for s in steps:
        print(f"n {s.n_before} -> {s.n_after}: {s.change:+.1%}")
    return EXIT_OK


# --- parser -----------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="tokenprune", description=__doc__.split("\n\n")[0])
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen-model", help="generate a seeded random model")
    g.add_argument("--config", required=True, help="model config JSON")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--rule-based", action="store_true",
                   help="hand-set mean-pooling classifier instead of random weights")
    g.add_argument("--out", required=True, help="weights file; config is written beside it")
    g.set_defaults(func=cmd_gen_model)

    g = sub.add_parser("gen-dataset", help="generate a seeded synthetic token dataset")
    g.add_argument("--config", required=True)
    g.add_argument("--samples", type=int, required=True)
    g.add_argument("--classes", type=int)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--signal", type=float, default=1.0)
    g.add_argument("--signal-fraction", type=float, default=0.25)
    g.add_argument("--out", required=True, help="binary dataset, or .json for a synthetic spec")
    g.set_defaults(func=cmd_gen_dataset)

    g = sub.add_parser("profile", help="measure L(n) and A(n) over a token-count grid")
    g.add_argument("--model", required=True)
    g.add_argument("--dataset", help="dataset for the accuracy proxy; omit for latency only")
    g.add_argument("--accuracy-from", help="reuse the accuracy curve of a stored profile")
    g.add_argument("--n-min", type=int)
    g.add_argument("--n-max", type=int)
    g.add_argument("--stride", type=int, default=1)
    g.add_argument("--mode", choices=MODES, default=MODES[0])
    g.add_argument("--prune-layer", type=int)
    g.add_argument("--reps", type=int, default=DEFAULT_REPS)
    g.add_argument("--warmup", type=int, default=DEFAULT_WARMUP)
    g.add_argument("--trials", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--device-label", default="")
    g.add_argument("--out", required=True, help="profile JSON; CSV is written beside it")
    g.set_defaults(func=cmd_profile)

    g = sub.add_parser("plan", help="select a pruning schedule from a profile")
    g.add_argument("--profile", required=True)
    g.add_argument("--alpha", type=float, default=0.5)
    g.add_argument("--depth-from-model", help="weights file whose config supplies the depth")
    g.add_argument("--depth", type=int)
    g.add_argument("--prune-layer", type=int)
    g.add_argument("--out", required=True, help="schedule JSON; utility CSV is written beside it")
    g.set_defaults(func=cmd_plan)

    g = sub.add_parser("run", help="run pruned inference")
    g.add_argument("--model", required=True)
    g.add_argument("--schedule", required=True)
    g.add_argument("--input", help="dataset file with input tokens; omit for synthetic input")
    g.add_argument("--batch", type=int, default=1)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--compare-baseline", action="store_true")
    g.add_argument("--reps", type=int, default=DEFAULT_REPS, help="0 skips timing")
    g.add_argument("--warmup", type=int, default=DEFAULT_WARMUP)
    g.add_argument("--out", required=True, help="logits file; summary JSON is written beside it")
    g.set_defaults(func=cmd_run)

    g = sub.add_parser("detect", help="find disproportionate latency steps")
    g.add_argument("--profile", required=True)
    g.add_argument("--threshold", type=float, default=0.1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_detect)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"tokenprune {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except MeasurementError as exc:
        print(f"tokenprune {args.command}: measurement error: {exc}", file=sys.stderr)
        return EXIT_MEASUREMENT
    except FileNotFoundError as exc:
        print(f"tokenprune {args.command}: file not found: {exc.filename}", file=sys.stderr)
        return EXIT_INVALID
    except (ValueError, ModelFormatError, OSError) as exc:
        print(f"tokenprune {args.command}: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
