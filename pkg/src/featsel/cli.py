"""Command-line entry point.

Subcommands: synth, validate-gaussian, estimate-mi, rank, select-hard,
select-soft, reconstruct, distortion, sweep-simplex, repro, replay.
Every run writes a run.json provenance record beside its outputs;
`featsel replay run.json` re-executes it and reproduces the outputs
byte-exactly. Exit codes: 2 usage, 3 domain/format error, 4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys

import numpy as np

from . import __version__, bench, codec, gaussian, importance, multiobjective
from . import plots, synth
from .errors import DomainError, FeatselError, FormatError
from .tensor_store import load_manifest, read_tensor, write_tensor

EXIT_USAGE = 2
EXIT_DOMAIN = 3
EXIT_IO = 4


def _atomic_text(path, text):
    tmp = f"{path}.tmp{os.getpid()}"
    with open(tmp, "w", encoding="utf-8", newline="\n") as f:
        f.write(text)
    os.replace(tmp, path)


def _write_csv(path, header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(str(v) for v in row))
    _atomic_text(path, "\n".join(lines) + "\n")


def _fmt(x):
    return f"{float(x):.12g}"


def _write_provenance(out_dir, argv):
    doc = {"version": __version__, "argv": list(argv)}
    _atomic_text(os.path.join(out_dir, "run.json"),
                 json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _parse_floats(text):
    return [float(t) for t in text.split(",") if t.strip()]


def _parse_ints(text):
    return [int(t) for t in text.split(",") if t.strip()]


# ---------------------------------------------------------------------------
# subcommand implementations


def cmd_synth(args, argv):
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as f:
            spec = synth.SynthSpec.from_json(json.load(f))
    else:
        spec = synth.SynthSpec(seed=args.seed)
    os.makedirs(args.out, exist_ok=True)
    manifest_path = synth.generate(spec, args.out)
    with open(os.path.join(args.out, "spec.json"), "w", encoding="utf-8") as f:
        json.dump(spec.to_json(), f, indent=2, sort_keys=True)
        f.write("\n")
    _write_provenance(args.out, argv)
    print(manifest_path)


def cmd_validate_gaussian(args, argv):
    os.makedirs(args.out, exist_ok=True)
    rhos = _parse_floats(args.rhos)
    k_set = _parse_ints(args.k_set)
    records = []
    if args.mode in ("1d", "both"):
        records += gaussian.run_validation_1d(
            rhos, k_set, sample_count=args.samples, repeats=args.repeats,
            bins=args.bins, seed=args.seed)
    if args.mode in ("2d", "both"):
        records += gaussian.run_validation_2d(
            rhos, k_set, sample_count=args.samples_2d, bins=args.bins,
            seed=args.seed)
    unit = 1.0 if args.units == "nats" else float(np.log(2))
    rows = [(
        _fmt(r.rho), r.K, r.repeat_index, _fmt(r.estimate_nats / unit),
        _fmt(r.true_mi_nats / unit),
        "" if r.true_2d_nats is None else _fmt(r.true_2d_nats / unit), r.mode)
        for r in records]
    _write_csv(os.path.join(args.out, "validation.csv"),
               ["rho", "K", "repeat", "estimate_nats", "true_1d_nats",
                "true_2d_nats", "mode"], rows)
    if not args.no_figures:
        for mode in ("1d", "2d"):
            sel = [r for r in records if r.mode == mode]
            if sel:
                plots.plot_validation(
                    sel, os.path.join(args.out, f"validation_{mode}.png"),
                    title=f"Estimated vs. true MI ({mode})")
    _write_provenance(args.out, argv)


def cmd_estimate_mi(args, argv):
    os.makedirs(args.out, exist_ok=True)
    manifest = load_manifest(args.manifest)
    table = importance.mi_importance(
        manifest, args.task, k=args.k, bins=args.bins, seed=args.seed,
        exact_symbols=args.exact_symbols)
    rows = [(c, args.task, _fmt(s)) for c, s in sorted(table.scores.items())]
    _write_csv(os.path.join(args.out, "mi_estimates.csv"),
               ["channel_id", "task_id", "mi_nats"], rows)
    _write_provenance(args.out, argv)


def cmd_rank(args, argv):
    os.makedirs(args.out, exist_ok=True)
    manifest = load_manifest(args.manifest)
    if args.criterion == "mi":
        if args.task is None:
            raise DomainError("--task is required for the MI criterion")
        table = importance.mi_importance(
            manifest, args.task, k=args.k, bins=args.bins, seed=args.seed)
    elif args.criterion in ("l1", "l2"):
        table = importance.norm_importance(manifest, int(args.criterion[1]))
    else:
        table = importance.gm_importance(manifest)
    table.save(os.path.join(args.out, "importance.json"))
    rows = [(rank, c, _fmt(table.scores[c]))
            for rank, c in enumerate(table.ordering)]
    _write_csv(os.path.join(args.out, "ranking.csv"),
               ["rank", "channel_id", "score"], rows)
    _write_provenance(args.out, argv)


def _load_plan(args, channels, mode):
    table = importance.ImportanceTable.load(args.table)
    keep = codec.resolve_keep_count(
        channels, keep_fraction=args.keep_fraction, keep_count=args.keep_count)
    ext = None
    if getattr(args, "codec_cmd", None):
        ext = codec.ExternalCodec(encode_cmd=args.codec_cmd,
                                  decode_cmd=getattr(args, "decode_cmd", None))
    return codec.SelectionPlan(ordering=list(table.ordering), mode=mode,
                               keep_count=keep, qp=getattr(args, "qp", 30),
                               codec=ext)


def cmd_select_hard(args, argv):
    os.makedirs(args.out, exist_ok=True)
    values = read_tensor(args.features)
    plan = _load_plan(args, values.shape[0], "hard")
    kept, recon = codec.hard_select(values, plan)
    write_tensor(kept, os.path.join(args.out, "kept.ften"))
    write_tensor(recon, os.path.join(args.out, "reconstruction.ften"))
    _write_provenance(args.out, argv)


def cmd_select_soft(args, argv):
    os.makedirs(args.out, exist_ok=True)
    values = read_tensor(args.features)
    plan = _load_plan(args, values.shape[0], "soft")
    payload = codec.soft_select(values, plan)
    codec.save_payload(payload, os.path.join(args.out, "payload.fpay"))
    _write_csv(os.path.join(args.out, "sizes.csv"),
               ["base_bytes", "enhancement_bytes", "total_bytes"],
               [(payload.base_bytes, payload.enhancement_bytes, payload.total_bytes)])
    _write_provenance(args.out, argv)


def cmd_reconstruct(args, argv):
    os.makedirs(args.out, exist_ok=True)
    payload = codec.load_payload(args.payload)
    ext = None
    if args.codec_cmd:
        ext = codec.ExternalCodec(encode_cmd=args.codec_cmd, decode_cmd=args.decode_cmd)
    values = codec.reconstruct(payload, codec=ext)
    write_tensor(values, os.path.join(args.out, "reconstruction.ften"))
    _write_provenance(args.out, argv)


def _accuracy_key(args):
    return (args.keep, None if args.qp is None else args.qp)


def cmd_distortion(args, argv):
    os.makedirs(args.out, exist_ok=True)
    records = multiobjective.load_accuracy_csv(args.accuracy)
    if args.criterion not in records:
        raise DomainError(f"criterion {args.criterion!r} not present in {args.accuracy}")
    key = _accuracy_key(args)
    rows = []
    for task_id in sorted(records[args.criterion]):
        d = multiobjective.task_distortion(records[args.criterion][task_id], key)
        rows.append((task_id, args.criterion, args.keep,
                     "" if args.qp is None else args.qp, _fmt(d)))
    _write_csv(os.path.join(args.out, "distortion.csv"),
               ["task_id", "criterion", "keep_count", "qp", "distortion"], rows)
    _write_provenance(args.out, argv)


def cmd_sweep_simplex(args, argv):
    os.makedirs(args.out, exist_ok=True)
    records = multiobjective.load_accuracy_csv(args.accuracy)
    criteria = [c.strip() for c in args.criteria.split(",")]
    winner_map = multiobjective.sweep_simplex(
        records, criteria, _accuracy_key(args), resolution=args.resolution)
    x, y = plots.simplex_to_xy(winner_map.weights)
    rows = [( _fmt(w1), _fmt(w2), _fmt(w3), _fmt(xi), _fmt(yi), lab)
            for (w1, w2, w3), xi, yi, lab in zip(
                winner_map.weights, x, y, winner_map.winners)]
    _write_csv(os.path.join(args.out, "winners.csv"),
               ["w1", "w2", "w3", "x", "y", "winner"], rows)
    _atomic_text(os.path.join(args.out, "win_fractions.json"),
                 json.dumps({k: v for k, v in sorted(winner_map.win_fractions.items())},
                            indent=2) + "\n")
    if not args.no_figures:
        plots.plot_simplex(winner_map, os.path.join(args.out, "simplex.png"))
    _write_provenance(args.out, argv)


def cmd_repro(args, argv):
    """Desk-scale reproduction: estimator validation + synthetic benchmark."""
    os.makedirs(args.out, exist_ok=True)
    rhos = [0.0, 0.3, 0.6, 0.9]
    n1 = 50_000 if args.quick else 400_000
    n2 = 100_000 if args.quick else 1_000_000
    reps = 2 if args.quick else 5
    records = gaussian.run_validation_1d(rhos, sample_count=n1, repeats=reps,
                                         seed=args.seed)
    records += gaussian.run_validation_2d(rhos, sample_count=n2, seed=args.seed)
    rows = [(_fmt(r.rho), r.K, r.repeat_index, _fmt(r.estimate_nats),
             _fmt(r.true_mi_nats),
             "" if r.true_2d_nats is None else _fmt(r.true_2d_nats), r.mode)
            for r in records]
    _write_csv(os.path.join(args.out, "validation.csv"),
               ["rho", "K", "repeat", "estimate_nats", "true_1d_nats",
                "true_2d_nats", "mode"], rows)
    for mode in ("1d", "2d"):
        plots.plot_validation([r for r in records if r.mode == mode],
                              os.path.join(args.out, f"validation_{mode}.png"),
                              title=f"Estimated vs. true MI ({mode})")

    spec = synth.SynthSpec(seed=args.seed,
                           samples=50 if args.quick else 200)
    bench_dir = os.path.join(args.out, "benchmark")
    result = bench.run_benchmark(spec, bench_dir, seed=args.seed)
    acc_path = os.path.join(args.out, "accuracy.csv")
    bench.write_accuracy_csv(result, acc_path)
    bench.write_sizes_csv(result, os.path.join(args.out, "sizes.csv"))

    size_by = {(c, k, q): b for c, k, q, b in result.sizes}
    points = []
    for row in result.accuracies:
        if row["qp"] != "" and row["task_id"] == 0:
            key = (row["criterion"], row["keep_count"], row["qp"])
            points.append((row["criterion"], size_by[key], row["accuracy"]))
    if points:
        plots.plot_rate_distortion(points, os.path.join(args.out, "rate_distortion.png"))

    records_acc = multiobjective.load_accuracy_csv(acc_path)
    keep_half = codec.resolve_keep_count(spec.channels, 0.5)
    winner_map = multiobjective.sweep_simplex(
        records_acc, ["mi", "l2"], (keep_half, None),
        resolution=40 if args.quick else 100)
    _atomic_text(os.path.join(args.out, "win_fractions.json"),
                 json.dumps({k: v for k, v in sorted(winner_map.win_fractions.items())},
                            indent=2) + "\n")
    plots.plot_simplex(winner_map, os.path.join(args.out, "simplex.png"))
    _write_provenance(args.out, argv)


def cmd_replay(args, argv):
    with open(args.run, "r", encoding="utf-8") as f:
        doc = json.load(f)
    return main(doc["argv"])


# ---------------------------------------------------------------------------
# parser


def build_parser():
    p = argparse.ArgumentParser(
        prog="featsel",
        description="Task-aware feature-channel importance, selection and compression.")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="subcommand", required=True)

    def add_common(sp):
        sp.add_argument("--out", default=os.environ.get("FEATSEL_OUT", "featsel-out"),
                        help="output directory (env FEATSEL_OUT)")
        sp.add_argument("--seed", type=int, default=0)
        sp.add_argument("--threads", type=int,
                        default=int(os.environ.get("FEATSEL_THREADS", "0")),
                        help="parallelism cap; results are thread-count independent")
        sp.add_argument("--format", choices=["csv", "json"], default="csv")

    sp = sub.add_parser("synth", help="generate a synthetic dataset")
    add_common(sp)
    sp.add_argument("--spec", help="SynthSpec JSON file")
    sp.set_defaults(func=cmd_synth)

    sp = sub.add_parser("validate-gaussian",
                        help="estimator vs. closed-form Gaussian truth")
    add_common(sp)
    sp.add_argument("--mode", choices=["1d", "2d", "both"], default="both")
    sp.add_argument("--rhos", default="0,0.3,0.6,0.9")
    sp.add_argument("--k-set", default="2,4,8,16,32")
    sp.add_argument("--samples", type=int, default=400_000)
    sp.add_argument("--samples-2d", type=int, default=1_000_000)
    sp.add_argument("--repeats", type=int, default=5)
    sp.add_argument("--bins", type=int, default=gaussian.DEFAULT_BINS)
    sp.add_argument("--units", choices=["nats", "bits"], default="nats")
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_validate_gaussian)

    sp = sub.add_parser("estimate-mi", help="per-channel MI estimates for one task")
    add_common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--task", type=int, required=True)
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--bins", type=int, default=8)
    sp.add_argument("--exact-symbols", action="store_true")
    sp.set_defaults(func=cmd_estimate_mi)

    sp = sub.add_parser("rank", help="importance table under one criterion")
    add_common(sp)
    sp.add_argument("--manifest", required=True)
    sp.add_argument("--criterion", choices=["mi", "l1", "l2", "gm"], required=True)
    sp.add_argument("--task", type=int)
    sp.add_argument("--k", type=int, default=8)
    sp.add_argument("--bins", type=int, default=8)
    sp.set_defaults(func=cmd_rank)

    sp = sub.add_parser("select-hard", help="retain the top-ranked channels")
    add_common(sp)
    sp.add_argument("--features", required=True)
    sp.add_argument("--table", required=True)
    sp.add_argument("--keep-fraction", type=float)
    sp.add_argument("--keep-count", type=int)
    sp.set_defaults(func=cmd_select_hard)

    sp = sub.add_parser("select-soft",
                        help="8-bit base + compressed enhancement channels")
    add_common(sp)
    sp.add_argument("--features", required=True)
    sp.add_argument("--table", required=True)
    sp.add_argument("--keep-fraction", type=float)
    sp.add_argument("--keep-count", type=int)
    sp.add_argument("--qp", type=int, default=30)
    sp.add_argument("--codec-cmd", help="external encoder command template")
    sp.add_argument("--decode-cmd", help="external decoder command template")
    sp.set_defaults(func=cmd_select_soft)

    sp = sub.add_parser("reconstruct", help="rebuild a tensor from a payload")
    add_common(sp)
    sp.add_argument("--payload", required=True)
    sp.add_argument("--codec-cmd")
    sp.add_argument("--decode-cmd")
    sp.set_defaults(func=cmd_reconstruct)

    sp = sub.add_parser("distortion", help="per-task relative distortions")
    add_common(sp)
    sp.add_argument("--accuracy", required=True)
    sp.add_argument("--criterion", required=True)
    sp.add_argument("--keep", type=int, required=True)
    sp.add_argument("--qp", type=int)
    sp.set_defaults(func=cmd_distortion)

    sp = sub.add_parser("sweep-simplex", help="winner map over the task-weight simplex")
    add_common(sp)
    sp.add_argument("--accuracy", required=True)
    sp.add_argument("--criteria", default="mi,l2")
    sp.add_argument("--keep", type=int, required=True)
    sp.add_argument("--qp", type=int)
    sp.add_argument("--resolution", "-r", type=int, default=100)
    sp.add_argument("--no-figures", action="store_true")
    sp.set_defaults(func=cmd_sweep_simplex)

    sp = sub.add_parser("repro", help="run the validation + benchmark suite")
    add_common(sp)
    sp.add_argument("--quick", action="store_true",
                    help="reduced sample counts for a fast smoke run")
    sp.set_defaults(func=cmd_repro)

    sp = sub.add_parser("replay", help="re-run a provenance record")
    sp.add_argument("run", help="path to a run.json file")
    sp.set_defaults(func=cmd_replay)
    return p


def main(argv=None):
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rc = args.func(args, argv)
        return 0 if rc is None else rc
    except (DomainError, FormatError, FeatselError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DOMAIN
    except OSError as e:
        print(f"i/o error: {e}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
