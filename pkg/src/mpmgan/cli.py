"""``mpmgan`` command line: train, eval and plot."""

from __future__ import annotations

import argparse
import csv
import logging
import math
import sys
from pathlib import Path

import numpy as np

from . import evaluation as ev
from . import svg
from .checkpoint import CheckpointError, CheckpointVersionError, load_checkpoint
from .config import ConfigError, load_config
from .data import Rng, derive_seed, sample_noise
from .runfiles import RunBusy, run_lock, write_manifest
from .trainer import METRICS_HEADER, NumericAbort, make_dataset, train

log = logging.getLogger("mpmgan")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC, EXIT_VERSION, EXIT_SEMANTIC = 0, 1, 2, 3, 4, 5


class CommandError(Exception):
    def __init__(self, message: str, code: int = EXIT_FAIL):
        super().__init__(message)
        self.code = code


def run_dir_of(ckpt: Path) -> Path:
    ckpt = Path(ckpt)
    return ckpt.parent.parent if ckpt.parent.name == "checkpoints" else ckpt.parent


# -- train ----------------------------------------------------------------

def cmd_train(args) -> int:
    path = Path(args.config)
    if not path.is_file():
        raise CommandError(f"config file not found: {path}")
    config = load_config(path)
    run_dir = Path(args.out_dir) if args.out_dir else Path(config.out_dir)
    with run_lock(run_dir):
        try:
            art = train(config, run_dir=run_dir, resume=args.resume)
        except NumericAbort as exc:
            raise CommandError(f"numeric abort: {exc} (diagnostic checkpoint: {exc.checkpoint})", EXIT_NUMERIC)
    print(f"trained {config.n_iters} iterations; final checkpoint {art.final_checkpoint}")
    return EXIT_OK


# -- eval -----------------------------------------------------------------

def _load(ckpt: str):
    try:
        return load_checkpoint(ckpt)
    except CheckpointVersionError as exc:
        raise CommandError(str(exc), EXIT_VERSION)
    except CheckpointError as exc:
        raise CommandError(str(exc))


def _eval_dataset(config, n: int):
    spec = config.dataset.model_copy(update={"n": n})
    return make_dataset(config.model_copy(update={"dataset": spec}), tag="eval")


def eval_coverage(state, out: Path, stem: str, args) -> list[Path]:
    cfg = state.bundle.config
    dataset = make_dataset(cfg)
    rng = Rng(derive_seed(args.seed, "coverage"))
    g1, g2 = ev.sample_generators(state.bundle, state.buffer, args.samples, rng)
    rep1 = ev.mode_coverage(g1, dataset, args.min_fraction)
    result = {"checkpoint_iteration": state.iteration, "k": dataset.k, "g1": rep1.to_dict()}
    union = set(rep1.covered_modes)
    if g2 is not None:
        rep2 = ev.mode_coverage(g2, dataset, args.min_fraction)
        result["g2"] = rep2.to_dict()
        union |= set(rep2.covered_modes)
    result["union"] = {"modes_covered": len(union), "covered_modes": sorted(union)}
    path = out / f"coverage_{stem}.json"
    ev.write_json(result, path)
    return [path]


def _needs_messages(state, what: str) -> None:
    if state.bundle.message_mode == "none":
        raise CommandError(f"{what}: message networks untrained (checkpoint has message_mode 'none')", EXIT_SEMANTIC)


def eval_probe(state, out: Path, stem: str, args) -> list[Path]:
    source = ev.SOURCE_ALIASES[args.source]
    if source != "discriminator_penultimate":
        _needs_messages(state, "probe")
    data = _eval_dataset(state.bundle.config, args.samples)
    fm = ev.extract_features(state.bundle, data.samples, source, data.labels)
    acc = ev.linear_probe(fm, args.train_frac, args.seed)
    control = ev.linear_probe(ev.shuffled_labels(fm, args.seed + 1), args.train_frac, args.seed)
    csv_path = out / f"features_{args.source}_{stem}.csv"
    ev.write_features_csv(fm, csv_path)
    json_path = out / f"probe_{args.source}_{stem}.json"
    ev.write_json({"source": source, "feature_dim": fm.dim, "n": len(fm.labels), "train_frac": args.train_frac,
                   "accuracy": acc, "shuffled_label_accuracy": control, "chance": 1.0 / data.k}, json_path)
    return [csv_path, json_path]


def eval_cluster(state, out: Path, stem: str, args) -> list[Path]:
    source = ev.SOURCE_ALIASES[args.source]
    if source != "discriminator_penultimate":
        _needs_messages(state, "cluster")
    data = _eval_dataset(state.bundle.config, args.samples)
    fm = ev.extract_features(state.bundle, data.samples, source, data.labels)
    emb = ev.embed_2d(fm)
    purity = ev.cluster_purity(emb.coords, fm.labels)
    csv_path = out / f"cluster_{args.source}_{stem}.csv"
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["e0", "e1", "label"])
        for (a, b), lab in zip(emb.coords, fm.labels):
            w.writerow([f"{a:.6g}", f"{b:.6g}", int(lab)])
    json_path = out / f"cluster_{args.source}_{stem}.json"
    ev.write_json({"source": source, "purity_knn5": purity, "degenerate": emb.degenerate,
                   "explained_variance": [float(v) for v in emb.explained_variance],
                   "total_variance": emb.total_variance}, json_path)
    groups = []
    for lab in np.unique(fm.labels):
        groups.append((f"label {int(lab)}", [tuple(p) for p in emb.coords[fm.labels == lab]], "dot"))
    svg_path = out / f"cluster_{args.source}_{stem}.svg"
    svg_path.write_text(svg.scatter_chart(groups, title=f"PCA of {source} features", xlabel="pc1", ylabel="pc2"))
    return [csv_path, json_path, svg_path]


def eval_interp(state, out: Path, stem: str, args) -> list[Path]:
    bundle = state.bundle
    kind = {"noise": "noise_interp", "message": "message_interp"}[args.kind]
    if kind == "message_interp":
        _needs_messages(state, "interp")
    rng = Rng(derive_seed(args.seed, "interp"))
    noise = ev.noise_spec_for(bundle, args.gen)
    incoming = state.buffer.m2 if args.gen == "g1" else state.buffer.m1
    if kind == "noise_interp":
        ends = sample_noise(noise, 2, rng).values
        fixed = incoming.values[0] if bundle.message_mode != "none" else None
    else:
        ends = incoming.values[:2]
        fixed = sample_noise(noise, 1, rng).values[0]
    trace = ev.interpolate(bundle, args.gen, kind, ends[0], ends[1], args.steps, fixed)
    name = f"interp_{args.kind}_{args.gen}_{stem}"
    csv_path, svg_path = out / f"{name}.csv", out / f"{name}.svg"
    ev.write_trace_csv(trace, csv_path)
    svg_path.write_text(ev.trace_svg(trace, make_dataset(bundle.config).centers))
    return [csv_path, svg_path]


_EVALS = {"coverage": eval_coverage, "probe": eval_probe, "cluster": eval_cluster, "interp": eval_interp}


def cmd_eval(args) -> int:
    ckpt = Path(args.checkpoint)
    state = _load(str(ckpt))
    run_dir = run_dir_of(ckpt)
    with run_lock(run_dir):
        out = run_dir / "eval"
        out.mkdir(exist_ok=True)
        written = _EVALS[args.what](state, out, ckpt.stem, args)
        write_manifest(run_dir)
    for p in written:
        print(p)
    return EXIT_OK


# -- plot -----------------------------------------------------------------

def read_metrics(path: Path) -> dict[str, list[float]]:
    if not path.is_file():
        raise CommandError(f"missing metrics file: {path}")
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != list(METRICS_HEADER):
        raise CommandError(f"corrupt metrics file (bad header): {path}")
    cols = {name: [] for name in METRICS_HEADER}
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(METRICS_HEADER):
            raise CommandError(f"corrupt metrics file: {path}:{lineno} has {len(row)} fields")
        try:
            for name, v in zip(METRICS_HEADER, row):
                cols[name].append(float(v))
        except ValueError:
            raise CommandError(f"corrupt metrics file: {path}:{lineno} is not numeric") from None
    return cols


def latest_checkpoint(run_dir: Path) -> Path | None:
    ckpts = sorted((run_dir / "checkpoints").glob("ckpt_*.ckpt"))
    return ckpts[-1] if ckpts else None


def cmd_plot(args) -> int:
    run_dir = Path(args.run_dir)
    cols = read_metrics(run_dir / "metrics.csv")
    with run_lock(run_dir):
        out = run_dir / "plots"
        out.mkdir(exist_ok=True)
        iters = cols["iter"]
        losses = {c: (iters, cols[c]) for c in ("loss_d", "loss_g1", "loss_g2")
                  if any(math.isfinite(v) for v in cols[c]) or not iters}
        written = [out / "loss_curves.svg"]
        written[0].write_text(svg.line_chart(losses, title="losses", xlabel="iteration", ylabel="loss"))
        scores = {c: (iters, cols[c]) for c in ("mean_d_real", "mean_d_g1", "mean_d_g2")
                  if any(math.isfinite(v) for v in cols[c])}
        written.append(out / "d_scores.svg")
        written[1].write_text(svg.line_chart(scores, title="mean discriminator scores", xlabel="iteration",
                                             ylabel="D(x)"))
        ckpt = latest_checkpoint(run_dir)
        if ckpt is not None:
            state = _load(str(ckpt))
            g1, g2 = ev.sample_generators(state.bundle, state.buffer, args.samples, Rng(derive_seed(0, "plot")))
            groups = [("G1", [tuple(p) for p in g1], "dot")]
            if g2 is not None:
                groups.append(("G2", [tuple(p) for p in g2], "ring"))
            groups.append(("mode centers", [tuple(c) for c in make_dataset(state.bundle.config).centers], "cross"))
            written.append(out / "generations.svg")
            written[-1].write_text(svg.scatter_chart(groups, title=f"generations at iteration {state.iteration}"))
        write_manifest(run_dir)
    for p in written:
        print(p)
    return EXIT_OK


# -- entry ----------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mpmgan", description="Message-passing multi-generator GAN lab.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="train from a JSON config")
    p.add_argument("config")
    p.add_argument("--resume", help="checkpoint to continue from")
    p.add_argument("--out-dir", help="override the config's out_dir")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint")
    p.add_argument("checkpoint")
    esub = p.add_subparsers(dest="what", required=True)
    e = esub.add_parser("coverage")
    e.add_argument("--samples", type=int, default=2000)
    e.add_argument("--min-fraction", type=float, default=0.01)
    e.add_argument("--seed", type=int, default=0)
    e = esub.add_parser("probe")
    e.add_argument("--source", choices=("disc", "msg", "both"), required=True)
    e.add_argument("--samples", type=int, default=3000)
    e.add_argument("--train-frac", type=float, default=0.5)
    e.add_argument("--seed", type=int, default=0)
    e = esub.add_parser("cluster")
    e.add_argument("--source", choices=("disc", "msg", "both"), default="msg")
    e.add_argument("--samples", type=int, default=1000)
    e = esub.add_parser("interp")
    e.add_argument("--kind", choices=("noise", "message"), required=True)
    e.add_argument("--gen", choices=("g1", "g2"), required=True)
    e.add_argument("--steps", type=int, default=16)
    e.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="render SVG plots for a run directory")
    p.add_argument("run_dir")
    p.add_argument("--samples", type=int, default=500)
    p.set_defaults(func=cmd_plot)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"mpmgan: error: {exc}", file=sys.stderr)
        return exc.code
    except ConfigError as exc:
        print(f"mpmgan: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (RunBusy, OSError, ValueError) as exc:
        print(f"mpmgan: error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
