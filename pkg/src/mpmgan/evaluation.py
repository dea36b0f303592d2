"""Evaluation on frozen agents: mode coverage, feature probes, 2-D embeddings, interpolation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Literal

import numpy as np

from . import svg
from . import tensor as T
from .data import NoiseSpec, Rng, SyntheticDataset, sample_noise
from .tensor import Tensor
from .trainer import AgentBundle, MessageBuffer, compose_generator_input, produce_messages

FeatureSource = Literal["discriminator_penultimate", "message_generator", "concatenated"]
SOURCE_ALIASES = {"disc": "discriminator_penultimate", "msg": "message_generator", "both": "concatenated"}

PROBE_STEPS = 500
PROBE_LR = 0.1


# -- mode coverage ---------------------------------------------------------

@dataclass
class ModeCoverageReport:
    modes_covered: int
    per_mode_fraction: list[float]
    high_quality_fraction: float
    covered_modes: list[int]
    n_samples: int
    min_fraction: float
    radius: float

    def to_dict(self) -> dict:
        return asdict(self)


def mode_coverage(samples, dataset: SyntheticDataset, min_fraction: float = 0.01,
                  n_sigma: float = 3.0) -> ModeCoverageReport:
    """A sample counts for its nearest center only, and only when within ``n_sigma`` sigma of it."""
    if dataset.centers is None or len(dataset.centers) == 0:
        raise ValueError("dataset has no known mode centers")
    if not 0.0 < min_fraction < 1.0:
        raise ValueError(f"min_fraction must be in (0, 1), got {min_fraction}")
    x = samples.values if isinstance(samples, Tensor) else np.asarray(samples, dtype=np.float64)
    centers = np.asarray(dataset.centers)
    radius = n_sigma * dataset.sigma
    n = len(x)
    if n == 0:
        return ModeCoverageReport(0, [0.0] * len(centers), 0.0, [], 0, min_fraction, radius)
    dist = np.linalg.norm(x[:, None, :] - centers[None, :, :], axis=2)
    nearest = dist.argmin(axis=1)
    close = dist[np.arange(n), nearest] <= radius
    counts = np.bincount(nearest[close], minlength=len(centers))
    frac = counts / n
    covered = [int(j) for j in np.flatnonzero(frac >= min_fraction)]
    return ModeCoverageReport(len(covered), [float(f) for f in frac], float(close.mean()), covered, n,
                              min_fraction, radius)


def sample_generators(bundle: AgentBundle, buffer: MessageBuffer, n: int, rng: Rng) -> tuple[np.ndarray, np.ndarray | None]:
    """Draw ``n`` samples from each generator, rolling the message exchange forward batch by batch."""
    cfg = bundle.config
    mode = bundle.message_mode
    batch = buffer.m1.shape[0]
    out1, out2 = [], []
    m1, m2 = buffer.m1, buffer.m2
    with T.no_grad():
        while sum(len(o) for o in out1) < n:
            z1 = sample_noise(bundle.noise1, batch, rng)
            gen1 = bundle.g1(compose_generator_input(z1, m2, mode))
            out1.append(gen1.values)
            if cfg.single_generator:
                continue
            z2 = sample_noise(bundle.noise2, batch, rng)
            gen2 = bundle.g2(compose_generator_input(z2, m1, mode))
            out2.append(gen2.values)
            if mode != "none":
                m1, m2 = produce_messages(bundle, gen1, gen2, z1, z2, m1, m2)
    g1 = np.concatenate(out1)[:n]
    g2 = np.concatenate(out2)[:n] if out2 else None
    return g1, g2


# -- features and probes ---------------------------------------------------

@dataclass
class FeatureMatrix:
    features: np.ndarray
    source: str
    labels: np.ndarray

    @property
    def dim(self) -> int:
        return self.features.shape[1]


def extract_features(bundle: AgentBundle, inputs, source: str, labels=None) -> FeatureMatrix:
    source = SOURCE_ALIASES.get(source, source)
    x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    with T.no_grad():
        if source == "discriminator_penultimate":
            feats = bundle.d.hidden(x).values
        elif source == "message_generator":
            feats = bundle.msg_gen(x).values
        elif source == "concatenated":
            feats = np.concatenate([bundle.d.hidden(x).values, bundle.msg_gen(x).values], axis=1)
        else:
            raise ValueError(f"unknown feature source {source!r}")
    labels = np.asarray(labels if labels is not None else np.full(len(feats), -1), dtype=np.int64)
    return FeatureMatrix(np.array(feats), source, labels)


@dataclass
class ProbeResult:
    accuracy: float
    predictions: np.ndarray
    test_index: np.ndarray
    classes: np.ndarray


def _split(n: int, train_frac: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    perm = Rng(seed).permutation(n)
    n_train = min(max(int(round(train_frac * n)), 1), n - 1)
    return perm[:n_train], perm[n_train:]


def fit_probe(features: FeatureMatrix, train_frac: float = 0.5, seed: int = 0,
              steps: int = PROBE_STEPS, lr: float = PROBE_LR) -> ProbeResult:
    """Multinomial logistic regression by full-batch gradient descent from zero weights.

    Columns are standardized on the train split and scaled by 1/sqrt(f), so the
    Gram matrix (and hence every prediction) is unchanged when columns are duplicated.
    """
    if not 0.0 < train_frac < 1.0:
        raise ValueError(f"train_frac must be in (0, 1), got {train_frac}")
    classes, y = np.unique(features.labels, return_inverse=True)
    if len(classes) < 2:
        raise ValueError("linear probe needs at least two classes")
    x = np.asarray(features.features, dtype=np.float64)
    n, f = x.shape
    train, test = _split(n, train_frac, seed)
    mu = x[train].mean(axis=0)
    sd = x[train].std(axis=0)
    sd[sd == 0] = 1.0
    xs = (x - mu) / sd / math.sqrt(f)
    k = len(classes)
    onehot = np.eye(k)[y[train]]
    xt = xs[train]
    w = np.zeros((f, k))
    b = np.zeros(k)
    for _ in range(steps):
        logits = xt @ w + b
        logits -= logits.max(axis=1, keepdims=True)
        p = np.exp(logits)
        p /= p.sum(axis=1, keepdims=True)
        g = (p - onehot) / len(train)
        w -= lr * (xt.T @ g)
        b -= lr * g.sum(axis=0)
    pred = np.argmax(xs[test] @ w + b, axis=1)
    acc = float(np.mean(pred == y[test]))
    return ProbeResult(acc, classes[pred], test, classes)


def linear_probe(features: FeatureMatrix, train_frac: float = 0.5, seed: int = 0) -> float:
    return fit_probe(features, train_frac, seed).accuracy


def shuffled_labels(features: FeatureMatrix, seed: int) -> FeatureMatrix:
    perm = Rng(seed).permutation(len(features.labels))
    return FeatureMatrix(features.features, features.source, features.labels[perm])


# -- embedding ------------------------------------------------------------

@dataclass
class Embedding:
    coords: np.ndarray
    explained_variance: np.ndarray
    total_variance: float
    components: np.ndarray
    degenerate: bool = False


def embed_2d(features) -> Embedding:
    """Projection on the top two principal components.

    Each component is signed so that its largest-magnitude loading is positive.
    """
    x = features.features if isinstance(features, FeatureMatrix) else np.asarray(features, dtype=np.float64)
    n, f = x.shape
    if n < 3 or f < 2:
        raise ValueError(f"embed_2d needs n >= 3 and f >= 2, got {x.shape}")
    xc = x - x.mean(axis=0)
    total = float((xc**2).sum() / (n - 1))
    if total == 0.0:
        return Embedding(np.zeros((n, 2)), np.zeros(2), 0.0, np.zeros((2, f)), degenerate=True)
    _, s, vt = np.linalg.svd(xc, full_matrices=False)
    comps = vt[:2].copy()
    for c in comps:
        if c[np.argmax(np.abs(c))] < 0:
            c *= -1.0
    var = s[:2] ** 2 / (n - 1)
    return Embedding(xc @ comps.T, var, total, comps)


def cluster_purity(coords: np.ndarray, labels: np.ndarray, k: int = 5) -> float:
    """Mean fraction of each point's ``k`` nearest neighbours that share its label."""
    coords = np.asarray(coords)
    labels = np.asarray(labels)
    n = len(coords)
    k = min(k, n - 1)
    d = ((coords[:, None, :] - coords[None, :, :]) ** 2).sum(axis=2)
    np.fill_diagonal(d, np.inf)
    nn = np.argsort(d, axis=1, kind="stable")[:, :k]
    return float((labels[nn] == labels[:, None]).mean())


# -- interpolation --------------------------------------------------------

@dataclass
class InterpolationTrace:
    kind: str
    which_generator: str
    a: np.ndarray
    b: np.ndarray
    steps: int
    inputs: np.ndarray
    generations: np.ndarray


def interpolation_points(a: np.ndarray, b: np.ndarray, steps: int) -> np.ndarray:
    if steps < 2:
        raise ValueError(f"steps must be >= 2, got {steps}")
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ts = np.arange(steps) / (steps - 1)
    pts = a[None, :] + ts[:, None] * (b - a)[None, :]
    pts[0] = a
    pts[-1] = b
    return pts


def generate(bundle: AgentBundle, which: str, z, msg=None) -> np.ndarray:
    """Direct generation from explicit noise (and message) rows."""
    net = {"g1": bundle.g1, "g2": bundle.g2}[which]
    z = np.atleast_2d(np.asarray(z, dtype=np.float64))
    m = None if msg is None else Tensor(np.atleast_2d(np.asarray(msg, dtype=np.float64)))
    with T.no_grad():
        return net(compose_generator_input(Tensor(z), m, bundle.message_mode)).values


def interpolate(bundle: AgentBundle, which: str, kind: str, a, b, steps: int, fixed=None) -> InterpolationTrace:
    """Walk from ``a`` to ``b`` in the noise or message input while holding ``fixed`` (the other input)."""
    if which not in ("g1", "g2"):
        raise ValueError(f"unknown generator {which!r}")
    mode = bundle.message_mode
    nd, md = bundle.config.noise_dim, bundle.msg_dim
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if kind == "noise_interp":
        vary_dim, fixed_dim = nd, (md if mode != "none" else None)
    elif kind == "message_interp":
        if mode == "none":
            raise ValueError("message interpolation needs a message-passing model")
        vary_dim, fixed_dim = md, nd
    else:
        raise ValueError(f"unknown interpolation kind {kind!r}")
    if a.shape != (vary_dim,) or b.shape != (vary_dim,):
        raise T.ShapeError(f"{kind}: endpoints must have dim {vary_dim}, got {a.shape} and {b.shape}")
    pts = interpolation_points(a, b, steps)
    held = None
    if fixed_dim is not None:
        if fixed is None:
            raise ValueError(f"{kind}: the held-fixed input (dim {fixed_dim}) is required")
        fixed = np.asarray(fixed, dtype=np.float64).reshape(-1)
        if fixed.shape != (fixed_dim,):
            raise T.ShapeError(f"{kind}: fixed input must have dim {fixed_dim}, got {fixed.shape}")
        held = np.tile(fixed, (steps, 1))
    if kind == "noise_interp":
        gens = generate(bundle, which, pts, held)
    else:
        gens = generate(bundle, which, held, pts)
    return InterpolationTrace(kind, which, a, b, steps, pts, gens)


# -- exports --------------------------------------------------------------

def write_features_csv(fm: FeatureMatrix, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"f{i}" for i in range(fm.dim)] + ["label"])
        for row, lab in zip(fm.features, fm.labels):
            w.writerow([f"{v:.6g}" for v in row] + [int(lab)])


def write_trace_csv(trace: InterpolationTrace, path: str | Path) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step"] + [f"x{i}" for i in range(trace.generations.shape[1])])
        for i, row in enumerate(trace.generations):
            w.writerow([i] + [repr(float(v)) for v in row])


def trace_svg(trace: InterpolationTrace, centers: np.ndarray) -> str:
    title = f"{trace.kind} for {trace.which_generator.upper()} ({trace.steps} steps)"
    return svg.scatter_chart(
        [("mode centers", [tuple(c) for c in centers], "cross"),
         ("trace", [tuple(p) for p in trace.generations], "dot")],
        title=title,
        lines=[("path", [tuple(p) for p in trace.generations])],
    )


def write_json(obj, path: str | Path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def noise_spec_for(bundle: AgentBundle, which: str) -> NoiseSpec:
    return bundle.noise1 if which == "g1" else bundle.noise2
