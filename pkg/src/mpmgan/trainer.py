"""Two generators, one discriminator and the shared message networks.

One iteration runs: sample noise, generate with the buffered messages,
update D, update G1, update G2, then produce the messages the generators
will consume on the next iteration.

Messages crossing the iteration boundary are stored detached. When message
training is on, each generator update re-produces its incoming message on
the live tape from the stored previous-iteration generation, so the message
networks learn from how their messages change the receiver's loss.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import tensor as T
from .config import ConfigError, TrainConfig, dump_config
from .data import (NoiseSpec, Rng, SyntheticDataset, derive_seed, make_labeled_blobs, make_ring_mixture, sample_noise,
                   write_dataset_csv)
from .nn import AdamState, Mlp, NumericalError, adam_step, init_mlp
from .runfiles import write_manifest
from .objectives import ScoreBatch, discriminator_loss, generator_loss, hinge_value
from .tensor import DomainError, Tensor

log = logging.getLogger(__name__)

METRIC_COLUMNS = ("loss_d", "loss_g1", "loss_g2", "mean_d_real", "mean_d_g1", "mean_d_g2", "hinge_g1", "hinge_g2")
METRICS_HEADER = ("iter",) + METRIC_COLUMNS


class CausalityError(RuntimeError):
    pass


class NumericAbort(RuntimeError):
    def __init__(self, message: str, checkpoint: Path | None = None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass
class AgentBundle:
    config: TrainConfig
    g1: Mlp
    g2: Mlp
    d: Mlp
    msg_gen: Mlp
    encoder: Mlp
    msg_gen2: Mlp | None = None
    encoder2: Mlp | None = None
    optimizers: dict[str, AdamState] = field(default_factory=dict)
    step: int = 0

    @property
    def objective(self):
        return self.config.objective

    @property
    def message_mode(self) -> str:
        return self.config.message_mode

    @property
    def noise1(self) -> NoiseSpec:
        return self.config.noise_spec1

    @property
    def noise2(self) -> NoiseSpec:
        return self.config.noise_spec2

    @property
    def msg_dim(self) -> int:
        return self.config.msg_dim

    def networks(self) -> dict[str, Mlp]:
        nets = {"g1": self.g1, "g2": self.g2, "d": self.d, "msg_gen": self.msg_gen, "encoder": self.encoder}
        if self.msg_gen2 is not None:
            nets["msg_gen2"] = self.msg_gen2
            nets["encoder2"] = self.encoder2
        return nets

    def message_nets(self, producer: int) -> tuple[Mlp, Mlp]:
        """(message generator, encoder) applied to generator ``producer``'s output."""
        if producer == 2 and self.msg_gen2 is not None:
            return self.msg_gen2, self.encoder2
        return self.msg_gen, self.encoder

    def zero_grad(self) -> None:
        for net in self.networks().values():
            net.zero_grad()


def build_bundle(config: TrainConfig) -> AgentBundle:
    h, nd, md, dd = config.hidden, config.noise_dim, config.msg_dim, config.data_dim
    g_in = nd + (md if config.message_mode != "none" else 0)

    def net(name, dims, acts):
        return init_mlp(dims, acts, derive_seed(config.seed, name), name=name)

    gen_acts = ["leaky_relu", "leaky_relu", "identity"]
    nets = {
        "g1": net("g1", [g_in, h, h, dd], gen_acts),
        "g2": net("g2", [g_in, h, h, dd], gen_acts),
        "d": net("d", [dd, h, h, 1], ["leaky_relu", "leaky_relu", "sigmoid"]),
        "msg_gen": net("msg_gen", [dd, h, md], ["leaky_relu", "tanh"]),
        "encoder": net("encoder", [md + nd + md, h, md], ["leaky_relu", "tanh"]),
    }
    if not config.shared_msg_gen:
        nets["msg_gen2"] = net("msg_gen2", [dd, h, md], ["leaky_relu", "tanh"])
        nets["encoder2"] = net("encoder2", [md + nd + md, h, md], ["leaky_relu", "tanh"])
    hyper = dict(learning_rate=config.lr, beta1=config.beta1, beta2=config.beta2, epsilon=config.eps)
    optimizers = {name: AdamState.for_params(m.parameters(), **hyper) for name, m in nets.items()}
    return AgentBundle(config=config, optimizers=optimizers, **nets)


@dataclass
class MessageSource:
    """Detached inputs that produced a buffered pair of messages."""

    gen1: np.ndarray
    gen2: np.ndarray
    z1: np.ndarray
    z2: np.ndarray
    m1: np.ndarray
    m2: np.ndarray


@dataclass
class MessageBuffer:
    """``m1`` is produced from G1's output and consumed by G2; ``m2`` the reverse."""

    m1: Tensor
    m2: Tensor
    produced_at: int = -1
    source: MessageSource | None = None


def init_buffer(bundle: AgentBundle, batch: int, rng: Rng) -> MessageBuffer:
    # Each message starts out distributed like its receiver's noise.
    m1 = sample_noise(NoiseSpec(bundle.noise2.kind, bundle.msg_dim), batch, rng)
    m2 = sample_noise(NoiseSpec(bundle.noise1.kind, bundle.msg_dim), batch, rng)
    return MessageBuffer(m1, m2, produced_at=-1)


def compose_generator_input(z: Tensor, incoming_msg: Tensor | None, mode: str) -> Tensor:
    if mode == "none":
        return z
    if incoming_msg is None:
        raise ValueError(f"message mode {mode!r} needs an incoming message")
    if incoming_msg.values.ndim != 2 or incoming_msg.shape[0] != z.shape[0]:
        raise T.ShapeError(f"noise {z.shape} and message {incoming_msg.shape} do not pair up by batch row")
    return T.concat_last_axis([z, incoming_msg])


def produce_message(bundle: AgentBundle, producer: int, gen_out: Tensor, z: Tensor, m_in: Tensor) -> Tensor:
    """Message built from generator ``producer``'s output (and, conditioned, its inputs)."""
    mode = bundle.message_mode
    if mode == "none":
        raise ValueError("no messages are produced with message_mode 'none'")
    msg_net, enc = bundle.message_nets(producer)
    raw = msg_net(gen_out)
    if mode == "message_passing":
        return raw
    return enc(T.concat_last_axis([raw, z, m_in]))


def produce_messages(bundle: AgentBundle, gen1_out: Tensor, gen2_out: Tensor, z1: Tensor, z2: Tensor,
                     m1: Tensor, m2: Tensor) -> tuple[Tensor, Tensor]:
    """Next (m1, m2), detached. G2 consumed ``m1`` and G1 consumed ``m2`` this iteration."""
    with T.no_grad():
        m1_next = produce_message(bundle, 1, gen1_out, z1, m2)
        m2_next = produce_message(bundle, 2, gen2_out, z2, m1)
    return m1_next.detach(), m2_next.detach()


@dataclass
class StepMetrics:
    iteration: int
    loss_d: float
    loss_g1: float
    loss_g2: float
    mean_d_real: float
    mean_d_g1: float
    mean_d_g2: float
    hinge_g1: float
    hinge_g2: float
    consumed_tag: int = -1

    def row(self) -> list[str]:
        return [str(self.iteration)] + [f"{getattr(self, c):.6g}" for c in METRIC_COLUMNS]


Observer = Callable[[str, AgentBundle], None]


def _message_nets_in_play(bundle: AgentBundle, producer: int) -> list[str]:
    names = ["msg_gen2" if producer == 2 and bundle.msg_gen2 is not None else "msg_gen"]
    if bundle.message_mode == "conditioned_message_passing":
        names.append("encoder2" if producer == 2 and bundle.encoder2 is not None else "encoder")
    return names


def _live_incoming(bundle: AgentBundle, buffer: MessageBuffer, receiver: int) -> tuple[Tensor | None, bool]:
    if bundle.message_mode == "none":
        return None, False
    stored = buffer.m2 if receiver == 1 else buffer.m1
    src = buffer.source
    if bundle.config.detach_messages or src is None:
        return stored, False
    # Re-produce the incoming message on the tape from last iteration's detached inputs.
    if receiver == 1:
        m = produce_message(bundle, 2, Tensor(src.gen2), Tensor(src.z2), Tensor(src.m1))
    else:
        m = produce_message(bundle, 1, Tensor(src.gen1), Tensor(src.z1), Tensor(src.m2))
    return m, True


def _check_finite(value: float, what: str) -> None:
    if not math.isfinite(value):
        raise NumericalError(f"{what} is not finite ({value})")


def _generator_update(bundle: AgentBundle, buffer: MessageBuffer, receiver: int, z: Tensor,
                      other_gen: Tensor | None) -> tuple[float, float]:
    cfg = bundle.config
    gen = bundle.g1 if receiver == 1 else bundle.g2
    incoming, live = _live_incoming(bundle, buffer, receiver)
    out = gen(compose_generator_input(z, incoming, bundle.message_mode))
    own = bundle.d(out)
    other = None
    if other_gen is not None:
        with T.no_grad():
            other = bundle.d(other_gen)
    loss = generator_loss(own, other, cfg.generator_mode, non_saturating=cfg.non_saturating)
    value = loss.item()
    _check_finite(value, f"loss_g{receiver}")
    bundle.zero_grad()
    T.backward(loss)
    name = f"g{receiver}"
    adam_step(gen.parameters(), bundle.optimizers[name])
    if live:
        nets = bundle.networks()
        for msg_name in _message_nets_in_play(bundle, 3 - receiver):
            adam_step(nets[msg_name].parameters(), bundle.optimizers[msg_name])
    bundle.zero_grad()
    hinge = hinge_value(own, other) if other is not None else math.nan
    return value, hinge


def train_step(bundle: AgentBundle, buffer: MessageBuffer, data_batch: Tensor, rng: Rng,
               observer: Observer | None = None) -> tuple[StepMetrics, MessageBuffer]:
    cfg = bundle.config
    mode = bundle.message_mode
    single = cfg.single_generator
    if data_batch.values.ndim != 2 or data_batch.shape[1] != cfg.data_dim:
        raise T.ShapeError(f"data batch must be [batch x {cfg.data_dim}], got {data_batch.shape}")
    t = bundle.step
    if mode != "none" and buffer.produced_at != t - 1:
        raise CausalityError(f"iteration {t} consumed messages produced at {buffer.produced_at}")
    notify = observer or (lambda event, b: None)
    batch = data_batch.shape[0]

    z1 = sample_noise(bundle.noise1, batch, rng)
    z2 = None if single else sample_noise(bundle.noise2, batch, rng)
    with T.no_grad():
        gen1 = bundle.g1(compose_generator_input(z1, buffer.m2, mode)).detach()
        gen2 = None if single else bundle.g2(compose_generator_input(z2, buffer.m1, mode)).detach()

    notify("before_d", bundle)
    scores = ScoreBatch(bundle.d(data_batch), bundle.d(gen1), None if single else bundle.d(gen2))
    loss_d = discriminator_loss(scores)
    loss_d_value = loss_d.item()
    _check_finite(loss_d_value, "loss_d")
    bundle.zero_grad()
    T.backward(loss_d)
    adam_step(bundle.d.parameters(), bundle.optimizers["d"])
    bundle.zero_grad()
    notify("after_d", bundle)

    notify("before_g1", bundle)
    loss_g1, hinge_g1 = _generator_update(bundle, buffer, 1, z1, gen2)
    notify("after_g1", bundle)
    loss_g2 = hinge_g2 = math.nan
    if not single:
        notify("before_g2", bundle)
        loss_g2, hinge_g2 = _generator_update(bundle, buffer, 2, z2, gen1)
        notify("after_g2", bundle)

    new_buffer = buffer
    if mode != "none":
        m1_next, m2_next = produce_messages(bundle, gen1, gen2, z1, z2, buffer.m1, buffer.m2)
        source = MessageSource(gen1.values, gen2.values, z1.values, z2.values, buffer.m1.values, buffer.m2.values)
        new_buffer = MessageBuffer(m1_next, m2_next, produced_at=t, source=source)

    metrics = StepMetrics(
        iteration=t + 1,
        loss_d=loss_d_value,
        loss_g1=loss_g1,
        loss_g2=loss_g2,
        mean_d_real=float(scores.d_real.values.mean()),
        mean_d_g1=float(scores.d_g1.values.mean()),
        mean_d_g2=math.nan if single else float(scores.d_g2.values.mean()),
        hinge_g1=hinge_g1,
        hinge_g2=hinge_g2,
        consumed_tag=buffer.produced_at,
    )
    bundle.step = t + 1
    return metrics, new_buffer


@dataclass
class TrainingState:
    bundle: AgentBundle
    buffer: MessageBuffer
    rng: Rng

    @property
    def iteration(self) -> int:
        return self.bundle.step


def initial_state(config: TrainConfig) -> TrainingState:
    bundle = build_bundle(config)
    rng = Rng(derive_seed(config.seed, "train"))
    buffer = init_buffer(bundle, config.batch, rng)
    return TrainingState(bundle, buffer, rng)


def make_dataset(config: TrainConfig, tag: str = "data") -> SyntheticDataset:
    spec = config.dataset
    rng = Rng(derive_seed(config.seed, tag))
    if spec.kind == "ring_mixture":
        return make_ring_mixture(spec.k, spec.radius, spec.sigma, spec.n, rng)
    return make_labeled_blobs(spec.k, spec.sigma, spec.n, rng, centers=spec.centers, spread=spec.spread)


@dataclass
class RunArtifacts:
    run_dir: Path
    metrics_path: Path
    checkpoints: list[Path]
    final_checkpoint: Path
    last_metrics: StepMetrics | None = None


def checkpoint_path(run_dir: Path, iteration: int) -> Path:
    return run_dir / "checkpoints" / f"ckpt_{iteration:06d}.ckpt"


def _prepare_metrics(path: Path, keep_through: int) -> None:
    rows = []
    if keep_through > 0 and path.exists():
        with path.open(newline="") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header == list(METRICS_HEADER):
                rows = [r for r in reader if r and int(r[0]) <= keep_through]
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(METRICS_HEADER)
        w.writerows(rows)


def train(config: TrainConfig, dataset: SyntheticDataset | None = None, run_dir: str | Path | None = None,
          resume: str | Path | None = None, observer: Observer | None = None) -> RunArtifacts:
    """Run ``config.n_iters`` iterations, writing metrics, checkpoints and a manifest into the run directory."""
    from .checkpoint import load_checkpoint, save_checkpoint

    run_dir = Path(run_dir if run_dir is not None else config.out_dir)
    (run_dir / "checkpoints").mkdir(parents=True, exist_ok=True)
    dataset = dataset if dataset is not None else make_dataset(config)
    if dataset.n < 1:
        raise ValueError("dataset is empty")

    if resume is not None:
        state = load_checkpoint(resume)
        _check_resumable(state.bundle.config, config)
        state.bundle.config = config
    else:
        state = initial_state(config)

    (run_dir / "config.json").write_text(dump_config(config), encoding="utf-8")
    write_dataset_csv(dataset, run_dir / "dataset.csv")
    metrics_path = run_dir / "metrics.csv"
    start = state.iteration
    _prepare_metrics(metrics_path, start)

    checkpoints = []
    first = checkpoint_path(run_dir, start)
    save_checkpoint(first, state)
    checkpoints.append(first)

    samples = dataset.samples.values
    last = None
    with metrics_path.open("a", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        while state.iteration < config.n_iters:
            idx = state.rng.integers(dataset.n, config.batch)
            try:
                last, state.buffer = train_step(state.bundle, state.buffer, Tensor(samples[idx]), state.rng, observer)
            except (NumericalError, DomainError) as exc:
                fh.flush()
                diag = run_dir / "checkpoints" / "diagnostic.ckpt"
                save_checkpoint(diag, state)
                raise NumericAbort(f"iteration {state.iteration + 1}: {exc}", diag) from exc
            writer.writerow(last.row())
            it = state.iteration
            if it % config.checkpoint_every == 0 or it == config.n_iters:
                path = checkpoint_path(run_dir, it)
                save_checkpoint(path, state)
                checkpoints.append(path)
    write_manifest(run_dir)
    log.info("run finished at iteration %d in %s", state.iteration, run_dir)
    return RunArtifacts(run_dir, metrics_path, checkpoints, checkpoints[-1], last)


_RESUME_FREE_KEYS = {"n_iters", "out_dir", "checkpoint_every"}


def _check_resumable(saved: TrainConfig, requested: TrainConfig) -> None:
    a, b = saved.to_dict(), requested.to_dict()
    diff = sorted(k for k in a if k not in _RESUME_FREE_KEYS and a[k] != b[k])
    if diff:
        raise ConfigError(f"checkpoint config differs in {diff}; cannot resume")
