"""Alternating optimization of the transfer model.

One numpy ``Generator`` drives every random choice after initialization
(batch shuffling, fake-pool decisions, mixed-set and triplet draws), in a fixed
order per step. Samplers for disabled components draw nothing, so a run
without auxiliary discriminators or triplet loss consumes exactly the random
stream of the plain baseline.
"""

from __future__ import annotations

import csv
import dataclasses
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from . import container
from .dataset import DomainSplit, sample_domain, sample_mixed, stack
from .errors import CorruptCheckpoint, EmptyBatch, EmptyDomain, NonFiniteLoss
from .losses import (
    LossRecord,
    LossWeights,
    aux_d_loss,
    cycle_loss,
    identity_loss,
    lsgan_d_loss,
    lsgan_g_loss,
    total_d_loss,
    total_g_loss,
    triplet_loss,
)
from .nets import DiscriminatorConfig, GeneratorConfig, ModelConfig, TransferModel

logger = logging.getLogger(__name__)

CHECKPOINT_KIND = "transfer"
LOG_COLUMNS = ["step"] + LossRecord.columns()


@dataclass(frozen=True)
class TrainConfig:
    weights: LossWeights = LossWeights()
    model: ModelConfig = ModelConfig()
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    batch_size: int = 16
    steps: int = 1000
    seed: int = 0
    checkpoint_every: int = 0  # 0 keeps only the final checkpoint
    fake_pool_size: int = 50  # 0 disables the history buffer

    def __post_init__(self):
        if not self.lr > 0:
            raise ValueError("lr must be positive")
        if self.batch_size < 1 or self.steps < 1:
            raise ValueError("batch_size and steps must be >= 1")
        if self.checkpoint_every < 0 or self.fake_pool_size < 0:
            raise ValueError("checkpoint_every and fake_pool_size must be >= 0")
        if self.model.use_aux != self.weights.use_aux:
            object.__setattr__(self, "model", dataclasses.replace(self.model, use_aux=self.weights.use_aux))

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["model"] = self.model.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["weights"] = LossWeights(**d["weights"])
        d["model"] = ModelConfig.from_dict(d["model"])
        return cls(**d)


class FakePool:
    """History buffer of generated rolls shown to the discriminators.

    Until full, every new roll is stored and passed through. Afterwards each
    new roll is, with probability 1/2, swapped with a random stored roll
    (which is returned instead); otherwise it passes through.
    """

    def __init__(self, size: int):
        self.size = size
        self.items: list[torch.Tensor] = []

    def query(self, batch: torch.Tensor, rng: np.random.Generator) -> torch.Tensor:
        if self.size == 0:
            return batch.detach()
        out = []
        for roll in batch:
            roll = roll.detach().clone()
            if len(self.items) < self.size:
                self.items.append(roll)
                out.append(roll)
            elif rng.random() > 0.5:
                i = int(rng.integers(0, self.size))
                out.append(self.items[i])
                self.items[i] = roll
            else:
                out.append(roll)
        return torch.stack(out)

    def to_array(self) -> np.ndarray:
        if not self.items:
            return np.zeros((0, 1, 64, 84), dtype=np.float32)
        return torch.stack(self.items).numpy()

    def load_array(self, arr: np.ndarray) -> None:
        self.items = [torch.from_numpy(a.copy()) for a in arr]


class EpochStream:
    """Batches of indices drawn without replacement, reshuffled at every epoch boundary."""

    def __init__(self, n: int, batch_size: int):
        if n == 0:
            raise EmptyDomain("training set is empty")
        self.n, self.batch_size = n, batch_size
        self.order = np.zeros(0, dtype=np.int64)
        self.pos = 0

    def next(self, rng: np.random.Generator) -> np.ndarray:
        out = []
        need = self.batch_size
        while need:
            if self.pos >= len(self.order):
                self.order = rng.permutation(self.n)
                self.pos = 0
            take = self.order[self.pos:self.pos + need]
            out.append(take)
            self.pos += len(take)
            need -= len(take)
        return np.concatenate(out)


def _as_tensor(rolls: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(rolls, dtype=np.float32))[:, None]


class Trainer:
    """Owns the model, optimizers, random stream and sampler state of one training run."""

    def __init__(self, config: TrainConfig, split: DomainSplit, model: TransferModel | None = None):
        self.config = config
        self.split = split
        self.model = model if model is not None else TransferModel(config.model, seed=config.seed)
        betas = (config.beta1, config.beta2)
        self.opt_g = torch.optim.Adam([p for g in self.model.generators() for p in g.parameters()],
                                      lr=config.lr, betas=betas)
        self.opt_d = torch.optim.Adam([p for d in self.model.discriminators() for p in d.parameters()],
                                      lr=config.lr, betas=betas)
        self.rng = np.random.default_rng([config.seed, 1])
        self.pool_a = FakePool(config.fake_pool_size)
        self.pool_b = FakePool(config.fake_pool_size)
        self.train_a = _as_tensor(stack(split.train_a))
        self.train_b = _as_tensor(stack(split.train_b))
        self.stream_a = EpochStream(len(self.train_a), config.batch_size)
        self.stream_b = EpochStream(len(self.train_b), config.batch_size)
        self.step = 0
        self.loss_sums = {k: 0.0 for k in LossRecord.columns()}

    @property
    def weights(self) -> LossWeights:
        return self.config.weights

    def next_batches(self) -> tuple[torch.Tensor, torch.Tensor]:
        return self.train_a[self.stream_a.next(self.rng)], self.train_b[self.stream_b.next(self.rng)]

    def _draw(self, sampler, *args) -> torch.Tensor:
        return _as_tensor(stack(sampler(self.split, *args, self.rng)))

    def train_step(self, x_a: torch.Tensor, x_b: torch.Tensor) -> LossRecord:
        """One discriminator update followed by one generator update."""
        if len(x_a) == 0 or len(x_b) == 0:
            raise EmptyBatch("both domain batches must be non-empty")
        m, w, rng = self.model, self.weights, self.rng
        n = len(x_a)

        fake_b = m.g_a2b(x_a)
        fake_a = m.g_b2a(x_b)
        rec_a = m.g_b2a(fake_b)
        rec_b = m.g_a2b(fake_a)

        pooled_a = self.pool_a.query(fake_a, rng)
        pooled_b = self.pool_b.query(fake_b, rng)
        terms = LossRecord()
        terms.d_a = lsgan_d_loss(m.d_a(x_a), m.d_a(pooled_a))
        terms.d_b = lsgan_d_loss(m.d_b(x_b), m.d_b(pooled_b))
        if w.aux_active:
            x_m_a = self._draw(sample_mixed, n)
            x_m_b = self._draw(sample_mixed, n)
            terms.d_a_aux = aux_d_loss(m.d_a_aux(x_m_a), m.d_a_aux(pooled_b))
            terms.d_b_aux = aux_d_loss(m.d_b_aux(x_m_b), m.d_b_aux(pooled_a))
        d_total = total_d_loss(terms, w)
        self._check_finite(d_total, terms, "discriminator")
        self.opt_d.zero_grad(set_to_none=True)
        d_total.backward()
        self.opt_d.step()

        for d in m.discriminators():
            d.requires_grad_(False)
        try:
            terms.g_adv_a2b = lsgan_g_loss(m.d_b(fake_b))
            terms.g_adv_b2a = lsgan_g_loss(m.d_a(fake_a))
            terms.cycle_a = cycle_loss(x_a, rec_a)
            terms.cycle_b = cycle_loss(x_b, rec_b)
            if w.lambda_identity > 0:
                terms.idt_a = identity_loss(x_a, m.g_b2a(x_a))
                terms.idt_b = identity_loss(x_b, m.g_a2b(x_b))
            if w.use_triplet:
                x_a_r = self._draw(sample_domain, "A", n)
                x_b_r = self._draw(sample_domain, "B", n)
                terms.triplet_a = triplet_loss(fake_b, x_b_r, x_a_r, w.triplet_margin)
                terms.triplet_b = triplet_loss(fake_a, x_a_r, x_b_r, w.triplet_margin)
            g_total = total_g_loss(terms, w)
            self._check_finite(g_total, terms, "generator")
            self.opt_g.zero_grad(set_to_none=True)
            g_total.backward()
            self.opt_g.step()
        finally:
            for d in m.discriminators():
                d.requires_grad_(True)

        self.step += 1
        record = terms.detached()
        # totals are recomposed in float64 from the logged terms
        record.d_total = total_d_loss(record, w)
        record.g_total = total_g_loss(record, w)
        for k, v in record.as_floats().items():
            self.loss_sums[k] += v
        return record

    def _check_finite(self, total, terms: LossRecord, which: str):
        if not torch.isfinite(total):
            bad = {k: v for k, v in terms.as_floats().items() if not math.isfinite(v)}
            raise NonFiniteLoss(f"{which} loss is {float(total.detach())} at step {self.step + 1}; "
                                f"non-finite terms: {bad or 'none individually'}")

    # checkpointing

    def state(self) -> tuple[dict, dict[str, np.ndarray]]:
        arrays = {f"model/{k}": v.detach().numpy() for k, v in self.model.state_dict().items()}
        for name, opt in (("opt_g", self.opt_g), ("opt_d", self.opt_d)):
            for idx, st in opt.state_dict()["state"].items():
                for key, value in st.items():
                    arrays[f"{name}/{idx}/{key}"] = value.detach().numpy()
        arrays["pool_a"] = self.pool_a.to_array()
        arrays["pool_b"] = self.pool_b.to_array()
        arrays["stream_a"] = self.stream_a.order
        arrays["stream_b"] = self.stream_b.order
        meta = {
            "config": self.config.to_dict(),
            "step": self.step,
            "rng": self.rng.bit_generator.state,
            "stream_pos": [self.stream_a.pos, self.stream_b.pos],
            "loss_sums": self.loss_sums,
        }
        return meta, arrays

    def save(self, path) -> None:
        meta, arrays = self.state()
        container.save(path, CHECKPOINT_KIND, meta, arrays)

    @classmethod
    def from_checkpoint(cls, path, split: DomainSplit, steps: int | None = None) -> "Trainer":
        meta, arrays = container.load(path, kind=CHECKPOINT_KIND)
        config = TrainConfig.from_dict(meta["config"])
        if steps is not None:
            config = dataclasses.replace(config, steps=steps)
        model = _model_from(meta, arrays, config.model)
        trainer = cls(config, split, model)
        for name, opt in (("opt_g", trainer.opt_g), ("opt_d", trainer.opt_d)):
            state: dict[int, dict] = {}
            for key, value in arrays.items():
                parts = key.split("/")
                if parts[0] == name:
                    state.setdefault(int(parts[1]), {})[parts[2]] = torch.from_numpy(value)
            opt.load_state_dict({"state": state, "param_groups": opt.state_dict()["param_groups"]})
        trainer.pool_a.load_array(arrays["pool_a"])
        trainer.pool_b.load_array(arrays["pool_b"])
        trainer.stream_a.order, trainer.stream_b.order = arrays["stream_a"], arrays["stream_b"]
        trainer.stream_a.pos, trainer.stream_b.pos = meta["stream_pos"]
        trainer.rng.bit_generator.state = meta["rng"]
        trainer.step = meta["step"]
        trainer.loss_sums = dict(meta["loss_sums"])
        return trainer


def _model_from(meta: dict, arrays: dict, model_config: ModelConfig) -> TransferModel:
    model = TransferModel(model_config, seed=meta["config"]["seed"])
    expected = model.state_dict()
    loaded = {k[len("model/"):]: torch.from_numpy(v) for k, v in arrays.items() if k.startswith("model/")}
    if set(loaded) != set(expected):
        raise CorruptCheckpoint("checkpoint parameters do not match the model architecture")
    for k, v in loaded.items():
        if v.shape != expected[k].shape:
            raise CorruptCheckpoint(f"parameter {k!r} has shape {tuple(v.shape)}, expected "
                                    f"{tuple(expected[k].shape)}")
    model.load_state_dict(loaded)
    return model


def save_checkpoint(trainer: Trainer, path) -> None:
    trainer.save(path)


def load_checkpoint(path) -> tuple[TransferModel, dict]:
    """Model plus checkpoint metadata (config, step, random state, running loss sums)."""
    meta, arrays = container.load(path, kind=CHECKPOINT_KIND)
    try:
        config = TrainConfig.from_dict(meta["config"])
    except (KeyError, TypeError, ValueError) as exc:
        raise CorruptCheckpoint(f"unreadable training config in {path}") from exc
    model = _model_from(meta, arrays, config.model)
    model.eval()
    return model, meta


def _fmt(v: float) -> str:
    return repr(float(v))


def read_log(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


@dataclass
class TrainResult:
    trainer: Trainer
    records: list[LossRecord] = field(default_factory=list)
    final_checkpoint: Path | None = None


def train(config: TrainConfig, split: DomainSplit, out_dir=None, resume=None,
          log_every: int = 50) -> TrainResult:
    """Run ``config.steps`` training steps (continuing from ``resume`` if given).

    With ``out_dir`` set, writes ``log.csv`` (one row per step), periodic
    ``checkpoint_XXXXXX.ckpt`` files and ``final.ckpt``.
    """
    if resume is not None:
        trainer = Trainer.from_checkpoint(resume, split, steps=config.steps)
    else:
        trainer = Trainer(config, split)
    cfg = trainer.config
    result = TrainResult(trainer)

    writer = fh = None
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        log_path = out / "log.csv"
        kept = []
        if resume is not None and log_path.exists():
            kept = [r for r in read_log(log_path) if int(r["step"]) <= trainer.step]
        fh = open(log_path, "w", newline="")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(LOG_COLUMNS)
        for r in kept:
            writer.writerow([r[c] for c in LOG_COLUMNS])
    try:
        while trainer.step < cfg.steps:
            x_a, x_b = trainer.next_batches()
            record = trainer.train_step(x_a, x_b)
            result.records.append(record)
            if writer is not None:
                vals = record.as_floats()
                writer.writerow([trainer.step] + [_fmt(vals[c]) for c in LossRecord.columns()])
            if log_every and trainer.step % log_every == 0:
                logger.info("step %d: d_total=%.4f g_total=%.4f cycle=%.4f", trainer.step,
                            record.d_total, record.g_total, record.cycle_a + record.cycle_b)
            if (out_dir is not None and cfg.checkpoint_every
                    and trainer.step % cfg.checkpoint_every == 0 and trainer.step < cfg.steps):
                fh.flush()
                trainer.save(Path(out_dir) / f"checkpoint_{trainer.step:06d}.ckpt")
    finally:
        if fh is not None:
            fh.close()
    if out_dir is not None:
        result.final_checkpoint = Path(out_dir) / "final.ckpt"
        trainer.save(result.final_checkpoint)
    return result


def toy_config(steps: int = 1000, seed: int = 0, **weights) -> TrainConfig:
    """Reduced desk-scale setup: 16 base channels, 2 residual blocks, batch 8."""
    return TrainConfig(
        weights=LossWeights(**weights),
        model=ModelConfig(GeneratorConfig("resnet9", base_channels=16, n_blocks=2),
                          DiscriminatorConfig(base_channels=16)),
        batch_size=8, steps=steps, seed=seed)
