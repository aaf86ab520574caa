"""Adversarial, auxiliary, cycle, identity and triplet losses and their totals.

All losses take torch tensors (numpy arrays are converted) and return 0-d
tensors, so they serve both the training loop and direct evaluation.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Optional

import torch

from .errors import EmptyScores, InvalidMargin, MissingTerm, ShapeMismatch


def _t(x) -> torch.Tensor:
    return x if isinstance(x, torch.Tensor) else torch.as_tensor(x, dtype=torch.float64)


def _nonempty(*scores):
    for s in scores:
        if s.numel() == 0:
            raise EmptyScores("score map is empty")


def lsgan_d_loss(real_scores, fake_scores) -> torch.Tensor:
    """Least-squares discriminator loss: real scores regress to 1, fake scores to 0."""
    real, fake = _t(real_scores), _t(fake_scores)
    _nonempty(real, fake)
    return 0.5 * (((real - 1) ** 2).mean() + (fake ** 2).mean())


def lsgan_g_loss(fake_scores) -> torch.Tensor:
    fake = _t(fake_scores)
    _nonempty(fake)
    return 0.5 * ((fake - 1) ** 2).mean()


def aux_d_loss(mixed_scores, fake_scores) -> torch.Tensor:
    """Auxiliary discriminator loss: mixed-set rolls count as real, transfers as fake."""
    return lsgan_d_loss(mixed_scores, fake_scores)


def _l1(x, y) -> torch.Tensor:
    x, y = _t(x), _t(y)
    if x.shape != y.shape:
        raise ShapeMismatch(f"shapes differ: {tuple(x.shape)} vs {tuple(y.shape)}")
    return (x - y).abs().mean()


def cycle_loss(x, x_cyc) -> torch.Tensor:
    """Mean absolute reconstruction error."""
    return _l1(x, x_cyc)


def identity_loss(x, g_of_x) -> torch.Tensor:
    return _l1(x, g_of_x)


def triplet_loss(anchor, positive, negative, margin: float = 1.0) -> torch.Tensor:
    """Hinge on squared Euclidean distances over flattened rolls.

    Inputs with three or more dimensions are batches along the first axis; the
    hinge is applied per sample and averaged.
    """
    if not margin > 0 or not math.isfinite(margin):
        raise InvalidMargin(f"margin must be positive and finite, got {margin}")
    a, p, n = _t(anchor), _t(positive), _t(negative)
    if not a.shape == p.shape == n.shape:
        raise ShapeMismatch(f"triplet shapes differ: {tuple(a.shape)}, {tuple(p.shape)}, {tuple(n.shape)}")
    if a.dim() >= 3:
        a, p, n = (t.reshape(t.shape[0], -1) for t in (a, p, n))
    else:
        a, p, n = (t.reshape(1, -1) for t in (a, p, n))
    d_pos = ((a - p) ** 2).sum(dim=1)
    d_neg = ((a - n) ** 2).sum(dim=1)
    return torch.clamp(d_pos - d_neg + margin, min=0).mean()


@dataclass(frozen=True)
class LossWeights:
    gamma: float = 1.0
    lambda_cycle: float = 10.0
    lambda_identity: float = 5.0
    triplet_margin: float = 1.0
    use_aux: bool = True
    use_triplet: bool = True

    def __post_init__(self):
        for name in ("gamma", "lambda_cycle", "lambda_identity", "triplet_margin"):
            value = getattr(self, name)
            if not math.isfinite(value) or value < 0:
                raise ValueError(f"{name} must be finite and >= 0, got {value}")
        if not self.triplet_margin > 0:
            raise InvalidMargin("triplet_margin must be positive")

    @property
    def aux_active(self) -> bool:
        """Auxiliary terms contribute only when enabled with a non-zero weight."""
        return self.use_aux and self.gamma > 0

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class LossRecord:
    """Per-term loss values of one step. Terms of disabled components are ``None``."""

    d_a: object = 0.0
    d_b: object = 0.0
    d_a_aux: Optional[object] = None
    d_b_aux: Optional[object] = None
    g_adv_a2b: object = 0.0
    g_adv_b2a: object = 0.0
    cycle_a: object = 0.0
    cycle_b: object = 0.0
    idt_a: object = 0.0
    idt_b: object = 0.0
    triplet_a: Optional[object] = None
    triplet_b: Optional[object] = None
    d_total: Optional[object] = None
    g_total: Optional[object] = None

    @classmethod
    def columns(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def as_floats(self) -> dict[str, float]:
        """Plain floats for logging; absent terms are written as 0."""
        out = {}
        for name in self.columns():
            v = getattr(self, name)
            out[name] = 0.0 if v is None else float(v.detach() if isinstance(v, torch.Tensor) else v)
        return out

    def detached(self) -> "LossRecord":
        out = {}
        for k in self.columns():
            v = getattr(self, k)
            out[k] = None if v is None else float(v.detach() if isinstance(v, torch.Tensor) else v)
        return LossRecord(**out)


def total_d_loss(record: LossRecord, weights: LossWeights):
    """``d_a + d_b + gamma * (d_a_aux + d_b_aux)``; the bracket is dropped without aux discriminators."""
    total = record.d_a + record.d_b
    if weights.aux_active:
        if record.d_a_aux is None or record.d_b_aux is None:
            raise MissingTerm("auxiliary discriminator terms are required when use_aux is set")
        total = total + weights.gamma * (record.d_a_aux + record.d_b_aux)
    return total


def total_g_loss(record: LossRecord, weights: LossWeights):
    total = (record.g_adv_a2b + record.g_adv_b2a
             + weights.lambda_cycle * (record.cycle_a + record.cycle_b)
             + weights.lambda_identity * (record.idt_a + record.idt_b))
    if weights.use_triplet:
        if record.triplet_a is None or record.triplet_b is None:
            raise MissingTerm("triplet terms are required when use_triplet is set")
        total = total + record.triplet_a + record.triplet_b
    return total
