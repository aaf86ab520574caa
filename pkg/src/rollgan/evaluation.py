"""Classifier-judged transfer accuracy and tabular reports."""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np
import torch
import torch.nn as nn

from .classify import N_FEATURES, Classifier, featurize
from .dataset import GenreLabel, LabeledSample
from .errors import EmptyTestSet, LayoutMismatch
from .nets import TransferModel, forward_generator
from .pianoroll_io import DEFAULT_THRESHOLD, binarize, check_roll


class TransferTask(str, enum.Enum):
    J2C = "j2c"
    C2J = "c2j"

    @property
    def source(self) -> GenreLabel:
        return GenreLabel.JAZZ if self is TransferTask.J2C else GenreLabel.CLASSIC

    @property
    def target(self) -> GenreLabel:
        return GenreLabel.CLASSIC if self is TransferTask.J2C else GenreLabel.JAZZ

    @property
    def direction(self) -> str:
        return "A2B" if self is TransferTask.J2C else "B2A"

    @property
    def title(self) -> str:
        return "J2C Acc (%)" if self is TransferTask.J2C else "C2J Acc (%)"


Generator = nn.Module | Callable[[np.ndarray], np.ndarray]


def _source_rolls(test_rolls, task: TransferTask) -> np.ndarray:
    if len(test_rolls) and isinstance(test_rolls[0], LabeledSample):
        wrong = [s.source_id for s in test_rolls if s.label is not task.source]
        if wrong:
            raise ValueError(f"{task.value} expects {task.source.value} inputs; got other labels for {wrong[:3]}")
        test_rolls = [s.roll for s in test_rolls]
    rolls = np.asarray(test_rolls)
    if len(rolls) == 0:
        raise EmptyTestSet("no rolls to transfer")
    return check_roll(rolls, batched=True)


def transfer_rolls(generator: Generator, rolls, threshold: float = DEFAULT_THRESHOLD,
                   batch_size: int = 64) -> np.ndarray:
    """Apply a generator to ``N x 64 x 84`` rolls and binarize the result."""
    rolls = np.asarray(rolls, dtype=np.float32)
    outs = []
    for start in range(0, len(rolls), batch_size):
        chunk = rolls[start:start + batch_size]
        if isinstance(generator, nn.Module):
            with torch.no_grad():
                out = forward_generator(generator, chunk).numpy()
        else:
            out = np.asarray(generator(chunk))
        outs.append(binarize(out, threshold))
    return np.concatenate(outs) if outs else np.zeros((0, 64, 84), dtype=np.uint8)


def judge(classifier: Classifier, rolls) -> list[GenreLabel]:
    if classifier.n_features is not None and classifier.n_features != N_FEATURES:
        raise LayoutMismatch(f"classifier expects {classifier.n_features} features, rolls give {N_FEATURES}")
    return classifier.predict(featurize(rolls))


def transfer_accuracy(generator: Generator, classifier: Classifier, test_rolls,
                      task: TransferTask, threshold: float = DEFAULT_THRESHOLD) -> float:
    """Percentage of transferred source-genre rolls the classifier assigns to the target genre."""
    task = TransferTask(task)
    rolls = _source_rolls(test_rolls, task)
    verdicts = judge(classifier, transfer_rolls(generator, rolls, threshold))
    return 100.0 * sum(v is task.target for v in verdicts) / len(verdicts)


@dataclass(frozen=True)
class EvalRow:
    variant: str
    task: TransferTask
    accuracy: float
    n: int


@dataclass
class EvalReport:
    judge: str
    rows: list[EvalRow] = field(default_factory=list)

    @property
    def variants(self) -> list[str]:
        return list(dict.fromkeys(r.variant for r in self.rows))

    @property
    def tasks(self) -> list[TransferTask]:
        return [t for t in TransferTask if any(r.task is t for r in self.rows)]

    def accuracy(self, variant: str, task: TransferTask) -> float:
        for r in self.rows:
            if r.variant == variant and r.task is TransferTask(task):
                return r.accuracy
        raise KeyError((variant, task))

    def render(self) -> str:
        tasks = self.tasks
        header = ["Model"] + [t.title for t in tasks]
        body = []
        for v in self.variants:
            cells = [v]
            for t in tasks:
                try:
                    cells.append(f"{self.accuracy(v, t):.1f}")
                except KeyError:
                    cells.append("-")
            body.append(cells)
        widths = [max(len(row[i]) for row in [header] + body) for i in range(len(header))]
        fmt = lambda row: "  ".join(c.ljust(w) if i == 0 else c.rjust(w)
                                    for i, (c, w) in enumerate(zip(row, widths)))
        rule = "-" * len(fmt(header))
        return "\n".join([f"judge: {self.judge}", rule, fmt(header), rule]
                         + [fmt(r) for r in body] + [rule])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["variant", "task", "accuracy", "n", "judge"])
            for r in self.rows:
                w.writerow([r.variant, r.task.value, repr(r.accuracy), r.n, self.judge])


def build_report(models: Mapping[str, TransferModel], classifier: Classifier,
                 test_sets: Mapping[TransferTask, Sequence], threshold: float = DEFAULT_THRESHOLD,
                 judge_id: str | None = None) -> EvalReport:
    """Evaluate every model on every task with a test set, in insertion order."""
    report = EvalReport(judge_id or getattr(classifier, "kind", type(classifier).__name__))
    for name, model in models.items():
        for task, rolls in test_sets.items():
            task = TransferTask(task)
            gen = model.generator_for(task.direction) if isinstance(model, TransferModel) else model
            acc = transfer_accuracy(gen, classifier, rolls, task, threshold)
            report.rows.append(EvalRow(name, task, acc, len(rolls)))
    return report
