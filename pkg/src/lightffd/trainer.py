"""Training loop, evaluation, multi-trial runs and the timing benchmark."""
from __future__ import annotations

import contextlib
import logging
import math
import time
from dataclasses import dataclass, field, replace
from typing import Callable, List, Optional, Sequence

import numpy as np
from threadpoolctl import threadpool_limits

from .data import DatasetManifest, ImageLoader, iter_batches
from .errors import DivergedTrainingError
from .metrics import (EpochRecord, EvalReport, aggregate_trials, argmax_predict,
                      make_report, positive_index)
from .models import FULL_INPUT_SIZE, Model, build_arch, init_params, model_backward, model_forward
from .optim import AdamState, Hyperparams, adam_step, cross_entropy_loss, softmax_ce_grad

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    model_version: str = "v1"
    hyper: Hyperparams = field(default_factory=Hyperparams)
    val_frequency: int = 3
    seed: int = 0
    trials: int = 3
    deterministic: bool = True
    input_size: int = FULL_INPUT_SIZE
    positive_class: str = "fake"
    workers: int = 1

    def __post_init__(self):
        if self.val_frequency < 1:
            raise ValueError(f"val_frequency must be >= 1, got {self.val_frequency}")
        if self.trials < 1:
            raise ValueError(f"trials must be >= 1, got {self.trials}")

    @property
    def epochs(self) -> int:
        return self.hyper.epochs


def _execution_context(deterministic: bool):
    # a single BLAS thread keeps every reduction in one fixed order
    return threadpool_limits(limits=1) if deterministic else contextlib.nullcontext()


def _loader_for(manifest: DatasetManifest, config: TrainConfig, loader: Optional[ImageLoader]):
    if loader is not None:
        return loader
    if manifest.root is None:
        raise ValueError("manifest has no dataset root; pass a loader")
    return ImageLoader(manifest.root, size=config.input_size, workers=config.workers)


def _accuracy(model: Model, manifest, split, loader, batch_size) -> float:
    correct = total = 0
    for batch in iter_batches(manifest, split, batch_size, loader):
        probs, _ = model_forward(model, batch.images, "infer")
        preds = np.argmax(probs, axis=1)
        correct += int(np.sum(preds == np.asarray(batch.labels)))
        total += len(batch.labels)
    return correct / total


def evaluate(model: Model, manifest: DatasetManifest, split: str = "test",
             loader: Optional[ImageLoader] = None, batch_size: int = 16,
             positive_class: Optional[int] = None) -> EvalReport:
    """Infer-mode pass over ``split``; mutates neither parameters nor BN statistics."""
    if not manifest.split(split):
        raise ValueError(f"split {split!r} is empty")
    if loader is None:
        loader = ImageLoader(manifest.root, size=model.spec.input_size)
    if positive_class is None:
        positive_class = positive_index(manifest.class_names)
    preds: List[int] = []
    labels: List[int] = []
    for batch in iter_batches(manifest, split, batch_size, loader):
        probs, _ = model_forward(model, batch.images, "infer")
        preds += argmax_predict(probs)
        labels += batch.labels
    return make_report(preds, labels, positive_class, split=split, arch_id=model.spec.arch_id)


def train_model(config: TrainConfig, manifest: DatasetManifest,
                loader: Optional[ImageLoader] = None,
                on_epoch: Optional[Callable[[EpochRecord], None]] = None):
    """Train one model from ``config.seed``; returns ``(model, validation report)``."""
    train_recs, val_recs = manifest.split("train"), manifest.split("val")
    if not train_recs or not val_recs:
        raise ValueError("manifest needs non-empty train and val splits")
    h = config.hyper
    loader = _loader_for(manifest, config, loader)
    loader.preload([r.path for r in train_recs + val_recs])
    spec = build_arch(config.model_version, config.input_size)

    with _execution_context(config.deterministic):
        model = init_params(spec, config.seed)
        state = AdamState.zeros_like(model.params)
        losses: List[float] = []
        history: List[EpochRecord] = []
        val_acc = float("nan")
        best_val = -1.0
        iteration = 0
        start = time.perf_counter()
        for epoch in range(h.epochs):
            epoch_losses = []
            correct = seen = 0
            for batch in iter_batches(manifest, "train", h.batch_size, loader, config.seed, epoch):
                probs, caches = model_forward(model, batch.images, "train")
                loss = cross_entropy_loss(probs, batch.labels)
                iteration += 1
                if not math.isfinite(loss):
                    raise DivergedTrainingError(iteration, loss)
                grads = model_backward(model, caches, softmax_ce_grad(probs, batch.labels))
                adam_step(model.params, grads, state, h)
                losses.append(loss)
                epoch_losses.append(loss)
                correct += int(np.sum(np.argmax(probs, axis=1) == np.asarray(batch.labels)))
                seen += len(batch.labels)
                if iteration % config.val_frequency == 0:
                    val_acc = _accuracy(model, manifest, "val", loader, h.batch_size)
                    best_val = max(best_val, val_acc)
            record = EpochRecord(
                epoch=epoch + 1,
                train_loss=float(np.mean(epoch_losses)),
                train_accuracy=correct / seen,
                val_accuracy=val_acc,
                wall_time_s=time.perf_counter() - start,
            )
            history.append(record)
            log.debug("epoch %d loss %.6f acc %.4f", record.epoch, record.train_loss,
                      record.train_accuracy)
            if on_epoch is not None:
                on_epoch(record)
        wall = time.perf_counter() - start

        report = evaluate(model, manifest, "val", loader, h.batch_size,
                          positive_index(manifest.class_names, config.positive_class))
    best_val = max(best_val, report.accuracy)
    report = replace(report, wall_time_s=wall, history=history, epochs=h.epochs,
                     seeds=[config.seed], losses=losses, best_val_accuracy=best_val)
    model.metadata = {"epochs": h.epochs, "seed": config.seed,
                      "class_names": list(manifest.class_names),
                      "val_accuracy": report.accuracy}
    return model, report


def optimizer_steps(n_train: int, batch_size: int, epochs: int) -> int:
    return epochs * math.ceil(n_train / batch_size)


def run_trials(config: TrainConfig, manifest: DatasetManifest,
               loader: Optional[ImageLoader] = None,
               on_trial: Optional[Callable[[int, Model, EvalReport], None]] = None,
               on_epoch: Optional[Callable[[int, EpochRecord], None]] = None) -> EvalReport:
    """Train ``config.trials`` models with seeds seed, seed+1, ... and average them.

    Each trial's report carries its test-split evaluation (when the manifest
    has a test split) in ``report.test``; the per-trial reports are kept in
    ``.trials`` of the returned aggregate.
    """
    loader = _loader_for(manifest, config, loader)
    has_test = bool(manifest.split("test"))
    reports = []
    for k in range(config.trials):
        cfg = replace(config, seed=config.seed + k)
        cb = (lambda rec, k=k: on_epoch(k, rec)) if on_epoch else None
        model, report = train_model(cfg, manifest, loader, on_epoch=cb)
        if has_test:
            with _execution_context(config.deterministic):
                report.test = evaluate(model, manifest, "test", loader, config.hyper.batch_size,
                                       positive_index(manifest.class_names, config.positive_class))
        reports.append(report)
        if on_trial is not None:
            on_trial(k, model, report)
    return aggregate_trials(reports)


def benchmark(config: TrainConfig, manifest: DatasetManifest,
              versions: Sequence[str] = ("v1", "v2"),
              epochs_list: Optional[Sequence[int]] = None,
              loader: Optional[ImageLoader] = None) -> List[tuple]:
    """Rows of (model, epochs, mean val acc, mean test acc, mean wall time s)."""
    loader = _loader_for(manifest, config, loader)
    rows = []
    for version in versions:
        for epochs in (epochs_list or [config.epochs]):
            cfg = replace(config, model_version=version, hyper=replace(config.hyper, epochs=epochs))
            agg = run_trials(cfg, manifest, loader)
            test_acc = agg.test.accuracy if agg.test is not None else float("nan")
            rows.append((agg.arch_id, epochs, agg.accuracy, test_acc, agg.wall_time_s))
    return rows
