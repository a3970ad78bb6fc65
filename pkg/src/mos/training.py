"""Offline training with continuous sampling, online fine-tuning, and evaluation."""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from mos import classical, features
from mos.errors import ConfigurationError, ContractError, DataError, DivergenceError
from mos.network import (
    MlpParams,
    NetMeta,
    adam_init,
    adam_step,
    backward,
    check_compatible,
    default_layer_dims,
    forward,
    glorot_uniform_init,
    predict_batch,
    softmax_cross_entropy,
)
from mos.signal import (
    STREAM_INIT,
    STREAM_MONITOR,
    STREAM_ONLINE,
    STREAM_TRAIN,
    ScenarioConfig,
    balanced_labels,
    draw_balanced_dataset,
    draw_indexed,
    sample_rng,
    stack_samples,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    scenario: ScenarioConfig
    feature_kind: str = features.COVARIANCE
    steps: int = 3000
    batch_size: int = 64
    lr: float = 1e-3
    width: int = 256
    hidden_layers: int = 3
    eval_every: int = 500
    monitor_size: int = 1000
    seed: int = 0

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigurationError("steps must be >= 1")
        if self.batch_size < 1:
            raise ConfigurationError("batch_size must be >= 1")
        if self.feature_kind not in features.FEATURE_KINDS:
            raise ConfigurationError(f"unknown feature kind {self.feature_kind!r}")
        if self.width < 1 or self.hidden_layers < 0:
            raise ConfigurationError("invalid network size")

    @property
    def layer_dims(self) -> tuple[int, ...]:
        sc = self.scenario
        in_dim = features.feature_length(self.feature_kind, sc.num_antennas, sc.num_snapshots)
        return default_layer_dims(in_dim, self.width, sc.num_classes, self.hidden_layers)


@dataclass(frozen=True)
class LogRecord:
    step: int
    loss: float
    eval_accuracy: float


@dataclass(frozen=True, eq=False)
class EvalReport:
    """Accuracy summary; ``confusion[true, predicted]`` holds counts."""

    confusion: np.ndarray

    @classmethod
    def from_predictions(cls, labels, predictions, num_classes: int) -> EvalReport:
        labels = np.asarray(labels, dtype=np.int64)
        predictions = np.clip(np.asarray(predictions, dtype=np.int64), 0, num_classes - 1)
        if labels.size == 0:
            raise DataError("cannot evaluate on an empty test set")
        conf = np.zeros((num_classes, num_classes), dtype=np.int64)
        np.add.at(conf, (labels, predictions), 1)
        return cls(conf)

    @property
    def n_test(self) -> int:
        return int(self.confusion.sum())

    @property
    def overall_accuracy(self) -> float:
        return float(np.trace(self.confusion) / self.n_test)

    @property
    def class_counts(self) -> np.ndarray:
        return self.confusion.sum(axis=1)

    @property
    def per_class_accuracy(self) -> np.ndarray:
        counts = self.class_counts
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, np.diag(self.confusion) / counts, np.nan)

    def normalized(self) -> np.ndarray:
        """Confusion with every true-class row scaled to sum to one."""
        counts = self.class_counts[:, None].astype(float)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(counts > 0, self.confusion / counts, 0.0)

    def overfit_mass(self) -> int:
        """Samples whose predicted order exceeds the true order."""
        return int(np.triu(self.confusion, k=1).sum())

    def underfit_mass(self) -> int:
        return int(np.tril(self.confusion, k=-1).sum())


def _as_arrays(testset) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(testset, tuple) and len(testset) == 2:
        Y, labels = testset
        return np.asarray(Y), np.asarray(labels, dtype=np.int64)
    return stack_samples(list(testset))


def _init_params(cfg: TrainConfig) -> MlpParams:
    sc = cfg.scenario
    meta = NetMeta(sc.num_antennas, sc.num_snapshots, sc.max_order, 0)
    return glorot_uniform_init(
        cfg.layer_dims, sample_rng(cfg.seed, STREAM_INIT, 0), cfg.feature_kind, meta
    )


def random_init(cfg: TrainConfig) -> MlpParams:
    """Glorot-initialised network with the shape ``cfg`` would train."""
    return _init_params(cfg)


def train_offline(
    cfg: TrainConfig,
    on_log: Callable[[LogRecord], None] | None = None,
    init: MlpParams | None = None,
) -> MlpParams:
    """Train on freshly drawn data at every step; no sample is ever revisited.

    Step ``s`` consumes stream indices ``s*B .. s*B+B-1`` of the training
    stream, each batch holding an equal share of every class. Every
    ``eval_every`` steps the mean loss since the last record and the accuracy
    on a fixed monitor set are reported through ``on_log``.
    """
    sc = cfg.scenario
    params = _init_params(cfg) if init is None else init
    state = adam_init(params, lr=cfg.lr)
    labels = balanced_labels(cfg.batch_size, sc.max_order)
    monitor = None
    if on_log is not None and cfg.eval_every > 0:
        mon = list(draw_balanced_dataset(sc, cfg.monitor_size, seed=cfg.seed, stream=STREAM_MONITOR))
        monitor = _as_arrays(mon)
    window = []
    for step in range(cfg.steps):
        Y = draw_indexed(sc, labels, cfg.seed, STREAM_TRAIN, step * cfg.batch_size)
        X = features.encode_batch(Y, cfg.feature_kind)
        probs, cache = forward(params, X)
        loss = float(softmax_cross_entropy(cache.logits, labels).mean())
        if not np.isfinite(loss):
            raise DivergenceError(f"non-finite loss at step {step}", last_params=params)
        grads = backward(params, cache, labels)
        new_params, state = adam_step(params, grads, state)
        if not new_params.is_finite():
            raise DivergenceError(f"non-finite parameters after step {step}", last_params=params)
        params = new_params
        window.append(loss)
        done = step + 1
        if monitor is not None and (done % cfg.eval_every == 0 or done == cfg.steps):
            acc = evaluate(params, monitor).overall_accuracy
            rec = LogRecord(done, float(np.mean(window)), acc)
            window = []
            log.info("step %d loss %.4f monitor accuracy %.4f", rec.step, rec.loss, rec.eval_accuracy)
            on_log(rec)
    return params


def train_online(
    init: MlpParams,
    measured,
    n_batches: int,
    lr: float = 1e-3,
    seed: int = 0,
    batch_size: int = 64,
) -> MlpParams:
    """Fine-tune ``init`` on a fixed set of measured samples with a fresh Adam state.

    Batches are taken without replacement from one shuffled pass while the
    set is large enough; if ``n_batches * batch_size`` exceeds its size,
    every batch is drawn uniformly with replacement instead.
    """
    Y, labels = _as_arrays(measured)
    if labels.size == 0:
        raise DataError("measured set is empty")
    if n_batches <= 0:
        return init
    check_compatible(init, M=Y.shape[1], Lmax=int(init.meta.Lmax), N=Y.shape[2])
    if labels.max() > init.meta.Lmax:
        raise ContractError("measured labels exceed the network's class range")
    X = features.encode_batch(Y, init.feature_kind)
    if X.shape[1] != init.layer_dims[0]:
        raise ContractError("measured features do not fit the network input")
    rng = sample_rng(seed, STREAM_ONLINE, 0)
    K = labels.size
    if n_batches * batch_size <= K:
        order = rng.permutation(K)
        batches = [order[i * batch_size:(i + 1) * batch_size] for i in range(n_batches)]
    else:
        batches = [rng.integers(0, K, size=batch_size) for _ in range(n_batches)]
    params = init
    state = adam_init(params, lr=lr)
    for idx in batches:
        _, cache = forward(params, X[idx])
        grads = backward(params, cache, labels[idx])
        params, state = adam_step(params, grads, state)
    return params


def evaluate(params: MlpParams, testset) -> EvalReport:
    """Confusion of the network's MAP decisions on ``testset`` (Samples or ``(Y, labels)``)."""
    Y, labels = _as_arrays(testset)
    check_compatible(params, M=Y.shape[1], N=Y.shape[2])
    X = features.encode_batch(Y, params.feature_kind)
    preds = predict_batch(params, X)
    return EvalReport.from_predictions(labels, preds, params.layer_dims[-1])


def classical_predictions(variant: str, Y: np.ndarray) -> np.ndarray:
    C = features.sample_covariance(Y)
    spectra = classical.eigen_spectra(C)
    return classical.estimate_orders(spectra, Y.shape[-1], variant)


def evaluate_classical(variant: str, testset, max_order: int | None = None) -> EvalReport:
    """Confusion of AIC/MDL estimates; estimates above ``Lmax`` count as ``Lmax``."""
    Y, labels = _as_arrays(testset)
    if max_order is None:
        max_order = int(labels.max())
    preds = classical_predictions(variant, Y)
    return EvalReport.from_predictions(labels, np.minimum(preds, max_order), max_order + 1)


def evaluate_predictor(predictor: Callable[[np.ndarray], int], testset, num_classes: int) -> EvalReport:
    """Evaluate an arbitrary per-sample ``predictor(Y) -> order`` callable."""
    Y, labels = _as_arrays(testset)
    preds = np.array([predictor(y) for y in Y], dtype=np.int64)
    return EvalReport.from_predictions(labels, preds, num_classes)
