"""
Alternating training of (g, h, w).

After a warm-up of plain source risk minimization, every iteration

1. forwards both domains,
2. pseudo-labels the target by argmax (holding the last labels that cover every class when a
   class disappears from the target predictions),
3. re-estimates the class weights w by BBSE (smoothed and capped),
4. takes a gradient-descent step on the configured framework objective.
"""

from __future__ import annotations

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Literal

import numpy as np
import pandas as pd
from numpy.typing import NDArray

from glshift.distributions import DiscreteDistribution
from glshift.divergences import tv_distance
from glshift.errors import NonFiniteError, SolverDidNotConverge, TrainingDiverged, ValidationError
from glshift.kernels import (
    KERNEL_KINDS,
    Estimator,
    Kernel,
    KernelKind,
    KernelSpec,
    class_conditional_discrepancy,
    median_bandwidth,
)
from glshift.model import ACTIVATIONS, Activation, ModelParams, forward, input_standardization
from glshift.objectives import (
    FRAMEWORKS,
    ClassWeightSource,
    Framework,
    Objective,
    make_objective,
    pseudo_label,
)
from glshift.shiftgen import SampleSet
from glshift.utils.helpers import rng_stream
from glshift.weights import (
    ImportanceWeights,
    WeightMethod,
    bbse_solve,
    clip_weights,
    confusion_plugin,
    oracle_weights,
    pred_marginal,
    smooth_weights,
)

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

DEFAULT_WARMUP = 40
WARMUP_REFERENCE_ITERS = 200
FULL_BATCH_LIMIT = 2000
MINIBATCH_SIZE = 256
WEIGHTED_FRAMEWORKS = ("label_only", "gls")
TRACE_COLUMNS = ("epoch", "loss", "src_acc", "tgt_acc", "tv_label", "cond_disc", "weight_error")


@dataclass
class TrainConfig:
    """
    Hyper-parameters of one training run.

    ``max_iters`` counts every iteration including the warm-up. ``warmup_epochs`` defaults to
    40, scaled by max_iters / 200 when fewer than 200 iterations are run. ``bandwidth`` None
    selects the median heuristic.
    """

    framework: Framework = "gls"
    lambda_g: float = 0.1
    learning_rate: float = 0.5
    warmup_epochs: int | None = None
    max_iters: int = 400
    batch_size: int | None = None
    kernel: KernelKind = "gaussian"
    bandwidth: float | None = None
    estimator: Estimator = "biased"
    weight_method: WeightMethod = "qp"
    weight_smoothing: float = 0.5
    w_max: float = 50.0
    class_weights: ClassWeightSource = "source"
    confusion_predictor: Literal["live", "warmup"] = "live"
    pseudo_label_threshold: float | None = None
    hidden: list[int] = field(default_factory=lambda: [16])
    d_z: int = 8
    activation: Activation = "tanh"
    loss_bound: float = 1.0
    seed: int = 0
    trace_sample_size: int = 1000

    def __post_init__(self) -> None:
        checks = [
            (self.framework in FRAMEWORKS, f"framework must be one of {FRAMEWORKS}"),
            (self.lambda_g >= 0, "lambda_g must be non-negative"),
            (self.learning_rate > 0, "learning_rate must be positive"),
            (self.max_iters >= 1, "max_iters must be positive"),
            (self.warmup_epochs is None or 0 <= self.warmup_epochs <= self.max_iters, "warmup_epochs must lie in [0, max_iters]"),
            (self.batch_size is None or self.batch_size >= 2, "batch_size must be at least 2"),
            (self.kernel in KERNEL_KINDS, f"kernel must be one of {KERNEL_KINDS}"),
            (self.bandwidth is None or self.bandwidth > 0, "bandwidth must be positive"),
            (self.estimator in ("biased", "unbiased"), "estimator must be biased or unbiased"),
            (self.weight_method in ("qp", "pinv", "oracle"), "weight_method must be qp, pinv or oracle"),
            (0.0 <= self.weight_smoothing <= 1.0, "weight_smoothing must lie in [0, 1]"),
            (self.w_max > 0, "w_max must be positive"),
            (self.class_weights in ("source", "target"), "class_weights must be source or target"),
            (self.confusion_predictor in ("live", "warmup"), "confusion_predictor must be live or warmup"),
            (self.pseudo_label_threshold is None or 0.0 <= self.pseudo_label_threshold <= 1.0, "pseudo_label_threshold must lie in [0, 1]"),
            (all(h >= 1 for h in self.hidden) and self.d_z >= 1, "layer sizes must be positive"),
            (self.activation in ACTIVATIONS, f"activation must be one of {ACTIVATIONS}"),
            (self.loss_bound > 0, "loss_bound must be positive"),
            (self.trace_sample_size >= 2, "trace_sample_size must be at least 2"),
        ]
        for ok, message in checks:
            if not ok:
                raise ValidationError(message)

    def resolved_warmup(self) -> int:
        if self.warmup_epochs is not None:
            return self.warmup_epochs
        if self.max_iters >= WARMUP_REFERENCE_ITERS:
            return DEFAULT_WARMUP
        return round(DEFAULT_WARMUP * self.max_iters / WARMUP_REFERENCE_ITERS)

    def resolved_batch_size(self, n: int) -> int:
        if self.batch_size is not None:
            return min(self.batch_size, n)
        return n if n <= FULL_BATCH_LIMIT else MINIBATCH_SIZE

    def kernel_spec(self, bandwidth: float | None = None) -> KernelSpec:
        """Kernel of this run; without any bandwidth information a bandwidth of 1 is used."""
        if bandwidth is None:
            bandwidth = self.bandwidth if self.bandwidth is not None else 1.0
        return KernelSpec(self.kernel, bandwidth if self.kernel in ("gaussian", "laplacian") else None)

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


@dataclass
class TraceRow:
    epoch: int
    loss: float
    src_acc: float
    tgt_acc: float
    tv_label: float
    cond_disc: float
    weight_error: float


class TrainTrace:
    """Per-iteration diagnostics of a training run."""

    def __init__(self, rows: list[TraceRow] | None = None) -> None:
        self.rows = rows or []

    def __len__(self) -> int:
        return len(self.rows)

    def append(self, row: TraceRow) -> None:
        self.rows.append(row)

    def column(self, name: str) -> NDArray[np.float64]:
        return np.array([getattr(row, name) for row in self.rows], dtype=float)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([dataclasses.asdict(row) for row in self.rows], columns=list(TRACE_COLUMNS))

    def to_records(self) -> list[dict[str, Any]]:
        return [dataclasses.asdict(row) for row in self.rows]

    @classmethod
    def from_frame(cls, frame: pd.DataFrame) -> TrainTrace:
        rows = [
            TraceRow(int(r["epoch"]), *(float(r[c]) for c in TRACE_COLUMNS[1:]))
            for r in frame.to_dict("records")
        ]
        return cls(rows)


@dataclass
class TrainResult:
    params: ModelParams
    weights: ImportanceWeights
    trace: TrainTrace
    bandwidth: float | None
    warmup_epochs: int
    dropped_class_events: int = 0
    held_label_epochs: int = 0


def train(source: SampleSet, target: SampleSet, cfg: TrainConfig, target_labels_known: bool = True) -> TrainResult:
    """
    Run warm-up and alternating correction on a labelled source and an unlabelled target.

    Target labels are never seen by the algorithm (except for ``weight_method="oracle"``);
    when ``target_labels_known`` they are used for the trace only. The model standardizes its
    inputs with the mean and scale of the pooled source and target features.

    Raises:
        ValidationError: inconsistent data or configuration
        TrainingDiverged: a non-finite loss, gradient or activation; carries the partial trace
    """
    n_classes = source.n_classes
    if target.n_classes != n_classes or target.dim != source.dim:
        raise ValidationError("source and target disagree on classes or feature dimension")
    p_hat = source.label_distribution()
    if cfg.framework in WEIGHTED_FRAMEWORKS and np.any(p_hat.probs == 0):
        raise ValidationError("every class needs source samples to estimate importance weights")
    q_true = target.label_distribution() if target_labels_known else None
    if cfg.weight_method == "oracle" and q_true is None:
        raise ValidationError("oracle weights need the target labels")
    w_star = q_true.probs / p_hat.probs if q_true is not None and np.all(p_hat.probs > 0) else None

    Xs, ys, Xt = source.features, source.labels, target.features
    input_mean, input_scale = input_standardization(Xs, Xt)
    m = ModelParams.init(source.dim, n_classes, cfg.hidden, cfg.d_z, cfg.activation, cfg.seed, input_mean, input_scale)
    w = ImportanceWeights.ones(p_hat)
    warmup = cfg.resolved_warmup()
    batch_rng = rng_stream(cfg.seed, "batches")
    trace_rows_s = _trace_rows(len(source), cfg.trace_sample_size, cfg.seed, 0)
    trace_rows_t = _trace_rows(len(target), cfg.trace_sample_size, cfg.seed, 1)

    trace = TrainTrace()
    bandwidth = _bandwidth(cfg, m, Xs, Xt)
    kernel = cfg.kernel_spec(bandwidth).build()
    active: Objective = make_objective(cfg.framework, kernel, 0.0, cfg.estimator, cfg.class_weights)
    frozen_preds: tuple[NDArray[np.int64], NDArray[np.int64]] | None = None
    dropped_events = 0
    held_epochs = 0
    complete_labels: NDArray[np.int64] | None = None
    source_classes = np.flatnonzero(p_hat.probs > 0)

    try:
        for epoch in range(cfg.max_iters):
            if epoch == warmup:
                if cfg.bandwidth is None and warmup > 0:
                    bandwidth = _bandwidth(cfg, m, Xs, Xt)
                kernel = cfg.kernel_spec(bandwidth).build()
                active = make_objective(cfg.framework, kernel, cfg.lambda_g, cfg.estimator, cfg.class_weights)
                logger.info(f"Warm-up finished after {warmup} epochs; kernel bandwidth frozen at {bandwidth}")

            Zs, Ps = forward(m, Xs)
            Zt, Pt = forward(m, Xt)
            preds_s = pseudo_label(Ps)
            preds_t = pseudo_label(Pt)

            if epoch >= warmup and cfg.framework in WEIGHTED_FRAMEWORKS:
                if cfg.confusion_predictor == "warmup":
                    if frozen_preds is None:
                        frozen_preds = (preds_s, preds_t)
                    bbse_preds = frozen_preds
                else:
                    bbse_preds = (preds_s, preds_t)
                w = _update_weights(w, cfg, bbse_preds[0], ys, bbse_preds[1], p_hat, q_true, n_classes)

            yt_align = preds_t if cfg.pseudo_label_threshold is None else pseudo_label(Pt, cfg.pseudo_label_threshold)
            if np.all(np.isin(source_classes, yt_align)):
                complete_labels = yt_align
            elif epoch >= warmup and complete_labels is not None:
                held_epochs += 1
                missing = np.setdiff1d(source_classes, yt_align).tolist()
                logger.warning(
                    f"Epoch {epoch}: no target sample predicted as {missing}, aligning with the last complete pseudo-labels"
                )
                yt_align = complete_labels

            losses = []
            for rows_s, rows_t in _batches(len(source), len(target), cfg.resolved_batch_size(len(source)), batch_rng):
                value = active(m, Xs[rows_s], ys[rows_s], Xt[rows_t], yt_align[rows_t], w)
                if not math.isfinite(value.loss):
                    raise NonFiniteError("loss")
                if value.dropped_classes:
                    dropped_events += 1
                    logger.warning(
                        f"Epoch {epoch}: classes {list(value.dropped_classes)} missing from a batch, "
                        f"dropped from the discrepancy ({dropped_events} so far)"
                    )
                losses.append(value.loss)
                m = m.step(value.grads, cfg.learning_rate)

            row = TraceRow(
                epoch=epoch,
                loss=float(np.mean(losses)),
                src_acc=float(np.mean(preds_s == ys)),
                tgt_acc=float(np.mean(preds_t == target.labels)) if target_labels_known else math.nan,
                tv_label=tv_distance(
                    w.reweighted_labels(), q_true if q_true is not None else _prediction_marginal(preds_t, n_classes)
                ),
                cond_disc=_diagnostic_discrepancy(
                    kernel, Zs[trace_rows_s], ys[trace_rows_s], Zt[trace_rows_t], preds_t[trace_rows_t], w
                ),
                weight_error=float(np.max(np.abs(w.w - w_star))) if w_star is not None else math.nan,
            )
            trace.append(row)
            logger.debug(f"Epoch {epoch}: loss {row.loss:.6f}, tv_label {row.tv_label:.4f}")
    except NonFiniteError as e:
        raise TrainingDiverged(f"training diverged at epoch {len(trace)}: {e}", trace) from e

    return TrainResult(m, w, trace, bandwidth, warmup, dropped_events, held_epochs)


def _update_weights(
    w: ImportanceWeights,
    cfg: TrainConfig,
    preds_s: NDArray[np.int64],
    ys: NDArray[np.int64],
    preds_t: NDArray[np.int64],
    p_hat: DiscreteDistribution,
    q_true: DiscreteDistribution | None,
    n_classes: int,
) -> ImportanceWeights:
    if cfg.weight_method == "oracle":
        assert q_true is not None
        estimate = oracle_weights(p_hat, q_true)
    else:
        try:
            estimate = bbse_solve(
                pred_marginal(preds_t, n_classes),
                confusion_plugin(preds_s, ys, n_classes),
                p_hat,
                cfg.weight_method,  # type: ignore[arg-type]
            )
        except SolverDidNotConverge as e:
            logger.warning(f"Keeping the previous weights: {e}")
            return w
    return smooth_weights(w, clip_weights(estimate, cfg.w_max), cfg.weight_smoothing)


def _bandwidth(cfg: TrainConfig, m: ModelParams, Xs: NDArray[np.float64], Xt: NDArray[np.float64]) -> float | None:
    if cfg.bandwidth is not None:
        return cfg.bandwidth
    Z = np.vstack([forward(m, Xs)[0], forward(m, Xt)[0]])
    return median_bandwidth(cfg.kernel, Z, rng_stream(cfg.seed, "bandwidth"))


def _batches(n_s: int, n_t: int, batch_size: int, rng: np.random.Generator) -> list[tuple[NDArray[np.int64], NDArray[np.int64]]]:
    """Source batches covering one pass, each paired with a target batch of the same size."""
    if batch_size >= n_s and n_s <= FULL_BATCH_LIMIT and n_t <= FULL_BATCH_LIMIT:
        return [(np.arange(n_s), np.arange(n_t))]
    order_s = rng.permutation(n_s)
    n_steps = math.ceil(n_s / batch_size)
    order_t = np.resize(rng.permutation(n_t), n_steps * batch_size)
    return [
        (order_s[i * batch_size : (i + 1) * batch_size], order_t[i * batch_size : (i + 1) * batch_size])
        for i in range(n_steps)
    ]


def _trace_rows(n: int, size: int, seed: int, domain_key: int) -> NDArray[np.int64]:
    if n <= size:
        return np.arange(n)
    return np.sort(rng_stream(seed, "subsample", 100 + domain_key).choice(n, size=size, replace=False))


def _diagnostic_discrepancy(
    kernel: Kernel,
    Zs: NDArray[np.float64],
    ys: NDArray[np.int64],
    Zt: NDArray[np.float64],
    yt: NDArray[np.int64],
    w: ImportanceWeights,
) -> float:
    result = class_conditional_discrepancy(
        kernel, Zs, ys, Zt, yt, w.reweighted_labels(), "biased", on_absent="drop", with_grad=False
    )
    return result.value


def _prediction_marginal(preds: NDArray[np.int64], n_classes: int) -> DiscreteDistribution:
    return DiscreteDistribution.from_labels(preds, n_classes)
