"""
Black-box shift estimation of class importance weights.

The weights solve min ||q_hat - C w||^2 subject to w >= 0 and w . p_Y = 1, where C is the
joint confusion p(y_hat, y) of a fixed predictor on the source and q_hat its prediction
marginal on the target.
"""

from __future__ import annotations

import logging
from typing import Any, Literal

import numpy as np
from numpy.typing import ArrayLike, NDArray

from glshift.distributions import DiscreteDistribution
from glshift.errors import SolverDidNotConverge, ValidationError

logger = logging.getLogger(__name__)
logger.addHandler(logging.NullHandler())

WeightMethod = Literal["qp", "pinv", "oracle"]
JOINT_TOLERANCE = 1e-9
KKT_TOLERANCE = 1e-8
MAX_QP_ITERATIONS = 10000
POLISH_EVERY = 25
DEFAULT_W_MAX = 50.0


class ConfusionJoint:
    """K x K matrix with entries[i, j] = p(y_hat = i, y = j) on the source."""

    def __init__(self, entries: ArrayLike) -> None:
        C = np.array(entries, dtype=float)
        if C.ndim != 2 or C.shape[0] != C.shape[1]:
            raise ValidationError(f"confusion joint must be square, got shape {C.shape}")
        if np.any(C < 0) or abs(C.sum() - 1.0) > JOINT_TOLERANCE:
            raise ValidationError("confusion joint must be non-negative and sum to 1")
        C.setflags(write=False)
        self.entries = C

    @property
    def n_classes(self) -> int:
        return len(self.entries)

    def label_marginal(self) -> NDArray[np.float64]:
        """Column sums, the source label distribution seen by the predictor."""
        return self.entries.sum(axis=0)


class ImportanceWeights:
    """
    Non-negative class weights w with w . p_Y = 1, so that w * p_Y is a label distribution.
    """

    def __init__(
        self,
        w: ArrayLike,
        reference_p_y: DiscreteDistribution,
        method: str = "given",
        kkt_residual: float | None = None,
    ) -> None:
        values = np.array(w, dtype=float).reshape(-1)
        if len(values) != len(reference_p_y):
            raise ValidationError(f"{len(values)} weights for {len(reference_p_y)} classes")
        if not np.all(np.isfinite(values)) or np.any(values < 0):
            raise ValidationError(f"weights must be finite and non-negative: {values.tolist()}")
        total = float(values @ reference_p_y.probs)
        if abs(total - 1.0) > JOINT_TOLERANCE:
            raise ValidationError(f"weights give total mass {total:.12g} on the reference labels, not 1")
        values.setflags(write=False)
        self.w = values
        self.reference_p_y = reference_p_y
        self.method = method
        self.kkt_residual = kkt_residual

    @classmethod
    def ones(cls, reference_p_y: DiscreteDistribution) -> ImportanceWeights:
        return cls(np.ones(len(reference_p_y)), reference_p_y, method="ones")

    @property
    def n_classes(self) -> int:
        return len(self.w)

    def reweighted_labels(self) -> DiscreteDistribution:
        """P^w_Y = w * p_Y."""
        return DiscreteDistribution.from_counts(self.w * self.reference_p_y.probs)

    def to_dict(self) -> dict[str, Any]:
        return {
            "w": self.w.tolist(),
            "p_y": self.reference_p_y.to_list(),
            "method": self.method,
            "kkt_residual": self.kkt_residual,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ImportanceWeights:
        return cls(data["w"], DiscreteDistribution(data["p_y"]), data.get("method", "given"), data.get("kkt_residual"))


def confusion_plugin(source_preds: ArrayLike, source_labels: ArrayLike, n_classes: int) -> ConfusionJoint:
    """Plug-in joint: entries[i, j] = #(y_hat = i and y = j) / n."""
    preds = np.asarray(source_preds, dtype=np.int64)
    labels = np.asarray(source_labels, dtype=np.int64)
    if len(preds) != len(labels) or len(preds) == 0:
        raise ValidationError("predictions and labels must have the same, non-zero length")
    _check_range(preds, n_classes, "predictions")
    _check_range(labels, n_classes, "labels")
    counts = np.bincount(preds * n_classes + labels, minlength=n_classes * n_classes)
    return ConfusionJoint(counts.reshape(n_classes, n_classes) / len(preds))


def pred_marginal(preds: ArrayLike, n_classes: int) -> DiscreteDistribution:
    y_hat = np.asarray(preds, dtype=np.int64)
    _check_range(y_hat, n_classes, "predictions")
    return DiscreteDistribution.from_labels(y_hat, n_classes)


def bbse_solve(
    q_hat: DiscreteDistribution,
    C: ConfusionJoint,
    p_y: DiscreteDistribution,
    method: Literal["qp", "pinv"] = "qp",
    max_iter: int = MAX_QP_ITERATIONS,
    tol: float = KKT_TOLERANCE,
) -> ImportanceWeights:
    """
    Estimate importance weights from a confusion joint and a target prediction marginal.

    qp: accelerated projected gradient on 1/2 ||q_hat - C w||^2 over {w >= 0, w . p_y = 1}
    with step 1 / ||C^T C||_2, an exact projection onto that set, and an equality-constrained
    least-squares polish on the current support. Converged when the projected-gradient
    residual ||w - proj(w - grad)||_inf is at most ``tol``.

    pinv: w = pinv(C) q_hat, negatives clipped to 0, rescaled so that w . p_y = 1.

    Raises:
        ValidationError: inconsistent sizes, p_y not strictly positive, or column sums of C
            differing from p_y
        SolverDidNotConverge: qp residual above ``tol`` after ``max_iter`` iterations
    """
    K = C.n_classes
    if len(q_hat) != K or len(p_y) != K:
        raise ValidationError(f"q_hat, C and p_y must agree on the number of classes ({K})")
    p = p_y.probs
    if np.any(p <= 0):
        raise ValidationError("the source label distribution must be strictly positive")
    if np.max(np.abs(C.label_marginal() - p)) > JOINT_TOLERANCE:
        raise ValidationError("confusion joint columns do not sum to the source label distribution")
    q = q_hat.probs
    A = C.entries

    if method == "pinv":
        w = np.linalg.pinv(A) @ q
        w = np.clip(w, 0.0, None)
        mass = float(w @ p)
        if mass <= 0:
            logger.warning("Pseudo-inverse weights are all non-positive, falling back to w = 1")
            w = np.ones(K)
        else:
            w = w / mass
        return ImportanceWeights(w, p_y, "pinv", kkt_residual(w, A, q, p))
    if method != "qp":
        raise ValidationError(f"unknown BBSE method {method!r}")

    w, residual, iterations = _solve_qp(A, q, p, max_iter, tol)
    if residual > tol:
        raise SolverDidNotConverge(residual, iterations)
    logger.debug(f"BBSE QP converged after {iterations} iterations, residual {residual:.2e}")
    return ImportanceWeights(w, p_y, "qp", residual)


def kkt_residual(w: NDArray[np.float64], C: NDArray[np.float64], q: NDArray[np.float64], p: NDArray[np.float64]) -> float:
    """Projected-gradient stationarity measure, zero exactly at the constrained minimizer."""
    grad = C.T @ (C @ w - q)
    return float(np.max(np.abs(w - project_weights(w - grad, p))))


def project_weights(v: NDArray[np.float64], p: NDArray[np.float64]) -> NDArray[np.float64]:
    """
    Euclidean projection onto {w >= 0, w . p = 1} for p > 0.

    The solution is max(0, v - tau * p); tau is found from the sorted breakpoints v_i / p_i,
    generalizing the sort-based projection onto the probability simplex.
    """
    ratios = v / p
    order = np.argsort(-ratios, kind="stable")
    taus = (np.cumsum((p * v)[order]) - 1.0) / np.cumsum((p * p)[order])
    active = np.flatnonzero(ratios[order] > taus)
    tau = taus[active[-1]]
    return np.maximum(v - tau * p, 0.0)


def _solve_qp(
    C: NDArray[np.float64],
    q: NDArray[np.float64],
    p: NDArray[np.float64],
    max_iter: int,
    tol: float,
) -> tuple[NDArray[np.float64], float, int]:
    H = C.T @ C
    b = C.T @ q
    lipschitz = float(np.linalg.norm(H, 2))
    w = np.ones(len(p))
    if lipschitz == 0:
        return w, kkt_residual(w, C, q, p), 0

    step = 1.0 / lipschitz
    y = w.copy()
    t = 1.0
    residual = kkt_residual(w, C, q, p)
    iteration = 0
    while iteration < max_iter and residual > tol:
        iteration += 1
        w_next = project_weights(y - step * (H @ y - b), p)
        t_next = (1.0 + np.sqrt(1.0 + 4.0 * t * t)) / 2.0
        y = w_next + ((t - 1.0) / t_next) * (w_next - w)
        w, t = w_next, t_next
        if iteration % POLISH_EVERY == 0 or iteration == max_iter:
            residual = kkt_residual(w, C, q, p)
            polished = _polish(w, H, b, p)
            if polished is not None:
                polished_residual = kkt_residual(polished, C, q, p)
                if polished_residual < residual:
                    w, residual = polished, polished_residual
                    y, t = w.copy(), 1.0
    return w, residual, iteration


def _polish(w: NDArray[np.float64], H: NDArray[np.float64], b: NDArray[np.float64], p: NDArray[np.float64]) -> NDArray[np.float64] | None:
    """Solve the KKT system on the support of w; None when the result leaves the orthant."""
    support = np.flatnonzero(w > 1e-12 * max(float(w.max()), 1.0))
    n = len(support)
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = H[np.ix_(support, support)]
    kkt[:n, n] = p[support]
    kkt[n, :n] = p[support]
    rhs = np.append(b[support], 1.0)
    solution = np.linalg.lstsq(kkt, rhs, rcond=None)[0]
    if np.any(solution[:n] < 0):
        return None
    polished = np.zeros_like(w)
    polished[support] = solution[:n]
    return polished


def oracle_weights(p_y: DiscreteDistribution, q_y: DiscreteDistribution) -> ImportanceWeights:
    """The optimal weights w* = q_Y / p_Y."""
    if len(p_y) != len(q_y):
        raise ValidationError(f"label distributions have {len(p_y)} and {len(q_y)} classes")
    if np.any(p_y.probs <= 0):
        raise ValidationError("oracle weights need a strictly positive source label distribution")
    return ImportanceWeights(q_y.probs / p_y.probs, p_y, "oracle", 0.0)


def clip_weights(weights: ImportanceWeights, w_max: float = DEFAULT_W_MAX) -> ImportanceWeights:
    """Cap every weight at ``w_max``, then rescale so that w . p_Y = 1 again."""
    if w_max <= 0:
        raise ValidationError(f"w_max must be positive, got {w_max}")
    if np.all(weights.w <= w_max):
        return weights
    clipped = np.minimum(weights.w, w_max)
    clipped = clipped / float(clipped @ weights.reference_p_y.probs)
    return ImportanceWeights(clipped, weights.reference_p_y, weights.method, weights.kkt_residual)


def smooth_weights(previous: ImportanceWeights, current: ImportanceWeights, smoothing: float) -> ImportanceWeights:
    """Exponential smoothing: smoothing * previous + (1 - smoothing) * current."""
    if not 0.0 <= smoothing <= 1.0:
        raise ValidationError(f"smoothing must lie in [0, 1], got {smoothing}")
    if previous.reference_p_y != current.reference_p_y:
        raise ValidationError("cannot smooth weights defined on different source label distributions")
    w = smoothing * previous.w + (1.0 - smoothing) * current.w
    # convex combinations stay feasible; the division only absorbs rounding
    w = w / float(w @ current.reference_p_y.probs)
    return ImportanceWeights(w, current.reference_p_y, current.method, current.kkt_residual)


def _check_range(values: NDArray[np.int64], n_classes: int, what: str) -> None:
    if np.any(values < 0) or np.any(values >= n_classes):
        raise ValidationError(f"{what} must lie in [0, {n_classes})")
