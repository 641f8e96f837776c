import numpy as np
import pytest

from glshift.distributions import DiscreteDistribution
from glshift.errors import SolverDidNotConverge, ValidationError
from glshift.oracle import BayesClassifier
from glshift.shiftgen import make_scenario
from glshift.weights import (
    ConfusionJoint,
    ImportanceWeights,
    bbse_solve,
    clip_weights,
    confusion_plugin,
    kkt_residual,
    oracle_weights,
    pred_marginal,
    project_weights,
    smooth_weights,
)

from .helpers import two_class_scenario


def test_confusion_plugin() -> None:
    C = confusion_plugin([0, 0, 1, 1], [0, 1, 1, 1], 2)

    assert C.entries.tolist() == [[0.25, 0.25], [0.0, 0.5]]
    assert C.label_marginal().tolist() == [0.25, 0.75]

    with pytest.raises(ValidationError):
        confusion_plugin([0, 2], [0, 1], 2)


def test_pred_marginal() -> None:
    assert pred_marginal([2, 2, 0, 1], 3).to_list() == [0.25, 0.25, 0.5]


def test_projection_is_feasible_and_idempotent() -> None:
    rng = np.random.default_rng(0)
    p = np.array([0.2, 0.5, 0.3])

    for _ in range(50):
        w = project_weights(rng.normal(scale=3.0, size=3), p)

        assert np.all(w >= 0)
        assert abs(w @ p - 1.0) < 1e-12
        assert np.allclose(project_weights(w, p), w)


def test_projection_matches_brute_force() -> None:
    p = np.array([0.6, 0.4])
    v = np.array([2.5, -1.0])
    # feasible set is the segment w1 = (1 - 0.6 w0) / 0.4 for w0 in [0, 1 / 0.6]
    w0 = np.linspace(0.0, 1.0 / 0.6, 200001)
    candidates = np.column_stack([w0, (1.0 - 0.6 * w0) / 0.4])
    best = candidates[np.argmin(((candidates - v) ** 2).sum(axis=1))]

    assert np.allclose(project_weights(v, p), best, atol=1e-4)


def test_perfect_predictor_recovers_the_label_ratio() -> None:
    p = DiscreteDistribution([0.5, 0.3, 0.2])
    q = DiscreteDistribution([0.2, 0.3, 0.5])
    C = ConfusionJoint(np.diag(p.probs))

    for method in ("qp", "pinv"):
        weights = bbse_solve(q, C, p, method)

        assert np.allclose(weights.w, q.probs / p.probs, atol=1e-7)
        assert weights.method == method


def test_qp_matches_grid_search_when_infeasible() -> None:
    p = DiscreteDistribution([0.6, 0.4])
    # predictions mix the classes, and q_hat lies outside the range of C on the feasible set
    C = ConfusionJoint([[0.5, 0.1], [0.1, 0.3]])
    q = DiscreteDistribution([0.95, 0.05])

    weights = bbse_solve(q, C, p)

    w0 = np.linspace(0.0, 1.0 / 0.6, 200001)
    candidates = np.column_stack([w0, (1.0 - 0.6 * w0) / 0.4])
    objective = ((candidates @ C.entries.T - q.probs) ** 2).sum(axis=1)
    achieved = float(((C.entries @ weights.w - q.probs) ** 2).sum())

    assert achieved <= objective.min() + 1e-12
    assert np.all(weights.w >= 0)
    assert abs(weights.w @ p.probs - 1.0) < 1e-9
    assert kkt_residual(weights.w, C.entries, q.probs, p.probs) < 1e-8


def test_pinv_clips_negative_weights() -> None:
    p = DiscreteDistribution([0.6, 0.4])
    C = ConfusionJoint([[0.5, 0.1], [0.1, 0.3]])
    q = DiscreteDistribution([0.95, 0.05])

    weights = bbse_solve(q, C, p, "pinv")

    assert weights.w[1] == 0.0
    assert abs(weights.w @ p.probs - 1.0) < 1e-12


def test_bbse_validation() -> None:
    p = DiscreteDistribution([0.6, 0.4])
    C = ConfusionJoint(np.diag([0.5, 0.5]))

    with pytest.raises(ValidationError):
        bbse_solve(p, C, p)
    with pytest.raises(ValidationError):
        bbse_solve(DiscreteDistribution([0.2, 0.3, 0.5]), C, p)
    with pytest.raises(ValidationError):
        bbse_solve(p, ConfusionJoint(np.diag([1.0, 0.0])), DiscreteDistribution([1.0, 0.0]))


def test_solver_reports_non_convergence() -> None:
    p = DiscreteDistribution([0.5, 0.3, 0.2])
    C = ConfusionJoint([[0.3, 0.1, 0.05], [0.1, 0.15, 0.05], [0.1, 0.05, 0.1]])
    q = DiscreteDistribution([0.1, 0.2, 0.7])

    with pytest.raises(SolverDidNotConverge):
        bbse_solve(q, C, p, max_iter=1, tol=0.0)


def test_bbse_is_consistent() -> None:
    scenario = two_class_scenario(delta=0.0, scale=0.3)
    source, target = scenario.sample(20000, 20000, seed=4)
    classifier = BayesClassifier(scenario.source)

    weights = bbse_solve(
        pred_marginal(classifier.predict(target.features), 2),
        confusion_plugin(classifier.predict(source.features), source.labels, 2),
        source.label_distribution(),
    )

    assert np.allclose(weights.w, [0.4 / 0.6, 0.6 / 0.4], atol=0.05)


def test_importance_weights_validation() -> None:
    p = DiscreteDistribution([0.5, 0.5])

    with pytest.raises(ValidationError):
        ImportanceWeights([1.0, 2.0], p)
    with pytest.raises(ValidationError):
        ImportanceWeights([2.5, -0.5], p)

    weights = ImportanceWeights([0.5, 1.5], p)
    assert weights.reweighted_labels().to_list() == [0.25, 0.75]
    assert ImportanceWeights.from_dict(weights.to_dict()).w.tolist() == [0.5, 1.5]


def test_oracle_weights() -> None:
    weights = oracle_weights(DiscreteDistribution([0.8, 0.2]), DiscreteDistribution([0.4, 0.6]))

    assert np.allclose(weights.w, [0.5, 3.0])

    with pytest.raises(ValidationError):
        oracle_weights(DiscreteDistribution([1.0, 0.0]), DiscreteDistribution([0.5, 0.5]))


def test_clip_weights() -> None:
    p = DiscreteDistribution([0.99, 0.01])
    weights = ImportanceWeights([0.5, 50.5], p)

    clipped = clip_weights(weights, w_max=10.0)

    assert abs(clipped.w @ p.probs - 1.0) < 1e-12
    assert clipped.w[1] / clipped.w[0] == pytest.approx(20.0)
    assert clip_weights(weights, w_max=100.0) is weights


def test_smooth_weights() -> None:
    p = DiscreteDistribution([0.5, 0.5])
    previous = ImportanceWeights([1.0, 1.0], p)
    current = ImportanceWeights([0.4, 1.6], p)

    assert np.allclose(smooth_weights(previous, current, 0.5).w, [0.7, 1.3])
    assert np.allclose(smooth_weights(previous, current, 0.0).w, current.w)

    with pytest.raises(ValidationError):
        smooth_weights(previous, ImportanceWeights([1.25, 0.0], DiscreteDistribution([0.8, 0.2])), 0.5)


def test_qp_matches_grid_search_on_random_instances() -> None:
    rng = np.random.default_rng(7)
    grid = np.linspace(0.0, 1.0, 601)

    for _ in range(100):
        K = int(rng.integers(2, 4))
        p = DiscreteDistribution.from_counts(0.1 + rng.dirichlet(np.ones(K)))
        columns = [rng.dirichlet(np.ones(K) + 4.0 * np.eye(K)[j]) for j in range(K)]
        C = ConfusionJoint(np.column_stack(columns) * p.probs)
        q = DiscreteDistribution(rng.dirichlet(np.ones(K)))

        weights = bbse_solve(q, C, p)

        # feasible points: w_i = s_i / p_i on the simplex s
        if K == 2:
            s = np.column_stack([grid, 1.0 - grid])
        else:
            a, b = np.meshgrid(grid, grid)
            keep = a + b <= 1.0
            s = np.column_stack([a[keep], b[keep], 1.0 - a[keep] - b[keep]])
        candidates = s / p.probs
        best = float((((candidates @ C.entries.T) - q.probs) ** 2).sum(axis=1).min())
        achieved = float(((C.entries @ weights.w - q.probs) ** 2).sum())
        assert achieved <= best + 1e-6
        assert kkt_residual(weights.w, C.entries, q.probs, p.probs) <= 1e-8


@pytest.mark.slow
def test_bbse_is_consistent_with_three_classes() -> None:
    p_y, q_y = [0.5, 0.3, 0.2], [0.3, 0.3, 0.4]
    scenario = make_scenario(3, 2, 0.0, p_y, q_y, seed=0, scale=0.5)
    classifier = BayesClassifier(scenario.source)
    w_star = np.array(q_y) / np.array(p_y)

    for n, tolerance in ((5000, 0.1), (20000, 0.05)):
        passed = 0
        for seed in range(20):
            source, target = scenario.sample(n, n, seed=seed)
            weights = bbse_solve(
                pred_marginal(classifier.predict(target.features), 3),
                confusion_plugin(classifier.predict(source.features), source.labels, 3),
                source.label_distribution(),
            )
            passed += np.max(np.abs(weights.w - w_star)) <= tolerance
        assert passed >= 19, (n, passed)
