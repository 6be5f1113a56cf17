"""Second-order gradient-boosted decision trees.

Training follows the classic second-order recipe: per round, gradients and
hessians of the loss at the current margins drive an exact greedy split
search (every boundary between sorted distinct feature values is scored),

    gain = 1/2 * [G_L^2/(H_L + lambda) + G_R^2/(H_R + lambda) - G^2/(H + lambda)]

and leaves take the Newton weight -G/(H + lambda).  The logistic objective
(g = p - y, h = p(1 - p)) powers the co-production classifier; a squared
objective (g = pred - y, h = 1, optionally sample-weighted) backs the
regressors the treatment-effect meta-learners need.

Trees route strictly-less-than-threshold to the left child and record the
training sample count as the node cover, which the Shapley attribution pass
reuses as its background distribution.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import DegenerateSplitError, TrainingError
from .seeding import derive_seed
from .spectral import ClusterAssignment, kmeans

PROBABILITY_CLAMP = 1e-15
LOSS_INCREASE_TOL = 1e-9


@dataclass
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (weight); cover is
    the training sample weight that reached the node."""

    cover: float
    feature: int | None = None
    threshold: float | None = None
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    weight: float | None = None

    @property
    def is_leaf(self) -> bool:
        return self.feature is None

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {"weight": self.weight, "cover": self.cover}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "cover": self.cover,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "TreeNode":
        if "weight" in obj:
            return cls(cover=obj["cover"], weight=obj["weight"])
        return cls(
            cover=obj["cover"],
            feature=obj["feature"],
            threshold=obj["threshold"],
            left=cls.from_dict(obj["left"]),
            right=cls.from_dict(obj["right"]),
        )


@dataclass(frozen=True)
class TrainConfig:
    rounds: int = 100
    max_depth: int = 4
    eta: float = 0.3
    reg_lambda: float = 1.0
    min_child_cover: float = 1.0
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if self.rounds < 1:
            raise TrainingError("rounds must be >= 1")
        if not 0.0 < self.eta <= 1.0:
            raise TrainingError("eta must lie in (0, 1]")
        if self.reg_lambda < 0:
            raise TrainingError("reg_lambda must be >= 0")
        if self.folds < 2:
            raise TrainingError("folds must be >= 2")
        if self.max_depth < 1:
            raise TrainingError("max_depth must be >= 1")


@dataclass
class BoostedModel:
    """Additive tree ensemble: margin(x) = base_score + eta * sum of trees."""

    trees: list[TreeNode]
    eta: float
    base_score: float
    feature_names: tuple[str, ...]
    objective: str  # "logistic" | "squared"
    training_loss: list[float] = field(default_factory=list)  # per-round, not serialized

    @property
    def n_features(self) -> int:
        return len(self.feature_names)


def _predict_tree(node: TreeNode, x_matrix: np.ndarray, out: np.ndarray, rows: np.ndarray) -> None:
    if node.is_leaf:
        out[rows] += node.weight
        return
    goes_left = x_matrix[rows, node.feature] < node.threshold
    _predict_tree(node.left, x_matrix, out, rows[goes_left])
    _predict_tree(node.right, x_matrix, out, rows[~goes_left])


def predict_margin(model: BoostedModel, x_matrix: np.ndarray) -> np.ndarray:
    x_matrix = np.atleast_2d(np.asarray(x_matrix, dtype=np.float64))
    if x_matrix.shape[1] != model.n_features:
        raise TrainingError(
            f"expected {model.n_features} features, got {x_matrix.shape[1]}"
        )
    totals = np.zeros(x_matrix.shape[0])
    rows = np.arange(x_matrix.shape[0])
    for tree in model.trees:
        _predict_tree(tree, x_matrix, totals, rows)
    return model.base_score + model.eta * totals


def predict_proba(model: BoostedModel, x_matrix: np.ndarray) -> np.ndarray:
    """Logistic of the margin, clamped away from exact 0 and 1."""
    if model.objective != "logistic":
        raise TrainingError("predict_proba requires a logistic-objective model")
    margins = predict_margin(model, x_matrix)
    return np.clip(1.0 / (1.0 + np.exp(-margins)), PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)


def predict_value(model: BoostedModel, x_matrix: np.ndarray) -> np.ndarray:
    """Raw additive prediction, the natural output of a squared-loss model."""
    return predict_margin(model, x_matrix)


def _best_split(
    x_matrix: np.ndarray,
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    counts_weight: np.ndarray,
    reg_lambda: float,
    min_child_cover: float,
) -> tuple[float, int, float] | None:
    """Exact greedy search over all features; returns (gain, feature, threshold)."""
    g_total = g[rows].sum()
    h_total = h[rows].sum()
    parent_score = g_total * g_total / (h_total + reg_lambda)

    best = None
    for feature in range(x_matrix.shape[1]):
        values = x_matrix[rows, feature]
        order = np.argsort(values, kind="stable")
        xs = values[order]
        boundaries = np.nonzero(np.diff(xs) > 0)[0]
        if boundaries.size == 0:
            continue
        gs = np.cumsum(g[rows][order])[boundaries]
        hs = np.cumsum(h[rows][order])[boundaries]
        left_cover = np.cumsum(counts_weight[rows][order])[boundaries]
        right_cover = counts_weight[rows].sum() - left_cover

        admissible = (left_cover >= min_child_cover) & (right_cover >= min_child_cover)
        if not np.any(admissible):
            continue
        gains = 0.5 * (
            gs * gs / (hs + reg_lambda)
            + (g_total - gs) ** 2 / (h_total - hs + reg_lambda)
            - parent_score
        )
        gains[~admissible] = -np.inf
        pick = int(np.argmax(gains))  # first max wins: stable tie-break
        gain = float(gains[pick])
        if gain > 1e-12 and (best is None or gain > best[0]):
            b = boundaries[pick]
            threshold = 0.5 * (xs[b] + xs[b + 1])
            best = (gain, feature, float(threshold))
    return best


def _grow_tree(
    x_matrix: np.ndarray,
    rows: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    counts_weight: np.ndarray,
    config: TrainConfig,
    depth: int,
) -> TreeNode:
    cover = float(counts_weight[rows].sum())
    split = (
        _best_split(x_matrix, rows, g, h, counts_weight, config.reg_lambda, config.min_child_cover)
        if depth < config.max_depth and rows.shape[0] > 1
        else None
    )
    if split is None:
        weight = -g[rows].sum() / (h[rows].sum() + config.reg_lambda)
        return TreeNode(cover=cover, weight=float(weight))
    _, feature, threshold = split
    goes_left = x_matrix[rows, feature] < threshold
    node = TreeNode(cover=cover, feature=feature, threshold=threshold)
    node.left = _grow_tree(x_matrix, rows[goes_left], g, h, counts_weight, config, depth + 1)
    node.right = _grow_tree(x_matrix, rows[~goes_left], g, h, counts_weight, config, depth + 1)
    return node


def _logistic_loss(y: np.ndarray, p: np.ndarray) -> float:
    p = np.clip(p, PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    return float(-np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p)))


def _validate_inputs(x_matrix: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    x_matrix = np.atleast_2d(np.asarray(x_matrix, dtype=np.float64))
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.isfinite(x_matrix)):
        raise TrainingError("non-finite feature value")
    if y.shape != (x_matrix.shape[0],):
        raise TrainingError("target length does not match row count")
    return x_matrix, y


def train_classifier(
    x_matrix: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    feature_names: tuple[str, ...] | None = None,
) -> BoostedModel:
    """Boosted logistic classifier; the training loss is checked to be
    non-increasing across rounds."""
    x_matrix, y = _validate_inputs(x_matrix, y)
    classes = np.unique(y)
    if not np.all(np.isin(classes, (0.0, 1.0))):
        raise TrainingError("targets must be binary 0/1")
    if classes.shape[0] < 2:
        raise TrainingError("single-class target: nothing to separate")
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(x_matrix.shape[1]))

    model = BoostedModel(
        trees=[], eta=config.eta, base_score=0.0, feature_names=tuple(feature_names),
        objective="logistic",
    )
    n = x_matrix.shape[0]
    counts_weight = np.ones(n)
    rows = np.arange(n)
    margins = np.full(n, model.base_score)
    loss = _logistic_loss(y, 1.0 / (1.0 + np.exp(-margins)))
    for round_index in range(config.rounds):
        p = 1.0 / (1.0 + np.exp(-margins))
        g = p - y
        h = p * (1.0 - p)
        tree = _grow_tree(x_matrix, rows, g, h, counts_weight, config, depth=0)
        model.trees.append(tree)
        update = np.zeros(n)
        _predict_tree(tree, x_matrix, update, rows)
        margins = margins + config.eta * update
        new_loss = _logistic_loss(y, 1.0 / (1.0 + np.exp(-margins)))
        if new_loss > loss + LOSS_INCREASE_TOL * max(1.0, abs(loss)):
            raise TrainingError(
                f"training loss increased at round {round_index}: {loss} -> {new_loss}"
            )
        loss = new_loss
        model.training_loss.append(loss)
    return model


def train_regressor(
    x_matrix: np.ndarray,
    y: np.ndarray,
    config: TrainConfig,
    feature_names: tuple[str, ...] | None = None,
    sample_weight: np.ndarray | None = None,
) -> BoostedModel:
    """Boosted squared-loss regressor (optionally sample-weighted)."""
    x_matrix, y = _validate_inputs(x_matrix, y)
    if feature_names is None:
        feature_names = tuple(f"f{j}" for j in range(x_matrix.shape[1]))
    n = x_matrix.shape[0]
    weights = np.ones(n) if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
    if weights.shape != (n,) or np.any(weights < 0) or not np.all(np.isfinite(weights)):
        raise TrainingError("sample weights must be finite and non-negative")

    model = BoostedModel(
        trees=[], eta=config.eta, base_score=float(np.average(y, weights=weights) if weights.sum() else 0.0),
        feature_names=tuple(feature_names), objective="squared",
    )
    rows = np.arange(n)
    preds = np.full(n, model.base_score)
    for _ in range(config.rounds):
        g = weights * (preds - y)
        h = weights.copy()
        tree = _grow_tree(x_matrix, rows, g, h, weights, config, depth=0)
        model.trees.append(tree)
        update = np.zeros(n)
        _predict_tree(tree, x_matrix, update, rows)
        preds = preds + config.eta * update
    return model


# ---------------------------------------------------------------------------
# Cross-validation


@dataclass(frozen=True)
class CvReport:
    fold_accuracies: tuple[float, ...]
    mean_accuracy: float
    fold_sizes: tuple[int, ...]


def stratified_folds(y: np.ndarray, folds: int, seed: int) -> list[np.ndarray]:
    """Shuffle each class and deal it round-robin, so every fold keeps both."""
    y = np.asarray(y)
    rng = np.random.default_rng(seed)
    assignments = np.empty(y.shape[0], dtype=np.int64)
    for cls in np.unique(y):
        members = np.nonzero(y == cls)[0]
        if members.shape[0] < folds:
            raise TrainingError(
                f"class {cls} has {members.shape[0]} rows; cannot stratify into {folds} folds"
            )
        members = members[rng.permutation(members.shape[0])]
        assignments[members] = np.arange(members.shape[0]) % folds
    return [np.nonzero(assignments == f)[0] for f in range(folds)]


def cross_validate(x_matrix: np.ndarray, y: np.ndarray, config: TrainConfig) -> CvReport:
    """Stratified k-fold accuracy of the classifier at the 0.5 threshold."""
    x_matrix, y = _validate_inputs(x_matrix, y)
    if config.folds > x_matrix.shape[0]:
        raise TrainingError("more folds than rows")
    folds = stratified_folds(y, config.folds, derive_seed(config.seed, "cv-folds"))
    accuracies = []
    for fold_index, holdout in enumerate(folds):
        train_mask = np.ones(x_matrix.shape[0], dtype=bool)
        train_mask[holdout] = False
        fold_config = replace(config, seed=derive_seed(config.seed, f"cv-fold:{fold_index}"))
        model = train_classifier(x_matrix[train_mask], y[train_mask], fold_config)
        predictions = predict_proba(model, x_matrix[holdout]) >= 0.5
        accuracies.append(float(np.mean(predictions == (y[holdout] == 1.0))))
    return CvReport(
        fold_accuracies=tuple(accuracies),
        mean_accuracy=float(np.mean(accuracies)),
        fold_sizes=tuple(len(f) for f in folds),
    )


# ---------------------------------------------------------------------------
# Governance archetypes (two-group split of province-level probabilities)


@dataclass(frozen=True)
class ArchetypeSplit:
    labels: np.ndarray
    centroids: np.ndarray
    coproductive_cluster: int


def archetype_clusters(province_probs: np.ndarray, seed: int = 0) -> ArchetypeSplit:
    """Two-means split of province-level probabilities; the cluster with the
    higher centroid is the co-productive archetype."""
    probs = np.asarray(province_probs, dtype=np.float64)
    if probs.ndim != 1 or probs.shape[0] < 2:
        raise DegenerateSplitError("need at least two province probabilities")
    if float(probs.max() - probs.min()) == 0.0:
        raise DegenerateSplitError("identical probabilities cannot be split")
    assignment: ClusterAssignment = kmeans(probs[:, None], 2, seed)
    coproductive = int(np.argmax(assignment.centroids[:, 0]))
    return ArchetypeSplit(
        labels=assignment.labels,
        centroids=assignment.centroids[:, 0],
        coproductive_cluster=coproductive,
    )


# ---------------------------------------------------------------------------
# Serialization (documented model-dump schema)


def model_to_json(model: BoostedModel) -> dict:
    """Schema: {objective, base_score, eta, feature_names, trees: [node...]}
    where node = {feature, threshold, cover, left, right} | {weight, cover}."""
    return {
        "objective": model.objective,
        "base_score": model.base_score,
        "eta": model.eta,
        "feature_names": list(model.feature_names),
        "trees": [tree.to_dict() for tree in model.trees],
    }


def model_from_json(obj: dict) -> BoostedModel:
    return BoostedModel(
        trees=[TreeNode.from_dict(t) for t in obj["trees"]],
        eta=obj["eta"],
        base_score=obj["base_score"],
        feature_names=tuple(obj["feature_names"]),
        objective=obj["objective"],
    )


def save_model(model: BoostedModel, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as handle:
        json.dump(model_to_json(model), handle, indent=2, sort_keys=True)
        handle.write("\n")


def load_model(path: str | Path) -> BoostedModel:
    with Path(path).open(encoding="utf-8") as handle:
        return model_from_json(json.load(handle))
