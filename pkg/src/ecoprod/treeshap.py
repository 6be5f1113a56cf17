"""Exact per-feature attributions for boosted tree ensembles.

Implements the polynomial-time path-dependent Shapley algorithm for trees:
a recursion down each tree maintains the set of features split on so far
("the unique path") together with the fraction of training mass (zero
fraction) and of matching paths (one fraction) that flow through, extending
and unwinding the path's permutation weights as it goes.  The background
distribution is the training cover recorded on each node, so no separate
background dataset is needed.

Attributions live in margin (log-odds) space, where additivity is exact:
``base + sum(phi) == margin(x)`` up to float error for every sample.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import TrainingError
from .gbm import BoostedModel, TreeNode


@dataclass(frozen=True)
class ShapValues:
    """phi[i, j] is feature j's contribution to sample i's margin."""

    phi: np.ndarray
    base: float
    feature_names: tuple[str, ...]


def _expected_leaf_value(node: TreeNode) -> float:
    if node.is_leaf:
        return node.weight
    left = _expected_leaf_value(node.left) * node.left.cover
    right = _expected_leaf_value(node.right) * node.right.cover
    return (left + right) / node.cover


def expected_margin(model: BoostedModel) -> float:
    """Cover-weighted mean margin: the additive baseline of the attributions."""
    return model.base_score + model.eta * sum(
        _expected_leaf_value(tree) for tree in model.trees
    )


# A path entry is [feature, zero_fraction, one_fraction, weight].


def _extend(path: list[list[float]], zero_fraction: float, one_fraction: float, feature: int) -> list[list[float]]:
    path = [entry.copy() for entry in path]
    depth = len(path)
    path.append([feature, zero_fraction, one_fraction, 1.0 if depth == 0 else 0.0])
    for i in range(depth - 1, -1, -1):
        path[i + 1][3] += one_fraction * path[i][3] * (i + 1) / (depth + 1)
        path[i][3] = zero_fraction * path[i][3] * (depth - i) / (depth + 1)
    return path


def _unwind(path: list[list[float]], index: int) -> list[list[float]]:
    length = len(path)
    one_fraction = path[index][2]
    zero_fraction = path[index][1]
    running = path[length - 1][3]
    weights = [entry[3] for entry in path]
    for j in range(length - 2, -1, -1):
        if one_fraction != 0.0:
            kept = weights[j]
            weights[j] = running * length / ((j + 1) * one_fraction)
            running = kept - weights[j] * zero_fraction * (length - 1 - j) / length
        else:
            weights[j] = weights[j] * length / (zero_fraction * (length - 1 - j))
    out = []
    for j in range(length - 1):
        source = path[j] if j < index else path[j + 1]
        out.append([source[0], source[1], source[2], weights[j]])
    return out


def _unwound_sum(path: list[list[float]], index: int) -> float:
    return sum(entry[3] for entry in _unwind(path, index))


def _recurse(
    node: TreeNode,
    x_row: np.ndarray,
    phi: np.ndarray,
    path: list[list[float]],
    zero_fraction: float,
    one_fraction: float,
    feature: int,
) -> None:
    path = _extend(path, zero_fraction, one_fraction, feature)
    if node.is_leaf:
        for i in range(1, len(path)):
            weight = _unwound_sum(path, i)
            phi[path[i][0]] += weight * (path[i][2] - path[i][1]) * node.weight
        return

    hot, cold = (node.left, node.right) if x_row[node.feature] < node.threshold else (node.right, node.left)
    incoming_zero = 1.0
    incoming_one = 1.0
    for k, entry in enumerate(path):
        if entry[0] == node.feature:
            incoming_zero, incoming_one = entry[1], entry[2]
            path = _unwind(path, k)
            break
    _recurse(hot, x_row, phi, path, incoming_zero * hot.cover / node.cover, incoming_one, node.feature)
    _recurse(cold, x_row, phi, path, incoming_zero * cold.cover / node.cover, 0.0, node.feature)


def tree_shap(model: BoostedModel, x_matrix: np.ndarray) -> ShapValues:
    """Exact path-dependent attributions for every row, in margin space."""
    x_matrix = np.atleast_2d(np.asarray(x_matrix, dtype=np.float64))
    if x_matrix.shape[1] != model.n_features:
        raise TrainingError(
            f"expected {model.n_features} features, got {x_matrix.shape[1]}"
        )
    phi = np.zeros((x_matrix.shape[0], model.n_features))
    for i in range(x_matrix.shape[0]):
        row_phi = np.zeros(model.n_features)
        for tree in model.trees:
            _recurse(tree, x_matrix[i], row_phi, [], 1.0, 1.0, -1)
        phi[i] = model.eta * row_phi
    return ShapValues(phi=phi, base=expected_margin(model), feature_names=model.feature_names)


@dataclass(frozen=True)
class ShapSummary:
    """Features ranked by mean |phi| with the raw (value, phi) pairs kept for
    plotting; ties break on the lower feature index."""

    ranking: tuple[tuple[str, float], ...]
    order: tuple[int, ...]
    phi: np.ndarray
    values: np.ndarray
    feature_names: tuple[str, ...]


def shap_summary(model: BoostedModel, x_matrix: np.ndarray) -> ShapSummary:
    x_matrix = np.atleast_2d(np.asarray(x_matrix, dtype=np.float64))
    shap = tree_shap(model, x_matrix)
    mean_abs = np.mean(np.abs(shap.phi), axis=0)
    # argsort on (-mean, index) pairs: descending magnitude, stable tie-break.
    order = tuple(int(j) for j in np.lexsort((np.arange(mean_abs.shape[0]), -mean_abs)))
    ranking = tuple((model.feature_names[j], float(mean_abs[j])) for j in order)
    return ShapSummary(
        ranking=ranking,
        order=order,
        phi=shap.phi,
        values=x_matrix,
        feature_names=model.feature_names,
    )
