"""Baseline classifiers over feature rows: logistic regression, an L1-shrinkage
linear classifier (squared loss on {0,1} targets, thresholded at 0.5), and a
random forest. All are hand-rolled on numpy so behavior is exact and seeded.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "LinearModel",
    "TreeNode",
    "Forest",
    "train_logistic",
    "train_lasso",
    "train_forest",
    "predict_cls",
    "save_linear",
    "load_linear",
    "save_forest",
    "load_forest",
]


@dataclass(eq=False)
class LinearModel:
    """A linear classifier over standardized columns.

    ``kind`` is "logistic" (sigmoid of the linear score, threshold 0.5, the
    boundary itself mapping to label 1) or "lasso" (raw linear output
    thresholded at 0.5). ``history`` records the training objective: per
    iteration for logistic, per coordinate-descent sweep for lasso.
    ``nonzero`` records the lasso sparsity pattern.
    """

    kind: str
    weights: np.ndarray
    intercept: float
    input_mean: np.ndarray
    input_scale: np.ndarray
    nonzero: tuple[int, ...] = ()
    history: tuple[float, ...] = ()


@dataclass(eq=False)
class TreeNode:
    """Internal node (feature/threshold/children) or leaf (class counts)."""

    feature: int = -1
    threshold: float = 0.0
    left: "TreeNode | None" = None
    right: "TreeNode | None" = None
    counts: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.counts is not None


@dataclass(eq=False)
class Forest:
    trees: list[TreeNode]
    n_trees: int
    seed: int
    n_features: int


def _standardize_fit(X: np.ndarray):
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    scale[scale == 0.0] = 1.0
    return (X - mean) / scale, mean, scale


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _check_train_input(X, y, minimum=2):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    y = np.asarray(y, dtype=np.int64)
    if X.ndim != 2 or X.shape[0] == 0:
        raise ValueError("training data must be a non-empty 2-D array")
    if X.shape[0] < minimum:
        raise ValueError(f"training needs at least {minimum} sample(s)")
    if y.shape != (X.shape[0],):
        raise ValueError("labels must align with rows")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0 or 1")
    return X, y


def train_logistic(X, y, lr: float = 0.1, iters: int = 500) -> LinearModel:
    """Full-batch gradient descent on the mean negative log-likelihood.

    Deterministic: zero initialization, no penalty. Columns are standardized
    internally with training statistics so the fixed step size is safe across
    feature scales.
    """
    X, y = _check_train_input(X, y)
    Xs, mean, scale = _standardize_fit(X)
    n = len(y)
    w = np.zeros(Xs.shape[1])
    b = 0.0
    history = []
    for _ in range(iters):
        z = Xs @ w + b
        p = _sigmoid(z)
        history.append(_logistic_nll(z, y))
        resid = p - y
        w -= lr * (Xs.T @ resid) / n
        b -= lr * float(resid.mean())
    return LinearModel("logistic", w, b, mean, scale, history=tuple(history))


def _logistic_nll(z: np.ndarray, y: np.ndarray) -> float:
    # mean -[y log p + (1-y) log(1-p)] via the numerically stable softplus form
    return float((np.logaddexp(0.0, z) - y * z).mean())


def train_lasso(X, y, lam: float = 0.1, iters: int = 1000, tol: float = 1e-12) -> LinearModel:
    """Coordinate descent on 0.5 * mean squared error + lam * sum |w_i|.

    Targets are the {0,1} labels; the intercept is unpenalized and columns are
    standardized internally, so each coordinate update is the exact soft
    threshold w_j = S(rho_j, lam). The objective is non-increasing across
    sweeps; ``iters`` bounds the number of full sweeps.
    """
    if lam < 0.0:
        raise ValueError("lam must be >= 0")
    X, y = _check_train_input(X, y)
    Xs, mean, scale = _standardize_fit(X)
    n, p = Xs.shape
    yf = y.astype(np.float64)
    w = np.zeros(p)
    b = float(yf.mean())
    col_sq = (Xs * Xs).sum(axis=0) / n  # 1.0 for live columns, 0.0 for constant ones
    residual = yf - b  # y - b - Xs @ w, maintained incrementally
    history = [_lasso_objective(residual, w, lam)]
    for _ in range(iters):
        w_before = w.copy()
        b_shift = float(residual.mean())
        b += b_shift
        residual -= b_shift
        for j in range(p):
            if col_sq[j] == 0.0:
                continue
            old = w[j]
            rho = float(Xs[:, j] @ residual) / n + col_sq[j] * old
            new = math.copysign(max(abs(rho) - lam, 0.0), rho) / col_sq[j]
            if new != old:
                residual -= (new - old) * Xs[:, j]
                w[j] = new
        history.append(_lasso_objective(residual, w, lam))
        if np.max(np.abs(w - w_before)) < tol:
            break
    nonzero = tuple(int(j) for j in np.nonzero(w)[0])
    return LinearModel("lasso", w, b, mean, scale, nonzero=nonzero, history=tuple(history))


def _lasso_objective(residual: np.ndarray, w: np.ndarray, lam: float) -> float:
    return float(0.5 * (residual * residual).mean() + lam * np.abs(w).sum())


def _gini_split_scores(values: np.ndarray, labels: np.ndarray):
    """Best threshold for one feature: (weighted gini, threshold) or None."""
    order = np.argsort(values, kind="stable")
    v = values[order]
    ones = np.cumsum(labels[order])
    n = len(v)
    cut = np.nonzero(v[:-1] < v[1:])[0]
    if len(cut) == 0:
        return None
    n_left = cut + 1.0
    n_right = n - n_left
    left_ones = ones[cut]
    right_ones = ones[-1] - left_ones
    gini_left = 1.0 - (left_ones / n_left) ** 2 - (1.0 - left_ones / n_left) ** 2
    gini_right = 1.0 - (right_ones / n_right) ** 2 - (1.0 - right_ones / n_right) ** 2
    weighted = (n_left * gini_left + n_right * gini_right) / n
    best = int(np.argmin(weighted))
    threshold = 0.5 * (v[cut[best]] + v[cut[best] + 1])
    return float(weighted[best]), threshold


def _build_tree(X: np.ndarray, y: np.ndarray, idx: np.ndarray, rng, n_candidates: int) -> TreeNode:
    counts = np.bincount(y[idx], minlength=2).astype(np.float64)
    if len(idx) < 2 or counts[0] == 0.0 or counts[1] == 0.0:
        return TreeNode(counts=counts)
    candidates = rng.choice(X.shape[1], size=n_candidates, replace=False)
    best = None
    for f in candidates:
        scored = _gini_split_scores(X[idx, f], y[idx])
        if scored is None:
            continue
        impurity, threshold = scored
        if best is None or impurity < best[0]:
            best = (impurity, int(f), threshold)
    if best is None:
        return TreeNode(counts=counts)
    _, feature, threshold = best
    mask = X[idx, feature] < threshold
    left = _build_tree(X, y, idx[mask], rng, n_candidates)
    right = _build_tree(X, y, idx[~mask], rng, n_candidates)
    return TreeNode(feature=feature, threshold=threshold, left=left, right=right)


def train_forest(X, y, n_trees: int = 100, seed: int = 0) -> Forest:
    """Bootstrap-aggregated Gini trees over ceil(sqrt(F)) feature candidates per split.

    Trees grow until pure or down to fewer than 2 samples; everything is
    deterministic given the seed, with one substream per tree.
    """
    X, y = _check_train_input(X, y, minimum=1)
    n, n_features = X.shape
    n_candidates = max(1, math.ceil(math.sqrt(n_features)))
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, size=n)
        trees.append(_build_tree(X, y, boot, rng, n_candidates))
    return Forest(trees=trees, n_trees=n_trees, seed=seed, n_features=n_features)


def _tree_predict(node: TreeNode, row: np.ndarray) -> int:
    while not node.is_leaf:
        node = node.left if row[node.feature] < node.threshold else node.right
    return int(np.argmax(node.counts))  # equal counts resolve to 0


def predict_cls(model, X) -> np.ndarray:
    """Predicted labels per row; see LinearModel / Forest for the tie rules."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if isinstance(model, LinearModel):
        if X.shape[1] != len(model.weights):
            raise ValueError(f"feature width {X.shape[1]} != training width {len(model.weights)}")
        z = ((X - model.input_mean) / model.input_scale) @ model.weights + model.intercept
        if model.kind == "logistic":
            return (_sigmoid(z) >= 0.5).astype(np.int64)
        return (z >= 0.5).astype(np.int64)
    if isinstance(model, Forest):
        if X.shape[1] != model.n_features:
            raise ValueError(f"feature width {X.shape[1]} != training width {model.n_features}")
        votes = np.zeros(len(X), dtype=np.int64)
        for tree in model.trees:
            votes += np.array([_tree_predict(tree, row) for row in X])
        return (votes * 2 > model.n_trees).astype(np.int64)  # exact ties go to 0
    raise TypeError(f"unsupported model type {type(model).__name__}")


def save_linear(model: LinearModel, path) -> None:
    payload = {
        "kind": model.kind,
        "weights": model.weights.tolist(),
        "intercept": model.intercept,
        "input_mean": model.input_mean.tolist(),
        "input_scale": model.input_scale.tolist(),
        "nonzero": list(model.nonzero),
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_linear(path) -> LinearModel:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return LinearModel(
        kind=payload["kind"],
        weights=np.asarray(payload["weights"], dtype=np.float64),
        intercept=float(payload["intercept"]),
        input_mean=np.asarray(payload["input_mean"], dtype=np.float64),
        input_scale=np.asarray(payload["input_scale"], dtype=np.float64),
        nonzero=tuple(payload["nonzero"]),
    )


def _tree_to_rows(node: TreeNode, rows: list) -> int:
    """Flatten to arrays of (feature, threshold, left, right, counts); returns index."""
    index = len(rows)
    rows.append(None)
    if node.is_leaf:
        rows[index] = {"leaf": True, "counts": node.counts.tolist()}
    else:
        left = _tree_to_rows(node.left, rows)
        right = _tree_to_rows(node.right, rows)
        rows[index] = {
            "leaf": False,
            "feature": node.feature,
            "threshold": node.threshold,
            "left": left,
            "right": right,
        }
    return index


def _tree_from_rows(rows: list, index: int = 0) -> TreeNode:
    row = rows[index]
    if row["leaf"]:
        return TreeNode(counts=np.asarray(row["counts"], dtype=np.float64))
    return TreeNode(
        feature=int(row["feature"]),
        threshold=float(row["threshold"]),
        left=_tree_from_rows(rows, row["left"]),
        right=_tree_from_rows(rows, row["right"]),
    )


def save_forest(model: Forest, path) -> None:
    serialized = []
    for tree in model.trees:
        rows: list = []
        _tree_to_rows(tree, rows)
        serialized.append(rows)
    payload = {
        "n_trees": model.n_trees,
        "seed": model.seed,
        "n_features": model.n_features,
        "trees": serialized,
    }
    Path(path).write_text(json.dumps(payload), encoding="utf-8")


def load_forest(path) -> Forest:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return Forest(
        trees=[_tree_from_rows(rows) for rows in payload["trees"]],
        n_trees=int(payload["n_trees"]),
        seed=int(payload["seed"]),
        n_features=int(payload["n_features"]),
    )
