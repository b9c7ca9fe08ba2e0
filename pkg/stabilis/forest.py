"""
Random forest and gradient-boosted tree classifiers over FeatureMatrix.

Trees are grown on a quantile-binned copy of the training matrix (at most
255 candidate thresholds per column) and stored as flat arrays; prediction
routes raw values with `x <= threshold`.

Serialized model format (JSON text):

    {"format": "stabilis-ensemble", "version": 1, "kind": "rf" | "gbt",
     "params": {...}, "columns": [...], "base_score": float | null,
     "learning_rate": float | null, "constant": float | null,
     "loss_history": [...],
     "trees": [{"feature": [...], "threshold": [...], "left": [...],
                "right": [...], "value": [...]}, ...]}

Leaves have feature -1. Floats are written with full repr precision so a
save/load round trip reproduces scores exactly.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

import numpy as np
from scipy.special import expit

from stabilis.encoding import FeatureMatrix
from stabilis.errors import ModelError, ParameterError

logger = logging.getLogger(__name__)

MODEL_FORMAT = 'stabilis-ensemble'
MODEL_VERSION = 1
MAX_BINS = 255
MIN_GAIN = 1e-12

# Fixed boosting regularization; only the six searched parameters vary.
GBT_LAMBDA = 1.0


@dataclass(frozen=True)
class RFParams:
    n_estimators: int = 500
    max_features: float = 0.3
    seed: int = 22
    max_depth: Optional[int] = None
    min_samples_leaf: int = 1

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ParameterError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if not 0 < self.max_features <= 1:
            raise ParameterError(f"max_features must be in (0, 1], got {self.max_features}")
        if self.max_depth is not None and self.max_depth < 1:
            raise ParameterError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_samples_leaf < 1:
            raise ParameterError(f"min_samples_leaf must be >= 1, got {self.min_samples_leaf}")


@dataclass(frozen=True)
class GBTParams:
    n_estimators: int = 500
    learning_rate: float = 0.05
    subsample: float = 0.8
    max_depth: int = 6
    colsample_bytree: float = 0.8
    min_child_weight: float = 1.0
    seed: int = 22

    def __post_init__(self):
        if self.n_estimators < 1:
            raise ParameterError(f"n_estimators must be >= 1, got {self.n_estimators}")
        if not 0 < self.learning_rate <= 1:
            raise ParameterError(f"learning_rate must be in (0, 1], got {self.learning_rate}")
        if not 0 < self.subsample <= 1:
            raise ParameterError(f"subsample must be in (0, 1], got {self.subsample}")
        if not 0 < self.colsample_bytree <= 1:
            raise ParameterError(f"colsample_bytree must be in (0, 1], got {self.colsample_bytree}")
        if self.max_depth < 1:
            raise ParameterError(f"max_depth must be >= 1, got {self.max_depth}")
        if self.min_child_weight < 0:
            raise ParameterError(f"min_child_weight must be >= 0, got {self.min_child_weight}")


@dataclass
class DecisionTree:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def predict(self, X: np.ndarray) -> np.ndarray:
        node = np.zeros(X.shape[0], dtype=np.int64)
        active = np.nonzero(self.feature[node] >= 0)[0]
        while active.size:
            current = node[active]
            go_left = X[active, self.feature[current]] <= self.threshold[current]
            node[active] = np.where(go_left, self.left[current], self.right[current])
            active = active[self.feature[node[active]] >= 0]
        return self.value[node]

    def to_dict(self) -> Dict[str, List[Any]]:
        return {
            'feature': [int(v) for v in self.feature],
            'threshold': [float(v) for v in self.threshold],
            'left': [int(v) for v in self.left],
            'right': [int(v) for v in self.right],
            'value': [float(v) for v in self.value],
        }

    @classmethod
    def from_dict(cls, data: Dict[str, List[Any]]) -> 'DecisionTree':
        return cls(
            feature=np.array(data['feature'], dtype=np.int64),
            threshold=np.array(data['threshold'], dtype=float),
            left=np.array(data['left'], dtype=np.int64),
            right=np.array(data['right'], dtype=np.int64),
            value=np.array(data['value'], dtype=float),
        )


@dataclass
class EnsembleModel:
    kind: str
    trees: List[DecisionTree]
    params: Dict[str, Any]
    columns: List[str]
    base_score: Optional[float] = None
    learning_rate: Optional[float] = None
    constant: Optional[float] = None
    loss_history: List[float] = field(default_factory=list)


class _BinnedMatrix:
    """Column-wise bin codes where `code <= k` is equivalent to `x <= thresholds[k]`."""

    def __init__(self, X: np.ndarray, max_bins: int = MAX_BINS):
        n_rows, n_cols = X.shape
        self.codes = np.zeros((n_rows, n_cols), dtype=np.uint8)
        self.thresholds: List[np.ndarray] = []
        n_edges = np.zeros(n_cols, dtype=np.int64)
        for j in range(n_cols):
            column = X[:, j]
            unique = np.unique(column)
            if unique.size <= 1:
                edges = unique[:0]
            elif unique.size <= max_bins + 1:
                edges = unique[:-1]
            else:
                qs = np.linspace(0, 1, max_bins + 1)[1:-1]
                edges = np.unique(np.quantile(column, qs, method='lower'))
                edges = edges[edges < unique[-1]]
            if edges.size:
                uppers = unique[np.searchsorted(unique, edges, side='right')]
                middle = edges + (uppers - edges) / 2.0
                thresholds = np.where(middle < uppers, middle, edges)
                self.codes[:, j] = np.searchsorted(edges, column, side='left')
            else:
                thresholds = edges
            self.thresholds.append(thresholds)
            n_edges[j] = edges.size
        self.n_edges = n_edges


def _histograms(codes: np.ndarray, stats: Tuple[np.ndarray, ...]) -> List[np.ndarray]:
    """Cumulative per-bin sums of each stat, shape (n_features, MAX_BINS + 1)."""
    m, f = codes.shape
    width = MAX_BINS + 1
    flat = (codes.astype(np.intp) + (np.arange(f, dtype=np.intp) * width)[None, :]).ravel()
    out = []
    for stat in stats:
        weights = np.broadcast_to(stat[:, None], (m, f)).ravel()
        hist = np.bincount(flat, weights=weights, minlength=f * width).reshape(f, width)
        out.append(np.cumsum(hist, axis=1))
    return out


class _GiniCriterion:
    """Weighted Gini impurity decrease over bootstrap multiplicities."""

    def __init__(self, weight: np.ndarray, positive: np.ndarray, min_leaf: float):
        self.stats = (weight, positive)
        self.min_leaf = min_leaf

    def totals(self, rows: np.ndarray) -> Tuple[float, float]:
        return float(self.stats[0][rows].sum()), float(self.stats[1][rows].sum())

    def is_terminal(self, totals: Tuple[float, float]) -> bool:
        w, p = totals
        return p <= 0 or p >= w or w < 2 * self.min_leaf

    def gains(self, cums: List[np.ndarray], totals: Tuple[float, float]) -> np.ndarray:
        w, p = totals
        wl, pl = cums
        wr, pr = w - wl, p - pl
        with np.errstate(divide='ignore', invalid='ignore'):
            child = 2 * pl * (wl - pl) / wl + 2 * pr * (wr - pr) / wr
        gain = 2 * p * (w - p) / w - child
        valid = (wl >= self.min_leaf) & (wr >= self.min_leaf)
        return np.where(valid, gain, -np.inf)

    def leaf_value(self, totals: Tuple[float, float]) -> float:
        w, p = totals
        return p / w


class _NewtonCriterion:
    """Second-order logistic-loss gain with L2 leaf regularization."""

    def __init__(self, grad: np.ndarray, hess: np.ndarray, min_child_weight: float, reg_lambda: float = GBT_LAMBDA):
        self.stats = (grad, hess)
        self.min_child_weight = min_child_weight
        self.reg_lambda = reg_lambda

    def totals(self, rows: np.ndarray) -> Tuple[float, float]:
        return float(self.stats[0][rows].sum()), float(self.stats[1][rows].sum())

    def is_terminal(self, totals: Tuple[float, float]) -> bool:
        return totals[1] < 2 * self.min_child_weight

    def gains(self, cums: List[np.ndarray], totals: Tuple[float, float]) -> np.ndarray:
        g, h = totals
        gl, hl = cums
        gr, hr = g - gl, h - hl
        lam = self.reg_lambda
        gain = 0.5 * (gl ** 2 / (hl + lam) + gr ** 2 / (hr + lam) - g ** 2 / (h + lam))
        valid = (hl >= self.min_child_weight) & (hr >= self.min_child_weight)
        return np.where(valid, gain, -np.inf)

    def leaf_value(self, totals: Tuple[float, float]) -> float:
        g, h = totals
        return -g / (h + self.reg_lambda)


def _grow_tree(
    binned: _BinnedMatrix,
    rows: np.ndarray,
    criterion: Any,
    rng: np.random.Generator,
    candidates: np.ndarray,
    n_per_node: Optional[int],
    max_depth: Optional[int],
) -> DecisionTree:
    """
    Depth-first growth. With `n_per_node` set, each node draws that many
    features without replacement from `candidates` and keeps drawing further
    batches until a valid split appears or the candidates run out.
    """
    feature: List[int] = []
    threshold: List[float] = []
    left: List[int] = []
    right: List[int] = []
    value: List[float] = []

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    stack = [(new_node(), rows, 0)]
    while stack:
        node, node_rows, depth = stack.pop()
        totals = criterion.totals(node_rows)
        value[node] = criterion.leaf_value(totals)
        if criterion.is_terminal(totals) or (max_depth is not None and depth >= max_depth):
            continue

        order = rng.permutation(candidates) if n_per_node is not None else candidates
        batch = n_per_node or len(order)
        best = None
        for start in range(0, len(order), batch):
            features = order[start:start + batch]
            features = features[binned.n_edges[features] > 0]
            if features.size == 0:
                continue
            codes = binned.codes[np.ix_(node_rows, features)]
            cums = _histograms(codes, tuple(s[node_rows] for s in criterion.stats))
            gains = criterion.gains(cums, totals)
            # codes above the last edge are not thresholds
            bins = np.arange(gains.shape[1])[None, :]
            gains = np.where(bins < binned.n_edges[features][:, None], gains, -np.inf)
            flat = int(np.argmax(gains))
            f_pos, k = divmod(flat, gains.shape[1])
            if gains[f_pos, k] > MIN_GAIN:
                best = (int(features[f_pos]), k)
                break
        if best is None:
            continue

        j, k = best
        goes_left = binned.codes[node_rows, j] <= k
        left_id, right_id = new_node(), new_node()
        feature[node] = j
        threshold[node] = float(binned.thresholds[j][k])
        left[node] = left_id
        right[node] = right_id
        stack.append((right_id, node_rows[~goes_left], depth + 1))
        stack.append((left_id, node_rows[goes_left], depth + 1))

    return DecisionTree(
        feature=np.array(feature, dtype=np.int64),
        threshold=np.array(threshold, dtype=float),
        left=np.array(left, dtype=np.int64),
        right=np.array(right, dtype=np.int64),
        value=np.array(value, dtype=float),
    )


def _check_training_input(matrix: FeatureMatrix) -> Optional[float]:
    """Return the constant score for single-class (or empty) input, None otherwise."""
    if len(matrix) == 0:
        raise ModelError("Cannot train on an empty matrix")
    if not np.all(np.isfinite(matrix.values)):
        raise ModelError("Training matrix contains non-finite values")
    prevalence = float(matrix.labels.mean())
    if prevalence in (0.0, 1.0):
        logger.warning(f"Training data has a single class; degenerate model with constant score {prevalence}")
        return prevalence
    return None


def train_rf(matrix: FeatureMatrix, params: RFParams, jobs: int = 1) -> EnsembleModel:
    """
    Probabilistic random forest with Gini splits.

    Args:
        matrix: Training rows; both classes expected.
        params: Forest size, per-split feature fraction and seed.
        jobs: Worker threads for tree growth; trees use independent random
            streams derived from (seed, tree index), so results do not
            depend on this value.

    Returns:
        EnsembleModel whose score is the mean of per-tree leaf class-1 fractions.
    """
    constant = _check_training_input(matrix)
    model = EnsembleModel('rf', [], asdict(params), list(matrix.columns), constant=constant)
    if constant is not None:
        return model

    X, y = matrix.values, matrix.labels.astype(float)
    n_rows, n_cols = X.shape
    binned = _BinnedMatrix(X)
    n_per_node = max(1, math.ceil(params.max_features * n_cols))
    candidates = np.arange(n_cols)

    def grow(index: int) -> DecisionTree:
        rng = np.random.default_rng([params.seed, index])
        weight = np.bincount(rng.integers(0, n_rows, size=n_rows), minlength=n_rows).astype(float)
        rows = np.nonzero(weight)[0]
        criterion = _GiniCriterion(weight, weight * y, params.min_samples_leaf)
        return _grow_tree(binned, rows, criterion, rng, candidates, n_per_node, params.max_depth)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            model.trees = list(executor.map(grow, range(params.n_estimators)))
    else:
        model.trees = [grow(i) for i in range(params.n_estimators)]
    logger.debug(f"Trained random forest: {params.n_estimators} trees on {n_rows}x{n_cols}")
    return model


def _logloss(y: np.ndarray, margin: np.ndarray) -> float:
    # log(1 + exp(m)) - y*m, computed stably
    return float(np.mean(np.logaddexp(0.0, margin) - y * margin))


def train_gbt(matrix: FeatureMatrix, params: GBTParams) -> EnsembleModel:
    """
    Stagewise boosting on logistic loss with Newton leaf values.

    Args:
        matrix: Training rows; both classes expected.
        params: The six searched boosting parameters and the seed.

    Returns:
        EnsembleModel scoring sigmoid(base + learning_rate * sum of tree outputs);
        `loss_history` holds the mean training loss after each round.
    """
    constant = _check_training_input(matrix)
    model = EnsembleModel('gbt', [], asdict(params), list(matrix.columns), constant=constant)
    if constant is not None:
        return model

    X, y = matrix.values, matrix.labels.astype(float)
    n_rows, n_cols = X.shape
    binned = _BinnedMatrix(X)
    prevalence = float(y.mean())
    base = math.log(prevalence / (1.0 - prevalence))
    margin = np.full(n_rows, base)
    n_sub = max(1, int(round(params.subsample * n_rows)))
    n_colsample = max(1, int(round(params.colsample_bytree * n_cols)))

    for round_index in range(params.n_estimators):
        rng = np.random.default_rng([params.seed, round_index])
        prob = expit(margin)
        grad, hess = prob - y, prob * (1.0 - prob)
        rows = np.sort(rng.choice(n_rows, size=n_sub, replace=False)) if n_sub < n_rows else np.arange(n_rows)
        columns = np.sort(rng.choice(n_cols, size=n_colsample, replace=False)) if n_colsample < n_cols else np.arange(n_cols)
        criterion = _NewtonCriterion(grad, hess, params.min_child_weight)
        tree = _grow_tree(binned, rows, criterion, rng, columns, None, params.max_depth)
        model.trees.append(tree)
        margin = margin + params.learning_rate * tree.predict(X)
        model.loss_history.append(_logloss(y, margin))

    model.base_score = base
    model.learning_rate = params.learning_rate
    logger.debug(f"Trained boosted trees: {params.n_estimators} rounds, final loss {model.loss_history[-1]:.6f}")
    return model


def _check_columns(model: EnsembleModel, columns: List[str]):
    if list(columns) == model.columns:
        return
    for position, expected in enumerate(model.columns):
        if position >= len(columns):
            raise ModelError(f"Matrix is missing column '{expected}'", column=expected)
        if columns[position] != expected:
            raise ModelError(
                f"Column {position} is '{columns[position]}', model expects '{expected}'",
                column=columns[position],
            )
    extra = columns[len(model.columns)]
    raise ModelError(f"Matrix has unexpected column '{extra}'", column=extra)


def predict(model: EnsembleModel, matrix: FeatureMatrix) -> np.ndarray:
    """One score in [0, 1] per row; a pure function of model and row."""
    _check_columns(model, matrix.columns)
    n = len(matrix)
    if n == 0:
        return np.zeros(0)
    if model.constant is not None:
        return np.full(n, model.constant)
    X = matrix.values
    if model.kind == 'rf':
        total = np.zeros(n)
        for tree in model.trees:
            total += tree.predict(X)
        return np.clip(total / len(model.trees), 0.0, 1.0)
    margin = np.full(n, model.base_score)
    for tree in model.trees:
        margin = margin + model.learning_rate * tree.predict(X)
    return expit(margin)


def model_to_dict(model: EnsembleModel) -> Dict[str, Any]:
    return {
        'format': MODEL_FORMAT,
        'version': MODEL_VERSION,
        'kind': model.kind,
        'params': model.params,
        'columns': model.columns,
        'base_score': model.base_score,
        'learning_rate': model.learning_rate,
        'constant': model.constant,
        'loss_history': [float(v) for v in model.loss_history],
        'trees': [tree.to_dict() for tree in model.trees],
    }


def model_from_dict(data: Dict[str, Any]) -> EnsembleModel:
    if data.get('format') != MODEL_FORMAT:
        raise ModelError(f"Not a {MODEL_FORMAT} document")
    if data.get('version') != MODEL_VERSION:
        raise ModelError(f"Unsupported model version {data.get('version')}")
    return EnsembleModel(
        kind=data['kind'],
        trees=[DecisionTree.from_dict(t) for t in data['trees']],
        params=dict(data['params']),
        columns=list(data['columns']),
        base_score=data.get('base_score'),
        learning_rate=data.get('learning_rate'),
        constant=data.get('constant'),
        loss_history=list(data.get('loss_history') or []),
    )


def save_model(model: EnsembleModel, path: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(model_to_dict(model), f)
    return path


def load_model(path: Any) -> EnsembleModel:
    with open(path, 'r', encoding='utf-8') as f:
        return model_from_dict(json.load(f))
