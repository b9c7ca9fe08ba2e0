"""
Platt scaling of raw classifier scores.

calibrated(s) = 1 / (1 + exp(A * s + B)), fitted by damped Newton on the
logistic loss against smoothed targets. With scale='logit' the sigmoid is
fitted on log(s / (1 - s)) instead of s.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Sequence

import numpy as np
from scipy.special import expit, logit

from stabilis.errors import CalibrationError

logger = logging.getLogger(__name__)

SCALES = ('raw', 'logit')
MAX_ITER = 200
GRAD_TOL = 1e-10
MIN_STEP = 1e-10
HESSIAN_RIDGE = 1e-12
LOGIT_CLIP = 1e-6

_LOWEST = np.finfo(float).tiny
_HIGHEST = 1.0 - np.finfo(float).epsneg


@dataclass(frozen=True)
class PlattModel:
    A: float
    B: float
    scale: str = 'raw'

    @property
    def increasing(self) -> bool:
        """True when a higher raw score maps to a higher calibrated score."""
        return self.A < 0

    def to_dict(self) -> Dict[str, Any]:
        return {'A': float(self.A), 'B': float(self.B), 'scale': self.scale}

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'PlattModel':
        return cls(A=float(data['A']), B=float(data['B']), scale=data.get('scale', 'raw'))


def _transform(scores: np.ndarray, scale: str) -> np.ndarray:
    if scale == 'logit':
        return logit(np.clip(scores, LOGIT_CLIP, 1.0 - LOGIT_CLIP))
    return scores


def _loss(s: np.ndarray, t: np.ndarray, A: float, B: float) -> float:
    f = A * s + B
    return float(np.sum(np.logaddexp(0.0, f) - (1.0 - t) * f))


def fit_platt(raw_scores: Sequence[float], labels: Sequence[int], scale: str = 'raw') -> PlattModel:
    """
    Fit (A, B) with Newton steps and backtracking on the step length.

    Args:
        raw_scores: Finite classifier scores.
        labels: 0/1 outcomes; both classes required.
        scale: 'raw' or 'logit'.

    Returns:
        PlattModel. Deterministic: the start point is A=0,
        B=log((N- + 1) / (N+ + 1)).
    """
    if scale not in SCALES:
        raise CalibrationError(f"Unknown calibration scale '{scale}'")
    scores = np.asarray(raw_scores, dtype=float)
    y = np.asarray(labels, dtype=int)
    if scores.shape != y.shape:
        raise CalibrationError(f"{scores.size} scores but {y.size} labels")
    if not np.all(np.isfinite(scores)):
        raise CalibrationError("Calibration scores must be finite")
    n_pos = int(np.sum(y == 1))
    n_neg = int(y.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise CalibrationError(f"Calibration needs both classes (positives={n_pos}, negatives={n_neg})")

    s = _transform(scores, scale)
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    if np.ptp(s) == 0:
        # slope is unidentifiable; match the mean target
        mean_t = float(np.mean(t))
        logger.warning("Calibration scores are all equal; fitting an intercept only")
        return PlattModel(A=0.0, B=float(np.log((1.0 - mean_t) / mean_t)), scale=scale)
    A, B = 0.0, float(np.log((n_neg + 1.0) / (n_pos + 1.0)))
    loss = _loss(s, t, A, B)

    for iteration in range(MAX_ITER):
        p = expit(-(A * s + B))
        d1 = t - p
        d2 = p * (1.0 - p)
        g1, g2 = float(np.dot(s, d1)), float(np.sum(d1))
        if abs(g1) < GRAD_TOL and abs(g2) < GRAD_TOL:
            break
        h11 = float(np.dot(s * s, d2)) + HESSIAN_RIDGE
        h22 = float(np.sum(d2)) + HESSIAN_RIDGE
        h21 = float(np.dot(s, d2))
        det = h11 * h22 - h21 * h21
        dA = -(h22 * g1 - h21 * g2) / det
        dB = -(-h21 * g1 + h11 * g2) / det
        slope = g1 * dA + g2 * dB

        step = 1.0
        while step >= MIN_STEP:
            candidate = _loss(s, t, A + step * dA, B + step * dB)
            if candidate < loss + 1e-4 * step * slope:
                A, B, loss = A + step * dA, B + step * dB, candidate
                break
            step /= 2.0
        else:
            logger.debug(f"Platt line search stalled at iteration {iteration}")
            break

    if not (np.isfinite(A) and np.isfinite(B)):
        raise CalibrationError("Platt fit diverged")
    return PlattModel(A=A, B=B, scale=scale)


def apply_platt(model: PlattModel, scores: Sequence[float]) -> np.ndarray:
    """Elementwise sigmoid map; output strictly inside (0, 1)."""
    s = _transform(np.asarray(scores, dtype=float), model.scale)
    return np.clip(expit(-(model.A * s + model.B)), _LOWEST, _HIGHEST)
