"""Single exponential smoothing of per-case score series."""

from dataclasses import dataclass, replace
from typing import List, Sequence

import numpy as np

from stabilis.errors import ParameterError
from stabilis.metrics import ScoreSeries


@dataclass(frozen=True)
class SmoothingParams:
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.alpha <= 1.0:
            raise ParameterError(f"alpha must be in [0, 1], got {self.alpha}")


def smooth(series: ScoreSeries, params: SmoothingParams) -> ScoreSeries:
    """s_1 = y_1; s_t = (1 - alpha) * y_t + alpha * s_{t-1}. Causal."""
    if len(series) == 0:
        raise ParameterError(f"Cannot smooth an empty series (case '{series.case_id}')")
    alpha = params.alpha
    out = [float(series.scores[0])]
    for y in series.scores[1:]:
        out.append((1.0 - alpha) * float(y) + alpha * out[-1])
    return replace(series, scores=np.array(out))


def smooth_all(series_list: Sequence[ScoreSeries], params: SmoothingParams) -> List[ScoreSeries]:
    return [smooth(s, params) for s in series_list]
