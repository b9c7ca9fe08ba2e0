"""
Experiment orchestration: approach assembly, random-search hyperparameter
optimization under three validation strategies, calibration, and test-set
evaluation with a smoothing sweep.

Seeds: every random stream is derived from the top-level seed with
`derive_seed(seed, *path)`. Search runs use (seed, iteration, run), the
final model (seed, 'final'), the calibration model (seed, 'calibration'),
inter-run checks (seed, 'interrun', run) and per-bucket models add the
bucket length to their run seed.
"""

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd

from stabilis.calibration import PlattModel, apply_platt, fit_platt
from stabilis.encoding import (
    EncoderSpec,
    LabeledPrefix,
    bucket_by_length,
    clip_prefix,
    encode,
    extract_prefixes,
    fit_encoder,
    route_bucket,
)
from stabilis.errors import (
    CalibrationError,
    EmptyLogError,
    MetricError,
    ModelError,
    ParameterError,
    SearchError,
    SplitError,
    StabilisError,
)
from stabilis.event_log import (
    EventLog,
    LabelingRule,
    LogStats,
    SplitSpec,
    apply_labeling,
    collapse_rare_levels,
    derive_features,
    fill_and_flag_missing,
    filter_incomplete_cases,
    log_statistics,
    suggest_truncation,
    temporal_split,
    truncate_traces,
)
from stabilis.forest import (
    EnsembleModel,
    GBTParams,
    RFParams,
    model_from_dict,
    model_to_dict,
    predict,
    train_gbt,
    train_rf,
)
from stabilis.metrics import EvaluationReport, ScoreSeries, auc, evaluate_series, mspd, overall_auc
from stabilis.smoothing import SmoothingParams, smooth_all
from stabilis.utils import DEFAULT_ALPHA_GRID, DEFAULTS, derive_seed, parse_alpha_grid

logger = logging.getLogger(__name__)

STRATEGIES = ('auc_1run', 'auc_5run', 'combined_5run')
CALIBRATION_MODES = ('per_bucket', 'pooled', 'none')
SINGLE_KEY = 0
APPROACH_FORMAT = 'stabilis-approach'
APPROACH_VERSION = 1


@dataclass(frozen=True)
class ApproachSpec:
    name: str
    encoder: str
    bucketing: str
    classifier: str

    @property
    def multi(self) -> bool:
        return self.bucketing == 'prefix_length'


APPROACHES: Dict[str, ApproachSpec] = {
    'RF_agg': ApproachSpec('RF_agg', 'aggregation', 'single', 'rf'),
    'RF_idx_pad': ApproachSpec('RF_idx_pad', 'index_padded', 'single', 'rf'),
    'RF_idx_mul': ApproachSpec('RF_idx_mul', 'index_bucketed', 'prefix_length', 'rf'),
    'XGB_agg': ApproachSpec('XGB_agg', 'aggregation', 'single', 'gbt'),
    'XGB_idx_pad': ApproachSpec('XGB_idx_pad', 'index_padded', 'single', 'gbt'),
    'XGB_idx_mul': ApproachSpec('XGB_idx_mul', 'index_bucketed', 'prefix_length', 'gbt'),
}


def get_approach(name: str) -> ApproachSpec:
    if name not in APPROACHES:
        raise ParameterError(f"Unknown approach '{name}'; expected one of {sorted(APPROACHES)}")
    return APPROACHES[name]


# ----- search space -----

DISTRIBUTION_KINDS = ('uniform_int', 'uniform', 'log_uniform')


@dataclass(frozen=True)
class ParamDistribution:
    kind: str
    low: float
    high: float

    def __post_init__(self):
        if self.kind not in DISTRIBUTION_KINDS:
            raise ParameterError(f"Unknown distribution '{self.kind}'")
        if self.low > self.high:
            raise ParameterError(f"Empty range [{self.low}, {self.high}]")
        if self.kind == 'log_uniform' and self.low <= 0:
            raise ParameterError("log_uniform bounds must be positive")

    def sample(self, rng: np.random.Generator) -> Any:
        if self.kind == 'uniform_int':
            return int(rng.integers(int(self.low), int(self.high) + 1))
        if self.kind == 'uniform':
            return float(rng.uniform(self.low, self.high))
        value = math.exp(rng.uniform(math.log(self.low), math.log(self.high)))
        return float(min(max(value, self.low), self.high))

    def contains(self, value: Any) -> bool:
        return self.low <= value <= self.high


@dataclass(frozen=True)
class SearchSpace:
    classifier: str
    params: Dict[str, ParamDistribution]

    @classmethod
    def from_dict(cls, classifier: str, data: Dict[str, Dict[str, Any]]) -> 'SearchSpace':
        """Override entries of the default space, e.g. {"n_estimators": {"kind": "uniform_int", "low": 10, "high": 20}}."""
        params = dict(default_space(classifier).params)
        for name, spec in data.items():
            if name not in params:
                raise ParameterError(f"'{name}' is not a {classifier} hyperparameter")
            params[name] = ParamDistribution(spec.get('kind', params[name].kind), spec['low'], spec['high'])
        return cls(classifier, params)


RF_SPACE = SearchSpace('rf', {
    'n_estimators': ParamDistribution('uniform_int', 150, 1000),
    'max_features': ParamDistribution('log_uniform', 0.01, 0.9),
})

GBT_SPACE = SearchSpace('gbt', {
    'n_estimators': ParamDistribution('uniform_int', 150, 1000),
    'learning_rate': ParamDistribution('uniform', 0.01, 0.07),
    'subsample': ParamDistribution('uniform', 0.5, 1.0),
    'max_depth': ParamDistribution('uniform_int', 3, 9),
    'colsample_bytree': ParamDistribution('uniform', 0.5, 1.0),
    'min_child_weight': ParamDistribution('uniform_int', 1, 3),
})


def default_space(classifier: str) -> SearchSpace:
    if classifier == 'rf':
        return RF_SPACE
    if classifier == 'gbt':
        return GBT_SPACE
    raise ParameterError(f"Unknown classifier '{classifier}'")


def sample_config(space: SearchSpace, seed: int, iteration: int) -> Dict[str, Any]:
    """Deterministic draw for (seed, iteration); parameters drawn in name order."""
    rng = np.random.default_rng([seed, iteration])
    return {name: space.params[name].sample(rng) for name in sorted(space.params)}


def make_params(classifier: str, config: Dict[str, Any], seed: int) -> Any:
    if classifier == 'rf':
        return RFParams(
            n_estimators=int(config['n_estimators']),
            max_features=float(config['max_features']),
            seed=seed,
        )
    return GBTParams(
        n_estimators=int(config['n_estimators']),
        learning_rate=float(config['learning_rate']),
        subsample=float(config['subsample']),
        max_depth=int(config['max_depth']),
        colsample_bytree=float(config['colsample_bytree']),
        min_child_weight=float(config['min_child_weight']),
        seed=seed,
    )


def train_classifier(classifier: str, matrix: Any, config: Dict[str, Any], seed: int) -> EnsembleModel:
    params = make_params(classifier, config, seed)
    if classifier == 'rf':
        return train_rf(matrix, params)
    return train_gbt(matrix, params)


# ----- validation strategy -----

@dataclass(frozen=True)
class ValidationStrategy:
    kind: str = 'auc_1run'
    w_auc: float = 1.0
    w_stab: float = 5.0
    reuse_seed: bool = False

    def __post_init__(self):
        if self.kind not in STRATEGIES:
            raise ParameterError(f"Unknown strategy '{self.kind}'; expected one of {list(STRATEGIES)}")

    @property
    def runs(self) -> int:
        return 1 if self.kind == 'auc_1run' else 5

    def goodness(self, aucs: Sequence[float], stability: Optional[float] = None) -> float:
        """
        auc_1run: first run's AUC; auc_5run: mean AUC; combined_5run:
        (w_auc * mean AUC + w_stab * stability) / (w_auc + w_stab).
        """
        if self.kind == 'auc_1run':
            return float(aucs[0])
        mean_auc = float(np.mean(aucs))
        if self.kind == 'auc_5run':
            return mean_auc
        if stability is None:
            raise SearchError("Combined goodness needs an inter-run stability term")
        return (self.w_auc * mean_auc + self.w_stab * stability) / (self.w_auc + self.w_stab)


def stability_term(value: float, max_value: float) -> float:
    """1 - MSPD normalized by the largest MSPD among the candidates."""
    if max_value <= 0:
        return 1.0
    return 1.0 - value / max_value


def split_validation(train_log: EventLog, seed: int = 22, fraction: float = 0.8, attempts: int = 10) -> Tuple[EventLog, EventLog]:
    """
    Random case-level split of the training log into inner-train and validation.

    Both parts must contain both classes; the shuffle is retried with
    streams (seed, attempt) up to `attempts` times.
    """
    n = len(train_log.traces)
    if n < 5:
        raise SplitError(f"Validation split needs at least 5 training cases, got {n}")
    n_inner = min(max(int(round(fraction * n)), 1), n - 1)
    for attempt in range(attempts):
        order = np.random.default_rng([seed, attempt]).permutation(n)
        inner = [train_log.traces[i] for i in sorted(order[:n_inner])]
        validation = [train_log.traces[i] for i in sorted(order[n_inner:])]
        if {t.outcome for t in inner} >= {0, 1} and {t.outcome for t in validation} >= {0, 1}:
            return train_log.with_traces(inner), train_log.with_traces(validation)
        logger.debug(f"Validation split attempt {attempt} lacks a class; reshuffling")
    raise SplitError(f"No class-complete validation split found in {attempts} attempts")


# ----- trained approach -----

@dataclass
class TrainedApproach:
    """Encoders and models keyed by bucket length (0 for single classifiers)."""

    approach: ApproachSpec
    encoders: Dict[int, EncoderSpec]
    models: Dict[int, EnsembleModel]
    configs: Dict[int, Dict[str, Any]]
    min_prefix_len: int = 1
    calibrators: Dict[int, Optional[PlattModel]] = field(default_factory=dict)
    calibration_sources: Dict[int, str] = field(default_factory=dict)

    def route(self, length: int) -> int:
        if not self.approach.multi:
            return SINGLE_KEY
        return route_bucket(self.models.keys(), length)


def config_for(configs: Dict[int, Dict[str, Any]], bucket: int) -> Dict[str, Any]:
    """Bucket-specific config if present, else the nearest bucketed one, else the shared one."""
    if bucket in configs:
        return configs[bucket]
    bucketed = [k for k in configs if k != SINGLE_KEY]
    if bucketed:
        return configs[route_bucket(bucketed, bucket)]
    if SINGLE_KEY in configs:
        return configs[SINGLE_KEY]
    raise ParameterError(f"No hyperparameters for bucket {bucket}")


def train_approach(
    approach: ApproachSpec,
    log: EventLog,
    configs: Dict[int, Dict[str, Any]],
    seed: int,
    min_prefix_len: int = 1,
    max_prefix_len: Optional[int] = None,
) -> TrainedApproach:
    """
    Fit encoders and classifiers on every prefix of the log.

    Args:
        approach: Encoder, bucketing and classifier choice.
        log: Labeled training log.
        configs: Hyperparameters keyed by bucket (0 = shared).
        seed: Run seed; multiclassifier buckets derive their own from it.
        min_prefix_len / max_prefix_len: Prefix lengths to train on.
    """
    prefixes = extract_prefixes(log, min_prefix_len, max_prefix_len)
    if not prefixes:
        raise EmptyLogError("No training prefixes")
    schema = log.schema
    encoders: Dict[int, EncoderSpec] = {}
    models: Dict[int, EnsembleModel] = {}
    used: Dict[int, Dict[str, Any]] = {}

    if approach.multi:
        for length, bucket in bucket_by_length(prefixes).items():
            spec = fit_encoder(approach.encoder, bucket, schema, max_len=length)
            config = config_for(configs, length)
            encoders[length] = spec
            models[length] = train_classifier(approach.classifier, encode(spec, bucket), config, derive_seed(seed, length))
            used[length] = config
    else:
        spec = fit_encoder(approach.encoder, prefixes, schema)
        config = config_for(configs, SINGLE_KEY)
        encoders[SINGLE_KEY] = spec
        models[SINGLE_KEY] = train_classifier(approach.classifier, encode(spec, prefixes), config, seed)
        used[SINGLE_KEY] = config

    logger.debug(f"Trained {approach.name} with {len(models)} model(s) on {len(prefixes)} prefixes")
    return TrainedApproach(approach, encoders, models, used, min_prefix_len)


def _group_by_key(trained: TrainedApproach, prefixes: Sequence[LabeledPrefix]) -> Dict[int, List[int]]:
    groups: Dict[int, List[int]] = {}
    for i, prefix in enumerate(prefixes):
        groups.setdefault(trained.route(prefix.prefix_len), []).append(i)
    return groups


def score_prefixes(trained: TrainedApproach, prefixes: Sequence[LabeledPrefix], calibrated: bool = True) -> np.ndarray:
    """
    Score each prefix with the model of its bucket.

    Prefixes longer than a fixed-width encoder are clipped to its length;
    calibration is applied per bucket when `calibrated` is set.
    """
    scores = np.zeros(len(prefixes))
    for key, indices in _group_by_key(trained, prefixes).items():
        spec = trained.encoders[key]
        batch = [prefixes[i] for i in indices]
        if spec.max_len is not None:
            batch = [clip_prefix(p, spec.max_len) for p in batch]
        raw = predict(trained.models[key], encode(spec, batch))
        calibrator = trained.calibrators.get(key) if calibrated else None
        scores[indices] = apply_platt(calibrator, raw) if calibrator is not None else raw
    return scores


def fit_calibrators(
    trained: TrainedApproach,
    calibration_model: TrainedApproach,
    validation_prefixes: Sequence[LabeledPrefix],
    mode: str = 'per_bucket',
    scale: str = 'raw',
) -> TrainedApproach:
    """
    Fit Platt models on held-out scores and attach them to `trained`.

    `calibration_model` was trained without the validation cases and scores
    them; the pairs are grouped by the bucket `trained` routes them to.
    Buckets lacking a class fall back to the pooled model, and to the
    identity when the pooled data lacks a class too.
    """
    if mode not in CALIBRATION_MODES:
        raise ParameterError(f"Unknown calibration mode '{mode}'")
    trained.calibrators, trained.calibration_sources = {}, {}
    if mode == 'none':
        for key in trained.models:
            trained.calibrators[key] = None
            trained.calibration_sources[key] = 'identity'
        return trained

    raw = score_prefixes(calibration_model, validation_prefixes, calibrated=False)
    labels = np.array([p.outcome for p in validation_prefixes], dtype=int)
    keys = np.array([trained.route(p.prefix_len) for p in validation_prefixes], dtype=int)

    pooled = None
    try:
        pooled = fit_platt(raw, labels, scale)
    except CalibrationError as e:
        logger.warning(f"Pooled calibration failed: {e}")

    for key in trained.models:
        model, source = None, 'identity'
        mask = keys == key
        if mode == 'per_bucket' and len(set(labels[mask].tolist())) == 2:
            model, source = fit_platt(raw[mask], labels[mask], scale), 'bucket'
        elif pooled is not None:
            model, source = pooled, 'pooled'
        else:
            logger.warning(f"No calibration data with both classes for bucket {key}; scores left uncalibrated")
        trained.calibrators[key] = model
        trained.calibration_sources[key] = source
    return trained


def approach_to_dict(trained: TrainedApproach) -> Dict[str, Any]:
    return {
        'format': APPROACH_FORMAT,
        'version': APPROACH_VERSION,
        'approach': trained.approach.name,
        'min_prefix_len': trained.min_prefix_len,
        'buckets': [
            {
                'key': key,
                'config': trained.configs.get(key),
                'encoder': trained.encoders[key].to_dict(),
                'model': model_to_dict(trained.models[key]),
                'calibrator': trained.calibrators[key].to_dict() if trained.calibrators.get(key) else None,
                'calibration_source': trained.calibration_sources.get(key, 'identity'),
            }
            for key in sorted(trained.models)
        ],
    }


def approach_from_dict(data: Dict[str, Any]) -> TrainedApproach:
    if data.get('format') != APPROACH_FORMAT or data.get('version') != APPROACH_VERSION:
        raise ModelError(f"Not a {APPROACH_FORMAT} v{APPROACH_VERSION} document")
    trained = TrainedApproach(
        approach=get_approach(data['approach']),
        encoders={},
        models={},
        configs={},
        min_prefix_len=int(data.get('min_prefix_len', 1)),
    )
    for bucket in data['buckets']:
        key = int(bucket['key'])
        trained.encoders[key] = EncoderSpec.from_dict(bucket['encoder'])
        trained.models[key] = model_from_dict(bucket['model'])
        trained.configs[key] = bucket.get('config')
        calibrator = bucket.get('calibrator')
        trained.calibrators[key] = PlattModel.from_dict(calibrator) if calibrator else None
        trained.calibration_sources[key] = bucket.get('calibration_source', 'identity')
    return trained


def save_approach(trained: TrainedApproach, path: Any) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8') as f:
        json.dump(approach_to_dict(trained), f)
    return path


def load_approach(path: Any) -> TrainedApproach:
    with open(path, 'r', encoding='utf-8') as f:
        return approach_from_dict(json.load(f))


# ----- search -----

@dataclass
class ConfigResult:
    iteration: int
    config: Dict[str, Any]
    bucket: int = SINGLE_KEY
    seeds: List[int] = field(default_factory=list)
    aucs: List[float] = field(default_factory=list)
    mspd: Optional[float] = None
    goodness: Optional[float] = None
    failed: bool = False
    error: Optional[str] = None

    @property
    def mean_auc(self) -> Optional[float]:
        return float(np.mean(self.aucs)) if self.aucs else None

    def to_dict(self) -> Dict[str, Any]:
        return {
            'iteration': self.iteration,
            'bucket': self.bucket,
            'config': self.config,
            'seeds': self.seeds,
            'aucs': self.aucs,
            'mspd': self.mspd,
            'goodness': self.goodness,
            'failed': self.failed,
            'error': self.error,
        }


@dataclass
class SearchResult:
    best_config: Dict[str, Any]
    best_iteration: int
    best_goodness: float
    results: List[ConfigResult]
    inner: EventLog
    validation: EventLog
    final: Optional[TrainedApproach] = None


def validation_auc(prefixes: Sequence[LabeledPrefix], scores: np.ndarray, weighting: str = 'ongoing') -> float:
    """Overall AUC over prefix lengths, each prefix length scored on its own."""
    by_len: Dict[int, List[int]] = {}
    for i, prefix in enumerate(prefixes):
        by_len.setdefault(prefix.prefix_len, []).append(i)
    aucs: Dict[int, Optional[float]] = {}
    counts: Dict[int, int] = {}
    for length, indices in sorted(by_len.items()):
        labels = [prefixes[i].outcome for i in indices]
        counts[length] = len(indices)
        aucs[length] = auc(scores[indices], labels) if len(set(labels)) == 2 else None
    return overall_auc(aucs, counts, weighting)


def _prefix_range(bucket: Optional[int], min_prefix_len: int) -> Tuple[int, Optional[int]]:
    if bucket is None or bucket == SINGLE_KEY:
        return min_prefix_len, None
    return bucket, bucket


def evaluate_config(
    config: Dict[str, Any],
    approach: ApproachSpec,
    inner_train: EventLog,
    validation: EventLog,
    strategy: ValidationStrategy,
    seed: int = 22,
    iteration: int = 0,
    bucket: Optional[int] = None,
    min_prefix_len: int = 1,
    weighting: str = 'ongoing',
    max_mspd: Optional[float] = None,
) -> ConfigResult:
    """
    Train `strategy.runs` models and score them on the validation prefixes.

    Args:
        bucket: Restrict training and validation to prefixes of this length
            (per-bucket search); None uses every length.
        max_mspd: Normalizer for the combined strategy; when None the
            goodness of a combined_5run result is left for `run_search`.

    Returns:
        ConfigResult; training or scoring errors mark it failed instead of
        raising.
    """
    result = ConfigResult(iteration, dict(config), bucket or SINGLE_KEY)
    run_seeds = [derive_seed(seed, iteration, 0 if strategy.reuse_seed else run) for run in range(strategy.runs)]
    result.seeds = run_seeds
    low, high = _prefix_range(bucket, min_prefix_len)
    try:
        prefixes = [p for p in extract_prefixes(validation, low) if high is None or p.prefix_len == high]
        if not prefixes:
            raise MetricError("No validation prefixes in range")
        predictions = []
        for run_seed in run_seeds:
            trained = train_approach(approach, inner_train, {result.bucket: config}, run_seed, low, high)
            scores = score_prefixes(trained, prefixes, calibrated=False)
            predictions.append(scores)
            result.aucs.append(validation_auc(prefixes, scores, weighting))
        if len(predictions) >= 2:
            result.mspd = mspd(np.stack(predictions))
        if strategy.kind != 'combined_5run':
            result.goodness = strategy.goodness(result.aucs)
        elif max_mspd is not None:
            result.goodness = strategy.goodness(result.aucs, stability_term(result.mspd, max_mspd))
    except (StabilisError, ValueError, ArithmeticError) as e:
        logger.warning(f"Config {iteration} ({config}) failed: {e}")
        result.failed = True
        result.error = str(e)
    return result


def run_search(
    approach: ApproachSpec,
    train_log: EventLog,
    strategy: ValidationStrategy,
    space: SearchSpace,
    seed: int = 22,
    n_iter: int = 16,
    jobs: int = 1,
    min_prefix_len: int = 1,
    weighting: str = 'ongoing',
    bucket: Optional[int] = None,
    split: Optional[Tuple[EventLog, EventLog]] = None,
    retrain: bool = True,
) -> SearchResult:
    """
    Random search over `space`; the best validation goodness wins.

    Ties go to the lowest iteration. With `retrain` the winner is refitted
    on the whole training log (seed path (seed, 'final')).
    """
    if space.classifier != approach.classifier:
        raise ParameterError(f"{space.classifier} space does not fit approach {approach.name}")
    if n_iter < 1:
        raise ParameterError(f"n_iter must be >= 1, got {n_iter}")
    inner, validation = split if split is not None else split_validation(train_log, seed)
    configs = [sample_config(space, seed, i) for i in range(n_iter)]

    def run(iteration: int) -> ConfigResult:
        return evaluate_config(
            configs[iteration], approach, inner, validation, strategy,
            seed=seed, iteration=iteration, bucket=bucket,
            min_prefix_len=min_prefix_len, weighting=weighting,
        )

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(run, range(n_iter)))
    else:
        results = [run(i) for i in range(n_iter)]

    if not any(not r.failed for r in results):
        raise SearchError(f"All {n_iter} configurations failed for {approach.name}")
    best, goodness = strategy_winner(results, strategy)
    if strategy.kind == 'combined_5run':
        max_mspd = max(r.mspd for r in results if not r.failed)
        for r in results:
            if not r.failed:
                r.goodness = strategy.goodness(r.aucs, stability_term(r.mspd, max_mspd))
    logger.info(f"Search for {approach.name} (bucket {bucket or 'all'}): iteration {best.iteration} wins with goodness {goodness:.4f}")

    final = None
    if retrain:
        final = train_approach(approach, train_log, {best.bucket: best.config}, derive_seed(seed, 'final'), min_prefix_len)
    return SearchResult(best.config, best.iteration, goodness, results, inner, validation, final)


def strategy_winner(results: Sequence[ConfigResult], strategy: ValidationStrategy) -> Tuple[ConfigResult, float]:
    """
    Rank evaluated configurations under `strategy`; ties go to the lowest iteration.

    Results carrying more runs than the strategy needs are cut to their first
    `strategy.runs` AUCs. Run 0 of every strategy is trained with seed
    (seed, iteration, 0), so ranking a 5-run search under auc_1run gives the
    winner an auc_1run search on the same split would pick.

    Returns:
        (winning result, its goodness under `strategy`)
    """
    ok = [r for r in results if not r.failed and len(r.aucs) >= strategy.runs]
    if not ok:
        raise SearchError(f"No configuration carries the {strategy.runs} run(s) {strategy.kind} needs")
    if strategy.kind == 'combined_5run':
        max_mspd = max(r.mspd for r in ok)
        scored = [(r, strategy.goodness(r.aucs, stability_term(r.mspd, max_mspd))) for r in ok]
    else:
        scored = [(r, strategy.goodness(r.aucs[:strategy.runs])) for r in ok]
    scored.sort(key=lambda item: item[0].iteration)
    best = scored[0]
    for item in scored[1:]:
        if item[1] > best[1]:
            best = item
    return best


def interrun_mspd(
    approach: ApproachSpec,
    configs: Dict[int, Dict[str, Any]],
    inner: EventLog,
    validation: EventLog,
    seed: int,
    runs: int = 5,
    min_prefix_len: int = 1,
) -> float:
    """MSPD of `runs` retrainings of a fixed config over the validation prefixes."""
    prefixes = extract_prefixes(validation, min_prefix_len)
    predictions = [
        score_prefixes(train_approach(approach, inner, configs, derive_seed(seed, 'interrun', run), min_prefix_len), prefixes, calibrated=False)
        for run in range(runs)
    ]
    return mspd(np.stack(predictions))


# ----- test evaluation -----

@dataclass
class HoldoutEvaluation:
    reports: Dict[Optional[float], EvaluationReport]
    series: List[ScoreSeries]
    n_skipped: int = 0
    long_reports: Dict[Optional[float], EvaluationReport] = field(default_factory=dict)


def build_series(trained: TrainedApproach, log: EventLog) -> Tuple[List[ScoreSeries], int]:
    """Calibrated score series per case; cases shorter than the first prefix length are skipped."""
    min_len = trained.min_prefix_len
    eligible = [t for t in log.traces if len(t) >= min_len]
    skipped = len(log.traces) - len(eligible)
    if skipped:
        logger.warning(f"Skipped {skipped} test case(s) shorter than prefix length {min_len}")
    if not eligible:
        raise MetricError(f"No test case reaches prefix length {min_len}")
    prefixes = extract_prefixes(log.with_traces(eligible), min_len)
    scores = score_prefixes(trained, prefixes)

    series = []
    start = 0
    for trace in eligible:
        n = len(trace) - min_len + 1
        series.append(ScoreSeries(trace.case_id, int(trace.outcome), scores[start:start + n].copy()))
        start += n
    return series, skipped


def evaluate_on_test(
    trained: TrainedApproach,
    test_log: EventLog,
    alpha_grid: Sequence[float] = DEFAULT_ALPHA_GRID,
    weighting: str = 'ongoing',
    long_cases_only: bool = False,
) -> HoldoutEvaluation:
    """
    Reports for the raw calibrated scores (key None) and each smoothing alpha.

    With `long_cases_only` a second set of reports restricted to cases that
    reach the longest prefix length is added.
    """
    series, skipped = build_series(trained, test_log)
    first = trained.min_prefix_len
    variants: Dict[Optional[float], List[ScoreSeries]] = {None: series}
    for alpha in alpha_grid:
        variants[float(alpha)] = smooth_all(series, SmoothingParams(float(alpha)))

    evaluation = HoldoutEvaluation({}, series, skipped)
    for alpha, variant in variants.items():
        evaluation.reports[alpha] = evaluate_series(variant, weighting, first_prefix_len=first)
        if long_cases_only:
            evaluation.long_reports[alpha] = evaluate_series(variant, weighting, True, first)
    return evaluation


# ----- presets -----

def load_preset(dataset: str, approach: str) -> Dict[int, Dict[str, Any]]:
    """Optimized hyperparameters shipped for a named dataset, keyed by bucket (0 = shared)."""
    data = json.loads(resources.files('stabilis').joinpath('presets.json').read_text(encoding='utf-8'))
    spec = get_approach(approach)
    if dataset not in data['datasets']:
        raise ParameterError(f"No preset for dataset '{dataset}'; available: {sorted(data['datasets'])}")
    rows = data['datasets'][dataset].get(approach)
    if not rows:
        raise ParameterError(f"No preset for {approach} on '{dataset}'")
    names = data['params'][spec.classifier]
    return {int(key): dict(zip(names, values)) for key, values in rows.items()}


# ----- pipeline -----

@dataclass(frozen=True)
class RunSettings:
    seed: int = DEFAULTS['seed']
    train_fraction: float = DEFAULTS['train_fraction']
    min_support: int = DEFAULTS['min_support']
    rare_level_unit: str = DEFAULTS['rare_level_unit']
    n_iter: int = DEFAULTS['n_iter']
    strategy: str = DEFAULTS['strategy']
    alpha_grid: Tuple[float, ...] = tuple(DEFAULT_ALPHA_GRID)
    calibration: str = DEFAULTS['calibration']
    calibration_scale: str = DEFAULTS['calibration_scale']
    overall_auc_weighting: str = DEFAULTS['overall_auc_weighting']
    truncation: Any = DEFAULTS['truncation']
    min_prefix_len: int = DEFAULTS['min_prefix_len']
    jobs: int = DEFAULTS['jobs']
    per_bucket_search: bool = DEFAULTS['per_bucket_search']
    long_cases_only: bool = DEFAULTS['long_cases_only']
    end_activities: Tuple[str, ...] = ()
    preset: Optional[str] = None
    search_space: Optional[Dict[str, Any]] = None
    interrun_runs: int = DEFAULTS['interrun_runs']

    @classmethod
    def from_config(cls, config: Dict[str, Any]) -> 'RunSettings':
        """Build from a normalized run config (see utils.normalize_run_config)."""
        return cls(
            seed=int(config['seed']),
            train_fraction=float(config['train_fraction']),
            min_support=int(config['min_support']),
            rare_level_unit=config['rare_level_unit'],
            n_iter=int(config['n_iter']),
            strategy=config['strategy'],
            alpha_grid=tuple(parse_alpha_grid(config.get('alpha_grid'))),
            calibration=config['calibration'],
            calibration_scale=config.get('calibration_scale', 'raw'),
            overall_auc_weighting=config['overall_auc_weighting'],
            truncation=config['truncation'],
            min_prefix_len=int(config['min_prefix_len']),
            jobs=int(config['jobs']),
            per_bucket_search=bool(config['per_bucket_search']),
            long_cases_only=bool(config['long_cases_only']),
            end_activities=tuple(config.get('end_activities') or ()),
            preset=config.get('preset'),
            search_space=config.get('search_space'),
            interrun_runs=int(config.get('interrun_runs', DEFAULTS['interrun_runs'])),
        )


def resolve_truncation(log: EventLog, settings: RunSettings) -> int:
    """Truncation length: fixed, none (longest trace) or auto from the temporal-train part."""
    longest = max(len(t) for t in log.traces)
    value = settings.truncation
    if value is None or value == 'none':
        return longest
    if value == 'auto':
        train, _ = temporal_split(log, SplitSpec(settings.train_fraction))
        return suggest_truncation(train)
    length = int(value)
    if length < 1:
        raise ParameterError(f"truncation must be >= 1, got {length}")
    return length


def preprocess(log: EventLog, rule: LabelingRule, settings: RunSettings = RunSettings()) -> Tuple[EventLog, LogStats]:
    """
    derive features -> completion filter -> label (+cut) -> truncate -> fill/flag.

    Returns:
        (prepared log, statistics of the labeled log before truncation).
    """
    log = derive_features(log)
    log = filter_incomplete_cases(log, settings.end_activities)
    log = apply_labeling(log, rule)
    if not log.traces:
        raise EmptyLogError("No traces left after labeling and filtering")
    trunc_len = resolve_truncation(log, settings)
    stats = log_statistics(log, trunc_len)
    log = fill_and_flag_missing(truncate_traces(log, trunc_len))
    logger.info(f"Prepared {stats.n_traces} traces ({stats.n_events} events), truncation length {trunc_len}")
    return log, stats


@dataclass
class ApproachResult:
    approach: str
    trained: TrainedApproach
    evaluation: HoldoutEvaluation
    manifest: Dict[str, Any]


def _search_space(approach: ApproachSpec, settings: RunSettings) -> SearchSpace:
    overrides = (settings.search_space or {}).get(approach.classifier)
    return SearchSpace.from_dict(approach.classifier, overrides) if overrides else default_space(approach.classifier)


def run_approach(
    prepared: EventLog,
    approach_name: str,
    settings: RunSettings = RunSettings(),
    manifest: Optional[Dict[str, Any]] = None,
) -> ApproachResult:
    """
    split -> rare-level collapse fitted on train -> search (or preset) ->
    final training -> calibration -> test evaluation.

    `manifest` is filled in place as stages complete, so a caller can still
    write it when a later stage raises.
    """
    approach = get_approach(approach_name)
    strategy = ValidationStrategy(settings.strategy)
    manifest = manifest if manifest is not None else {}
    manifest.update({'approach': approach.name, 'seed': settings.seed, 'strategy': strategy.kind, 'stages': []})

    train, test = temporal_split(prepared, SplitSpec(settings.train_fraction))
    train = collapse_rare_levels(train, settings.min_support, settings.rare_level_unit)
    test = collapse_rare_levels(test, settings.min_support, settings.rare_level_unit, mapping=train.level_mapping)
    manifest['split'] = {'n_train': len(train), 'n_test': len(test)}
    manifest['stages'].append('split')

    inner, validation = split_validation(train, settings.seed)
    manifest['validation_split'] = {'n_inner': len(inner), 'n_validation': len(validation)}
    if settings.preset:
        configs = load_preset(settings.preset, approach.name)
        manifest['preset'] = settings.preset
    else:
        configs = _run_searches(approach, train, (inner, validation), strategy, settings, manifest)
    manifest['configs'] = {str(k): v for k, v in configs.items()}
    manifest['stages'].append('search')

    if settings.interrun_runs >= 2:
        manifest['winner_mspd'] = interrun_mspd(
            approach, configs, inner, validation, settings.seed, settings.interrun_runs, settings.min_prefix_len,
        )
        comparison = manifest.get('strategy_comparison')
        if comparison:
            # shared configuration only; per-bucket winners are not re-ranked
            baseline = dict(configs)
            baseline[SINGLE_KEY] = comparison['auc_1run']['config']
            manifest['auc_1run_winner_mspd'] = interrun_mspd(
                approach, baseline, inner, validation, settings.seed, settings.interrun_runs, settings.min_prefix_len,
            )

    final_seed = derive_seed(settings.seed, 'final')
    trained = train_approach(approach, train, configs, final_seed, settings.min_prefix_len)
    manifest['final_seed'] = final_seed
    manifest['stages'].append('train')

    calibration_seed = derive_seed(settings.seed, 'calibration')
    calibration_model = train_approach(approach, inner, configs, calibration_seed, settings.min_prefix_len)
    fit_calibrators(
        trained, calibration_model, extract_prefixes(validation, settings.min_prefix_len),
        settings.calibration, settings.calibration_scale,
    )
    manifest['calibration'] = {
        'mode': settings.calibration,
        'seed': calibration_seed,
        'sources': {str(k): v for k, v in trained.calibration_sources.items()},
    }
    manifest['stages'].append('calibrate')

    evaluation = evaluate_on_test(
        trained, test, settings.alpha_grid, settings.overall_auc_weighting, settings.long_cases_only,
    )
    manifest['n_skipped_test_cases'] = evaluation.n_skipped
    manifest['stages'].append('evaluate')
    return ApproachResult(approach.name, trained, evaluation, manifest)


def _winner_entry(result: ConfigResult, goodness: float) -> Dict[str, Any]:
    return {
        'iteration': result.iteration,
        'goodness': goodness,
        'mean_auc': result.mean_auc,
        'first_auc': result.aucs[0],
        'mspd': result.mspd,
        'config': result.config,
    }


def _run_searches(
    approach: ApproachSpec,
    train: EventLog,
    split: Tuple[EventLog, EventLog],
    strategy: ValidationStrategy,
    settings: RunSettings,
    manifest: Dict[str, Any],
) -> Dict[int, Dict[str, Any]]:
    space = _search_space(approach, settings)
    shared = run_search(
        approach, train, strategy, space, settings.seed, settings.n_iter, settings.jobs,
        settings.min_prefix_len, settings.overall_auc_weighting, split=split, retrain=False,
    )
    manifest['search'] = [r.to_dict() for r in shared.results]
    manifest['winner'] = {'bucket': SINGLE_KEY, 'iteration': shared.best_iteration, 'goodness': shared.best_goodness}
    if strategy.kind == 'combined_5run':
        manifest['strategy_comparison'] = {
            s.kind: _winner_entry(*strategy_winner(shared.results, s))
            for s in (strategy, ValidationStrategy('auc_1run'))
        }
    configs = {SINGLE_KEY: shared.best_config}
    if not (approach.multi and settings.per_bucket_search):
        return configs

    manifest['bucket_winners'] = []
    lengths = sorted({p.prefix_len for p in extract_prefixes(train, settings.min_prefix_len)})
    for length in lengths:
        try:
            found = run_search(
                approach, train, strategy, space, derive_seed(settings.seed, 'bucket', length), settings.n_iter,
                settings.jobs, settings.min_prefix_len, settings.overall_auc_weighting,
                bucket=length, split=split, retrain=False,
            )
        except SearchError as e:
            logger.warning(f"Bucket {length} search failed ({e}); using the shared configuration")
            continue
        configs[length] = found.best_config
        manifest['search'].extend(r.to_dict() for r in found.results)
        manifest['bucket_winners'].append({'bucket': length, 'iteration': found.best_iteration, 'goodness': found.best_goodness})
    return configs


# ----- report tables -----

def _alpha_label(alpha: Optional[float]) -> str:
    return 'none' if alpha is None else f"{alpha:g}"


def report_frames(results: Sequence[ApproachResult]) -> Tuple[pd.DataFrame, pd.DataFrame]:
    """
    Long-format report (approach, alpha, slice, prefix_len, auc, n_cases) and
    summary (approach, alpha, slice, overall_auc, temporal_stability,
    n_excluded, n_skipped).
    """
    report_rows, summary_rows = [], []
    for result in results:
        slices = [('all', result.evaluation.reports), ('long_cases', result.evaluation.long_reports)]
        for slice_name, reports in slices:
            for alpha, report in reports.items():
                label = _alpha_label(alpha)
                for length, n_cases in report.n_cases_by_prefix_len.items():
                    report_rows.append({
                        'approach': result.approach,
                        'alpha': label,
                        'slice': slice_name,
                        'prefix_len': length,
                        'auc': report.auc_by_prefix_len.get(length),
                        'n_cases': n_cases,
                    })
                summary_rows.append({
                    'approach': result.approach,
                    'alpha': label,
                    'slice': slice_name,
                    'overall_auc': report.overall_auc,
                    'temporal_stability': report.temporal_stability,
                    'n_excluded': report.n_excluded,
                    'n_skipped': result.evaluation.n_skipped,
                })
    report = pd.DataFrame(report_rows, columns=['approach', 'alpha', 'slice', 'prefix_len', 'auc', 'n_cases'])
    summary = pd.DataFrame(summary_rows, columns=[
        'approach', 'alpha', 'slice', 'overall_auc', 'temporal_stability', 'n_excluded', 'n_skipped',
    ])
    return report, summary


def figure_frames(report: pd.DataFrame, summary: pd.DataFrame) -> Dict[str, pd.DataFrame]:
    """Plot-ready tables: AUC vs prefix length, TS vs alpha, AUC vs alpha, TS vs AUC."""
    report = report[(report['slice'] == 'all') & report['auc'].notna()]
    summary = summary[summary['slice'] == 'all']
    return {
        'auc_vs_prefix': report[['approach', 'alpha', 'prefix_len', 'auc', 'n_cases']].reset_index(drop=True),
        'ts_vs_alpha': summary[['approach', 'alpha', 'temporal_stability']].reset_index(drop=True),
        'auc_vs_alpha': summary[['approach', 'alpha', 'overall_auc']].reset_index(drop=True),
        'ts_vs_auc': summary[['approach', 'alpha', 'overall_auc', 'temporal_stability']].reset_index(drop=True),
    }
