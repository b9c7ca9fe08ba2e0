"""
Utility helpers for the stabilis package.

Provides `normalize_run_config` which converts a user-written run config into
the canonical key names expected by the validator and the pipeline.
"""
import hashlib
from typing import Any, Dict, List, Union

DEFAULT_ALPHA_GRID = [0.1, 0.25, 0.5, 0.75, 0.9]

DEFAULTS: Dict[str, Any] = {
    'seed': 22,
    'train_fraction': 0.8,
    'min_support': 10,
    'rare_level_unit': 'case',
    'n_iter': 16,
    'strategy': 'auc_1run',
    'calibration': 'per_bucket',
    'overall_auc_weighting': 'ongoing',
    'truncation': 'auto',
    'min_prefix_len': 1,
    'jobs': 1,
    'per_bucket_search': False,
    'long_cases_only': False,
    'end_activities': [],
    'preset': None,
    'interrun_runs': 5,
    'calibration_scale': 'raw',
}


def parse_alpha_grid(value: Union[str, List[Any], None]) -> List[float]:
    """Parse "0.1,0.25" or a list into a list of floats; empty string gives []."""
    if value is None:
        return list(DEFAULT_ALPHA_GRID)
    if isinstance(value, str):
        parts = [p.strip() for p in value.split(',')]
        return [float(p) for p in parts if p]
    return [float(v) for v in value]


def _as_list(value: Any) -> List[str]:
    if value is None:
        return []
    if isinstance(value, str):
        return [v.strip() for v in value.split(',') if v.strip()]
    return [str(v) for v in value]


def normalize_run_config(raw: Dict[str, Any]) -> Dict[str, Any]:
    """Return a new dict with canonical keys used across cli/validator/experiment.

    - Accepts `log` or `log_path`, `output`/`out`/`output_dir`.
    - Accepts a single `approach` or a list/CSV string under `approaches`.
    - Accepts `alpha_grid` as list or comma-separated string.
    - Fills defaults for every optional key.
    """
    out: Dict[str, Any] = {}

    # Paths
    out['log_path'] = raw.get('log_path') or raw.get('log')
    out['output_dir'] = raw.get('output_dir') or raw.get('output') or raw.get('out')

    # Schema and labeling are passed through as written
    out['schema'] = raw.get('schema')
    out['labeling'] = raw.get('labeling') or raw.get('labeling_rule')

    approaches = raw.get('approaches') or raw.get('approach')
    out['approaches'] = _as_list(approaches)

    grid = raw['alpha_grid'] if 'alpha_grid' in raw else raw.get('alphas')
    out['alpha_grid'] = parse_alpha_grid(grid)

    for key, default in DEFAULTS.items():
        value = raw.get(key)
        out[key] = default if value is None else value

    out['end_activities'] = _as_list(out['end_activities'])
    out['search_space'] = raw.get('search_space')

    return out


def apply_overrides(config: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    """Flags win over file values; None means the flag was not given."""
    merged = dict(config)
    for key, value in overrides.items():
        if value is None:
            continue
        if key == 'approaches':
            merged[key] = _as_list(value)
        elif key == 'alpha_grid':
            merged[key] = parse_alpha_grid(value)
        else:
            merged[key] = value
    return merged


def derive_seed(seed: int, *indices: Any) -> int:
    """Deterministic child seed from a root seed and a path of indices."""
    key = ':'.join(str(v) for v in (seed,) + indices)
    digest = hashlib.sha256(key.encode('utf-8')).digest()
    return int.from_bytes(digest[:4], 'big') & 0x7FFFFFFF
