"""
Run configuration validation with deterministic error tokens.

Tokens have the form `category:detail`, e.g. `missing_field:log_path`,
`invalid_value:strategy`, `schema:invalid_kind:amount`,
`rule:unknown_attribute`. The CLI prints the most frequent ones and exits 1.
"""

from pathlib import Path
from typing import Any, Dict, Iterable, List, Union

from stabilis.event_log import COLUMN_KINDS, CUT_POLICIES, RULE_KINDS, LabelingRule, LogSchema

APPROACH_NAMES = {'RF_agg', 'RF_idx_pad', 'RF_idx_mul', 'XGB_agg', 'XGB_idx_pad', 'XGB_idx_mul'}
STRATEGY_NAMES = {'auc_1run', 'auc_5run', 'combined_5run'}
CALIBRATION_NAMES = {'per_bucket', 'pooled', 'none'}
WEIGHTING_NAMES = {'ongoing', 'uniform'}
RARE_LEVEL_UNITS = {'case', 'event'}

# Fields each command needs before it can start.
REQUIRED_FIELDS = {
    'prep': ['log_path', 'output_dir', 'schema', 'labeling'],
    'run': ['output_dir', 'schema', 'approaches'],
    'report': ['output_dir'],
    'suggest-truncation': ['log_path', 'schema', 'labeling'],
}


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _is_number(value: Any) -> bool:
    return isinstance(value, (int, float)) and not isinstance(value, bool)


def validate_schema(schema: Any) -> List[str]:
    """Check a schema mapping: the three mandatory roles plus known column kinds."""
    if isinstance(schema, LogSchema):
        schema = schema.to_dict()
    if not isinstance(schema, dict):
        return ['schema:not_a_mapping']
    errors = []
    for key in ('case_id', 'activity', 'timestamp'):
        if not schema.get(key):
            errors.append(f'schema:missing_key:{key}')
    columns = schema.get('columns') or {}
    if not isinstance(columns, dict):
        return errors + ['schema:columns_not_a_mapping']
    roles = {schema.get('case_id'), schema.get('activity'), schema.get('timestamp')}
    for column, kind in columns.items():
        if kind not in COLUMN_KINDS:
            errors.append(f'schema:invalid_kind:{column}')
        if column in roles:
            errors.append(f'schema:role_conflict:{column}')
    return errors


def validate_labeling_rule(rule: Union[LabelingRule, Dict[str, Any]], schema: Union[LogSchema, Dict[str, Any]]) -> List[str]:
    """
    Check a labeling rule against the schema it will run on.

    Returns:
        List of `rule:*` tokens; empty when the rule is usable.
    """
    if isinstance(rule, dict):
        rule = LabelingRule.from_dict(rule)
    if isinstance(schema, dict):
        schema = LogSchema.from_dict(schema)

    errors = []
    if rule.kind not in RULE_KINDS:
        return ['rule:unknown_kind']
    if rule.cut not in CUT_POLICIES:
        errors.append('rule:invalid_cut')
    if rule.kind == 'event_occurs':
        if not rule.values:
            errors.append('rule:missing_values')
        return errors

    known = [schema.activity] + list(schema.columns)
    if not rule.attribute or rule.attribute not in known:
        errors.append('rule:unknown_attribute')
        return errors
    if rule.kind == 'attribute_equals' and not rule.values:
        errors.append('rule:missing_values')
    if rule.kind == 'external_column':
        if rule.attribute not in schema.case_attributes:
            errors.append('rule:not_case_level')
        if rule.cut != 'none':
            errors.append('rule:cut_without_event')
    return errors


def _validate_values(config: Dict[str, Any]) -> List[str]:
    errors = []

    for name in config.get('approaches') or []:
        if name not in APPROACH_NAMES:
            errors.append('invalid_value:approach')
            break
    if config.get('strategy') not in STRATEGY_NAMES:
        errors.append('invalid_value:strategy')
    if config.get('calibration') not in CALIBRATION_NAMES:
        errors.append('invalid_value:calibration')
    if config.get('calibration_scale', 'raw') not in ('raw', 'logit'):
        errors.append('invalid_value:calibration_scale')
    if config.get('overall_auc_weighting') not in WEIGHTING_NAMES:
        errors.append('invalid_value:overall_auc_weighting')
    if config.get('rare_level_unit') not in RARE_LEVEL_UNITS:
        errors.append('invalid_value:rare_level_unit')

    if not _is_int(config.get('seed')) or config['seed'] < 0:
        errors.append('invalid_value:seed')
    fraction = config.get('train_fraction')
    if not _is_number(fraction) or not 0 < fraction < 1:
        errors.append('invalid_value:train_fraction')
    for key, low in (('min_support', 0), ('n_iter', 1), ('min_prefix_len', 1), ('jobs', 1)):
        value = config.get(key)
        if not _is_int(value) or value < low:
            errors.append(f'invalid_value:{key}')

    alphas = config.get('alpha_grid') or []
    if any(not _is_number(a) or not 0 <= a <= 1 for a in alphas):
        errors.append('invalid_value:alpha_grid')

    truncation = config.get('truncation')
    if truncation not in ('auto', 'none', None):
        try:
            if int(truncation) < 1:
                errors.append('invalid_value:truncation')
        except (TypeError, ValueError):
            errors.append('invalid_value:truncation')

    return errors


def validate_run_config(
    config: Dict[str, Any],
    command: str = 'run',
    check_paths: bool = False,
) -> Dict[str, Any]:
    """
    Validate a normalized run config for one CLI command.

    Args:
        config: Output of `utils.normalize_run_config` (flag overrides applied).
        command: Which command's required fields to enforce.
        check_paths: Also require `log_path` to exist on disk.

    Returns:
        Dictionary with keys:
        - is_valid: True when no error token was produced
        - errors: List of error token strings
    """
    errors = []
    for key in REQUIRED_FIELDS.get(command, []):
        if not config.get(key):
            errors.append(f'missing_field:{key}')

    errors.extend(_validate_values(config))

    schema = config.get('schema')
    if schema:
        schema_errors = validate_schema(schema)
        errors.extend(schema_errors)
        rule = config.get('labeling')
        if rule and not schema_errors:
            errors.extend(validate_labeling_rule(rule, schema))

    if check_paths and config.get('log_path') and not Path(config['log_path']).exists():
        errors.append('missing_file:log_path')

    return {'is_valid': len(errors) == 0, 'errors': errors}


def count_errors(errors: Iterable[str]) -> Dict[str, int]:
    counts: Dict[str, int] = {}
    for error in errors:
        counts[error] = counts.get(error, 0) + 1
    return counts
