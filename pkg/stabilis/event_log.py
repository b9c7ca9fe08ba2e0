"""
Event log ingestion and preprocessing.

Reads CSV event logs into immutable traces, derives timestamp and inter-case
features, labels and cuts traces, collapses rare categorical levels, fills
legitimately missing values, truncates long traces and makes the temporal
train/test split.
"""

import logging
import math
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Callable, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd
from dateutil import parser as date_parser

from stabilis.errors import (
    EmptyLogError,
    InputError,
    ParameterError,
    RowError,
    RuleError,
    SchemaError,
    SplitError,
)

logger = logging.getLogger(__name__)

OTHER_LEVEL = '__other__'
MISSING_LEVEL = '__missing__'

EPOCH = datetime(1970, 1, 1)

COLUMN_KINDS = {'categorical', 'numeric', 'case_categorical', 'case_numeric', 'label', 'ignore'}

DERIVED_COLUMNS = ['__hour', '__weekday', '__month', '__elapsed', '__delta', '__event_nr', '__open_cases']
LABEL_COLUMN = '__label'
PRESENT_PREFIX = 'present__'

RULE_KINDS = {'attribute_equals', 'attribute_exists', 'event_occurs', 'external_column'}
CUT_POLICIES = {'none', 'before_match'}


@dataclass(frozen=True)
class LogSchema:
    """Column roles of an input CSV."""

    case_id: str
    activity: str
    timestamp: str
    columns: Dict[str, str] = field(default_factory=dict)

    def __post_init__(self):
        for name, kind in self.columns.items():
            if kind not in COLUMN_KINDS:
                raise SchemaError(f"Column '{name}' has unknown kind '{kind}'")
            if name in (self.case_id, self.activity, self.timestamp):
                raise SchemaError(f"Column '{name}' is already mapped to a mandatory role")

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LogSchema':
        for key in ('case_id', 'activity', 'timestamp'):
            if not data.get(key):
                raise SchemaError(f"Schema does not name the {key} column")
        return cls(
            case_id=data['case_id'],
            activity=data['activity'],
            timestamp=data['timestamp'],
            columns=dict(data.get('columns') or {}),
        )

    def to_dict(self) -> Dict[str, Any]:
        return {
            'case_id': self.case_id,
            'activity': self.activity,
            'timestamp': self.timestamp,
            'columns': dict(self.columns),
        }

    def _of_kind(self, kind: str) -> List[str]:
        return [name for name, k in self.columns.items() if k == kind]

    @property
    def event_categorical(self) -> List[str]:
        return self._of_kind('categorical')

    @property
    def event_numeric(self) -> List[str]:
        return self._of_kind('numeric')

    @property
    def case_categorical(self) -> List[str]:
        return self._of_kind('case_categorical')

    @property
    def case_numeric(self) -> List[str]:
        return self._of_kind('case_numeric')

    @property
    def event_attributes(self) -> List[str]:
        return [name for name, k in self.columns.items() if k in ('categorical', 'numeric')]

    @property
    def case_attributes(self) -> List[str]:
        return [name for name, k in self.columns.items() if k in ('case_categorical', 'case_numeric', 'label')]


@dataclass(frozen=True)
class DerivedFeatureSet:
    hour: int
    weekday: int
    month: int
    time_since_case_start: float
    time_since_last_event: float
    event_number: int
    open_cases: int

    def as_list(self) -> List[float]:
        """Values in the order of DERIVED_COLUMNS."""
        return [
            float(self.hour),
            float(self.weekday),
            float(self.month),
            self.time_since_case_start,
            self.time_since_last_event,
            float(self.event_number),
            float(self.open_cases),
        ]


@dataclass(frozen=True)
class Event:
    case_id: str
    activity: Optional[str]
    timestamp: datetime
    payload: Dict[str, Any]
    row: int
    derived: Optional[DerivedFeatureSet] = None
    present: Dict[str, bool] = field(default_factory=dict)


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: List[Event]
    case_attrs: Dict[str, Any]
    outcome: Optional[int] = None

    def __len__(self) -> int:
        return len(self.events)

    @property
    def start(self) -> datetime:
        return self.events[0].timestamp

    @property
    def end(self) -> datetime:
        return self.events[-1].timestamp


@dataclass(frozen=True)
class EventLog:
    traces: List[Trace]
    schema: LogSchema
    level_mapping: Optional[Dict[str, List[str]]] = None

    def __len__(self) -> int:
        return len(self.traces)

    @property
    def n_events(self) -> int:
        return sum(len(t) for t in self.traces)

    @property
    def case_ids(self) -> List[str]:
        return [t.case_id for t in self.traces]

    @property
    def is_labeled(self) -> bool:
        return all(t.outcome is not None for t in self.traces)

    def with_traces(self, traces: List[Trace]) -> 'EventLog':
        return replace(self, traces=traces)


@dataclass(frozen=True)
class LabelingRule:
    """Declarative case-outcome definition.

    A trace is positive when any of its events matches (or, for
    `external_column`, when its case attribute is among `values`), inverted
    when `negate` is set. With `cut='before_match'` the trace is truncated
    right before its first matching event.
    """

    kind: str
    attribute: Optional[str] = None
    values: Tuple[str, ...] = ()
    greater_than: Optional[float] = None
    negate: bool = False
    cut: str = 'none'

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'LabelingRule':
        values = data.get('values')
        if values is None and data.get('value') is not None:
            values = [data['value']]
        return cls(
            kind=data.get('kind', ''),
            attribute=data.get('attribute') or data.get('column'),
            values=tuple(str(v) for v in (values or [])),
            greater_than=data.get('greater_than'),
            negate=bool(data.get('negate', False)),
            cut=data.get('cut', 'none'),
        )


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    mode: str = 'temporal'


@dataclass(frozen=True)
class LogStats:
    n_traces: int
    pos_class_ratio: float
    median_length: float
    max_length: int
    trunc_length: int
    n_events: int

    def as_row(self) -> Dict[str, Any]:
        return {
            '# traces': self.n_traces,
            'pos class ratio': round(self.pos_class_ratio, 4),
            'med length': self.median_length,
            'max length': self.max_length,
            'trunc length': self.trunc_length,
            '# events': self.n_events,
        }


def _seconds(ts: datetime) -> float:
    return (ts - EPOCH).total_seconds()


def _parse_timestamp(value: Any, row_index: int) -> datetime:
    """Parse an ISO-8601 timestamp; timezone-aware values are moved to naive UTC."""
    if isinstance(value, datetime):
        ts = value.to_pydatetime() if isinstance(value, pd.Timestamp) else value
    else:
        text = str(value).strip() if value is not None else ''
        if not text:
            raise RowError("empty timestamp", row_index)
        try:
            ts = date_parser.isoparse(text)
        except (ValueError, TypeError, OverflowError):
            raise RowError(f"unparseable timestamp '{text}'", row_index)
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc).replace(tzinfo=None)
    return ts


def _parse_number(value: Any) -> Optional[float]:
    """Return a finite float, or None when the cell is not numeric."""
    if value is None:
        return None
    if isinstance(value, (int, float, np.integer, np.floating)):
        number = float(value)
    else:
        text = str(value).strip()
        if not text:
            return None
        try:
            number = float(text)
        except ValueError:
            return None
    return number if math.isfinite(number) else None


def _parse_category(value: Any) -> Optional[str]:
    if value is None:
        return None
    if isinstance(value, float) and math.isnan(value):
        return None
    text = str(value).strip()
    return text or None


def _parse_cell(value: Any, kind: str) -> Any:
    if kind in ('numeric', 'case_numeric'):
        return _parse_number(value)
    return _parse_category(value)


def _build_log(frame: pd.DataFrame, schema: LogSchema, prepared: bool = False) -> EventLog:
    if len(frame) == 0:
        raise EmptyLogError("Event log contains no rows")

    mandatory = [schema.case_id, schema.activity, schema.timestamp]
    for column in mandatory + list(schema.columns):
        if column not in frame.columns:
            raise SchemaError(f"Missing column '{column}'")

    event_attrs = schema.event_attributes
    case_attrs = schema.case_attributes
    column_values = {c: frame[c].tolist() for c in mandatory + event_attrs + case_attrs}

    derived_values = None
    present_values = {}
    label_values = None
    if prepared:
        for column in DERIVED_COLUMNS + [LABEL_COLUMN]:
            if column not in frame.columns:
                raise SchemaError(f"Prepared log is missing column '{column}'")
        derived_values = {c: frame[c].tolist() for c in DERIVED_COLUMNS}
        label_values = frame[LABEL_COLUMN].tolist()
        for attr in event_attrs:
            column = PRESENT_PREFIX + attr
            if column not in frame.columns:
                raise SchemaError(f"Prepared log is missing column '{column}'")
            present_values[attr] = frame[column].tolist()

    grouped: Dict[str, List[Event]] = {}
    case_values: Dict[str, Dict[str, Any]] = {}
    labels: Dict[str, Optional[int]] = {}

    for row in range(len(frame)):
        case_id = _parse_category(column_values[schema.case_id][row])
        if case_id is None:
            raise RowError("empty case id", row)
        timestamp = _parse_timestamp(column_values[schema.timestamp][row], row)
        activity = _parse_category(column_values[schema.activity][row])
        payload = {a: _parse_cell(column_values[a][row], schema.columns[a]) for a in event_attrs}

        derived = None
        present: Dict[str, bool] = {}
        if prepared:
            values = [float(derived_values[c][row]) for c in DERIVED_COLUMNS]
            derived = DerivedFeatureSet(
                hour=int(values[0]),
                weekday=int(values[1]),
                month=int(values[2]),
                time_since_case_start=values[3],
                time_since_last_event=values[4],
                event_number=int(values[5]),
                open_cases=int(values[6]),
            )
            present = {a: bool(int(float(present_values[a][row]))) for a in event_attrs}
            label = _parse_number(label_values[row])
            labels[case_id] = None if label is None else int(label)

        grouped.setdefault(case_id, []).append(
            Event(case_id, activity, timestamp, payload, row, derived, present)
        )

        attrs = case_values.setdefault(case_id, {})
        for attr in case_attrs:
            value = _parse_cell(column_values[attr][row], schema.columns[attr])
            if value is None:
                continue
            if attrs.get(attr) is None:
                attrs[attr] = value
            elif attrs[attr] != value:
                raise InputError(f"Case attribute '{attr}' varies within case '{case_id}' (row {row})")

    traces = []
    for case_id, events in grouped.items():
        events.sort(key=lambda e: (e.timestamp, e.row))
        attrs = {a: case_values[case_id].get(a) for a in case_attrs}
        traces.append(Trace(case_id, events, attrs, labels.get(case_id)))
    traces.sort(key=lambda t: (t.start, t.events[0].row))

    logger.debug(f"Built log with {len(traces)} traces and {len(frame)} events")
    return EventLog(traces=traces, schema=schema)


def log_from_frame(frame: pd.DataFrame, schema: LogSchema) -> EventLog:
    """
    Group the rows of a table into traces.

    Args:
        frame: One row per event; cells may be strings, numbers or datetimes.
        schema: Column roles.

    Returns:
        EventLog with traces ordered by start time and events ordered by
        (timestamp, original row).
    """
    return _build_log(frame, schema)


def _read_frame(path: Any) -> pd.DataFrame:
    path = Path(path)
    if not path.exists():
        raise InputError(f"Log file '{path}' does not exist")
    try:
        return pd.read_csv(path, dtype=str, keep_default_na=False, encoding='utf-8')
    except pd.errors.EmptyDataError:
        raise EmptyLogError(f"Log file '{path}' is empty")


def read_csv_log(path: Any, schema: LogSchema) -> EventLog:
    """
    Read a UTF-8 CSV event log with a header row.

    Args:
        path: CSV file path.
        schema: Column roles; numeric parse failures become absent values.

    Returns:
        EventLog grouped by case id.
    """
    return _build_log(_read_frame(path), schema)


def read_prepared_log(path: Any, schema: LogSchema) -> EventLog:
    """Read a log written by `write_csv_log`, restoring derived features, indicators and labels."""
    return _build_log(_read_frame(path), schema, prepared=True)


def write_csv_log(log: EventLog, path: Any) -> Path:
    """Write the log as CSV with derived, indicator and label columns appended."""
    schema = log.schema
    event_attrs = schema.event_attributes
    case_attrs = schema.case_attributes
    columns = (
        [schema.case_id, schema.activity, schema.timestamp]
        + list(schema.columns)
        + [LABEL_COLUMN]
        + DERIVED_COLUMNS
        + [PRESENT_PREFIX + a for a in event_attrs]
    )
    ignored = [c for c, k in schema.columns.items() if k == 'ignore']

    rows = []
    for trace in log.traces:
        for event in trace.events:
            row: Dict[str, Any] = {
                schema.case_id: trace.case_id,
                schema.activity: event.activity or '',
                schema.timestamp: event.timestamp.isoformat(),
            }
            for attr in event_attrs:
                value = event.payload.get(attr)
                row[attr] = '' if value is None else value
            for attr in case_attrs:
                value = trace.case_attrs.get(attr)
                row[attr] = '' if value is None else value
            for attr in ignored:
                row[attr] = ''
            row[LABEL_COLUMN] = '' if trace.outcome is None else trace.outcome
            derived = event.derived.as_list() if event.derived else [''] * len(DERIVED_COLUMNS)
            row.update(dict(zip(DERIVED_COLUMNS, derived)))
            for attr in event_attrs:
                row[PRESENT_PREFIX + attr] = int(event.present.get(attr, event.payload.get(attr) is not None))
            rows.append(row)

    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(rows, columns=columns).to_csv(path, index=False)
    return path


def derive_features(log: EventLog) -> EventLog:
    """
    Attach hour, weekday, month, elapsed time, time since the previous event,
    event number and the log-wide number of open cases to every event.
    """
    if not log.traces:
        return log
    starts = np.sort(np.array([_seconds(t.start) for t in log.traces]))
    ends = np.sort(np.array([_seconds(t.end) for t in log.traces]))

    traces = []
    for trace in log.traces:
        first = _seconds(trace.start)
        previous = first
        events = []
        for position, event in enumerate(trace.events, start=1):
            now = _seconds(event.timestamp)
            # cases with start <= now minus cases already ended before now
            open_cases = int(np.searchsorted(starts, now, side='right') - np.searchsorted(ends, now, side='left'))
            derived = DerivedFeatureSet(
                hour=event.timestamp.hour,
                weekday=event.timestamp.weekday(),
                month=event.timestamp.month,
                time_since_case_start=now - first,
                time_since_last_event=now - previous,
                event_number=position,
                open_cases=open_cases,
            )
            events.append(replace(event, derived=derived))
            previous = now
        traces.append(replace(trace, events=events))
    return log.with_traces(traces)


def _categorical_attributes(schema: LogSchema) -> List[str]:
    return [schema.activity] + schema.event_categorical + schema.case_categorical


def _event_value(event: Event, schema: LogSchema, attr: str) -> Any:
    if attr == schema.activity:
        return event.activity
    return event.payload.get(attr)


def collapse_rare_levels(
    log: EventLog,
    min_support: int = 10,
    unit: str = 'case',
    mapping: Optional[Dict[str, List[str]]] = None,
) -> EventLog:
    """
    Replace categorical levels seen in at most `min_support` cases (or events)
    by `__other__`.

    Args:
        log: Input log.
        min_support: Levels with support <= this value are collapsed.
        unit: 'case' counts distinct cases, 'event' counts events.
        mapping: Kept levels per attribute from a previous (training) call;
            when given, support is not recounted.

    Returns:
        Log whose `level_mapping` holds the kept levels per attribute.
    """
    if min_support < 0:
        raise ParameterError(f"min_support must be >= 0, got {min_support}")
    if unit not in ('case', 'event'):
        raise ParameterError(f"rare-level unit must be 'case' or 'event', got '{unit}'")

    schema = log.schema
    event_level = [schema.activity] + schema.event_categorical
    case_level = schema.case_categorical

    for trace in log.traces:
        for attr in case_level:
            if trace.case_attrs.get(attr) == OTHER_LEVEL:
                raise InputError(f"Reserved level '{OTHER_LEVEL}' found in attribute '{attr}'")
        for event in trace.events:
            for attr in event_level:
                if _event_value(event, schema, attr) == OTHER_LEVEL:
                    raise InputError(f"Reserved level '{OTHER_LEVEL}' found in attribute '{attr}'")

    if mapping is None:
        support: Dict[str, Dict[str, int]] = {a: {} for a in event_level + case_level}
        for trace in log.traces:
            for attr in event_level:
                values = [_event_value(e, schema, attr) for e in trace.events]
                values = [v for v in values if v is not None]
                counted = set(values) if unit == 'case' else values
                for value in counted:
                    support[attr][value] = support[attr].get(value, 0) + 1
            for attr in case_level:
                value = trace.case_attrs.get(attr)
                if value is not None:
                    weight = 1 if unit == 'case' else len(trace)
                    support[attr][value] = support[attr].get(value, 0) + weight
        mapping = {
            attr: sorted(level for level, count in counts.items() if count > min_support)
            for attr, counts in support.items()
        }

    kept = {attr: set(levels) for attr, levels in mapping.items()}

    def collapse(attr: str, value: Any) -> Any:
        if value is None or attr not in kept or value in kept[attr]:
            return value
        return OTHER_LEVEL

    traces = []
    for trace in log.traces:
        events = []
        for event in trace.events:
            payload = dict(event.payload)
            for attr in schema.event_categorical:
                payload[attr] = collapse(attr, payload.get(attr))
            events.append(replace(event, activity=collapse(schema.activity, event.activity), payload=payload))
        case_attrs = dict(trace.case_attrs)
        for attr in case_level:
            case_attrs[attr] = collapse(attr, case_attrs.get(attr))
        traces.append(replace(trace, events=events, case_attrs=case_attrs))

    n_collapsed = sum(1 for t in traces for e in t.events if e.activity == OTHER_LEVEL)
    logger.debug(f"Collapsed rare levels (min_support={min_support}, unit={unit}); {n_collapsed} events got other activity")
    return replace(log, traces=traces, level_mapping={a: list(v) for a, v in mapping.items()})


def fill_and_flag_missing(log: EventLog) -> EventLog:
    """
    Fill absent event attributes from the closest preceding event of the same
    trace (0 / `__missing__` when there is none) and record presence flags.
    """
    schema = log.schema
    defaults = {a: 0.0 for a in schema.event_numeric}
    defaults.update({a: MISSING_LEVEL for a in schema.event_categorical})
    case_defaults = {a: 0.0 for a in schema.case_numeric}
    case_defaults.update({a: MISSING_LEVEL for a in schema.case_categorical})

    traces = []
    for trace in log.traces:
        last_seen: Dict[str, Any] = {}
        events = []
        for event in trace.events:
            payload = dict(event.payload)
            present = {}
            for attr, default in defaults.items():
                value = payload.get(attr)
                present[attr] = value is not None
                if value is not None:
                    last_seen[attr] = value
                else:
                    payload[attr] = last_seen.get(attr, default)
            events.append(replace(event, payload=payload, present=present))
        case_attrs = dict(trace.case_attrs)
        for attr, default in case_defaults.items():
            if case_attrs.get(attr) is None:
                case_attrs[attr] = default
        traces.append(replace(trace, events=events, case_attrs=case_attrs))
    return log.with_traces(traces)


def _value_in(value: Any, values: Tuple[str, ...]) -> bool:
    if value is None:
        return False
    if isinstance(value, float):
        return any(_parse_number(v) == value for v in values)
    return str(value) in values


def _event_matcher(rule: LabelingRule, schema: LogSchema) -> Callable[[Event], bool]:
    attr = rule.attribute
    if rule.kind == 'event_occurs':
        return lambda e: e.activity in rule.values
    if rule.kind == 'attribute_equals':
        return lambda e: _value_in(_event_value(e, schema, attr), rule.values)

    def exists(event: Event) -> bool:
        value = _event_value(event, schema, attr)
        if value is None:
            return False
        if rule.greater_than is None:
            return True
        return isinstance(value, float) and value > rule.greater_than

    return exists


def _check_rule(rule: LabelingRule, schema: LogSchema):
    if rule.kind not in RULE_KINDS:
        raise RuleError(f"Unknown labeling rule kind '{rule.kind}'")
    if rule.cut not in CUT_POLICIES:
        raise RuleError(f"Unknown cut policy '{rule.cut}'")
    if rule.kind == 'event_occurs':
        if not rule.values:
            raise RuleError("event_occurs rule needs at least one activity")
        return
    known = [schema.activity] + list(schema.columns)
    if not rule.attribute or rule.attribute not in known:
        raise RuleError(f"Labeling rule references unknown attribute '{rule.attribute}'")
    if rule.kind == 'attribute_equals' and not rule.values:
        raise RuleError("attribute_equals rule needs at least one value")
    if rule.kind == 'external_column':
        if rule.attribute not in schema.case_attributes:
            raise RuleError(f"external_column rule needs a case-level column, got '{rule.attribute}'")
        if rule.cut != 'none':
            raise RuleError("external_column labels have no defining event to cut before")


def apply_labeling(log: EventLog, rule: LabelingRule) -> EventLog:
    """
    Label every trace and optionally cut it before the label-defining event.

    Case-level attributes referenced by attribute_equals / attribute_exists
    rules are tested on the trace's case attributes (no cut is possible then).
    """
    schema = log.schema
    _check_rule(rule, schema)
    case_level = rule.attribute in schema.case_attributes
    matcher = _event_matcher(rule, schema)

    traces = []
    dropped = 0
    for trace in log.traces:
        match_at = None
        if rule.kind == 'external_column':
            matched = _value_in(trace.case_attrs.get(rule.attribute), rule.values)
        elif case_level:
            value = trace.case_attrs.get(rule.attribute)
            if rule.kind == 'attribute_equals':
                matched = _value_in(value, rule.values)
            else:
                matched = value is not None and (
                    rule.greater_than is None or (isinstance(value, float) and value > rule.greater_than)
                )
        else:
            match_at = next((i for i, e in enumerate(trace.events) if matcher(e)), None)
            matched = match_at is not None

        outcome = int(matched != rule.negate)
        events = trace.events
        if rule.cut == 'before_match' and match_at is not None and not case_level:
            events = events[:match_at]
        if not events:
            dropped += 1
            continue
        traces.append(replace(trace, events=list(events), outcome=outcome))

    if dropped:
        logger.warning(f"Dropped {dropped} trace(s) emptied by cutting before the label-defining event")
    return log.with_traces(traces)


def filter_incomplete_cases(log: EventLog, end_activities: Iterable[str]) -> EventLog:
    """Keep only traces that end with one of `end_activities`; empty set keeps all."""
    ends = set(end_activities)
    if not ends:
        return log
    kept = [t for t in log.traces if t.events[-1].activity in ends]
    if len(kept) < len(log.traces):
        logger.info(f"Filtered out {len(log.traces) - len(kept)} incomplete case(s)")
    return log.with_traces(kept)


def truncate_traces(log: EventLog, max_len: int) -> EventLog:
    """Keep at most the first `max_len` events of every trace."""
    if max_len < 1:
        raise ParameterError(f"max_len must be >= 1, got {max_len}")
    traces = [t if len(t) <= max_len else replace(t, events=t.events[:max_len]) for t in log.traces]
    return log.with_traces(traces)


def suggest_truncation(log: EventLog) -> int:
    """Length by which 90% of minority-class traces have completed."""
    if not log.traces:
        raise InputError("Cannot suggest a truncation length for an empty log")
    if not log.is_labeled:
        raise InputError("suggest_truncation needs a labeled log")
    positives = [len(t) for t in log.traces if t.outcome == 1]
    negatives = [len(t) for t in log.traces if t.outcome == 0]
    minority = positives if len(positives) <= len(negatives) else negatives
    if not minority:
        logger.warning("Log has a single class; suggesting truncation from all traces")
        minority = positives or negatives
    lengths = sorted(minority)
    index = math.ceil(0.9 * len(lengths)) - 1
    return int(lengths[max(index, 0)])


def temporal_split(log: EventLog, spec: SplitSpec = SplitSpec()) -> Tuple[EventLog, EventLog]:
    """
    Split cases by start time; train events overlapping the test period are discarded.

    Args:
        log: Log whose traces all have at least one event.
        spec: Fraction of cases (by start order) that go to training.

    Returns:
        (train, test) logs with disjoint case sets.
    """
    if not 0 < spec.train_fraction < 1:
        raise ParameterError(f"train_fraction must be in (0, 1), got {spec.train_fraction}")
    if spec.mode != 'temporal':
        raise ParameterError(f"Unsupported split mode '{spec.mode}'")
    n = len(log.traces)
    if n < 2:
        raise SplitError(f"Temporal split needs at least 2 cases, got {n}")

    ordered = sorted(log.traces, key=lambda t: (t.start, t.events[0].row))
    n_train = min(max(math.ceil(spec.train_fraction * n - 1e-9), 1), n - 1)
    train_cases, test_cases = ordered[:n_train], ordered[n_train:]
    test_start = min(t.start for t in test_cases)

    train = []
    discarded = 0
    for trace in train_cases:
        events = [e for e in trace.events if e.timestamp < test_start]
        discarded += len(trace.events) - len(events)
        if events:
            train.append(trace if len(events) == len(trace.events) else replace(trace, events=events))
    if discarded:
        logger.info(f"Discarded {discarded} training event(s) overlapping the test period")
    return log.with_traces(train), log.with_traces(list(test_cases))


def log_statistics(log: EventLog, trunc_len: int) -> LogStats:
    lengths = [len(t) for t in log.traces]
    labeled = [t.outcome for t in log.traces if t.outcome is not None]
    return LogStats(
        n_traces=len(lengths),
        pos_class_ratio=float(np.mean(labeled)) if labeled else 0.0,
        median_length=float(np.median(lengths)) if lengths else 0.0,
        max_length=max(lengths) if lengths else 0,
        trunc_length=int(trunc_len),
        n_events=sum(lengths),
    )
