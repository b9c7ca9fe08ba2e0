"""
Prefix extraction and sequence encodings.

Aggregation encoding turns a prefix into counts of categorical levels and
summary statistics of numeric attributes; index-based encoding concatenates
per-event blocks, zero-padded up to a fixed length.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Tuple

import numpy as np
import pandas as pd

from stabilis.errors import EncodeError, InputError, ParameterError
from stabilis.event_log import OTHER_LEVEL, Event, EventLog, LogSchema

logger = logging.getLogger(__name__)

ENCODER_KINDS = ('aggregation', 'index_padded', 'index_bucketed')
DERIVED_NAMES = ['hour', 'weekday', 'month', 'elapsed', 'delta', 'event_nr', 'open_cases']
NUMERIC_STATS = ('mean', 'max', 'min', 'sum', 'std')


@dataclass(frozen=True)
class LabeledPrefix:
    case_id: str
    prefix_len: int
    events: List[Event]
    case_attrs: Dict[str, Any]
    outcome: int


@dataclass
class FeatureMatrix:
    values: np.ndarray
    columns: List[str]
    labels: np.ndarray
    case_ids: List[str]
    prefix_lens: np.ndarray

    def __len__(self) -> int:
        return self.values.shape[0]

    def to_csv(self, path: Any) -> Path:
        """Debug export: header = column schema plus row back-references."""
        frame = pd.DataFrame(self.values, columns=self.columns)
        frame.insert(0, 'prefix_len', self.prefix_lens)
        frame.insert(0, 'case_id', self.case_ids)
        frame['label'] = self.labels
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        frame.to_csv(path, index=False)
        return path


@dataclass(frozen=True)
class EncoderSpec:
    kind: str
    schema: LogSchema
    vocabulary: Dict[str, List[str]]
    case_vocabulary: Dict[str, List[str]]
    max_len: Optional[int] = None
    columns: List[str] = field(default_factory=list)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'kind': self.kind,
            'schema': self.schema.to_dict(),
            'vocabulary': self.vocabulary,
            'case_vocabulary': self.case_vocabulary,
            'max_len': self.max_len,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> 'EncoderSpec':
        return _with_columns(cls(
            kind=data['kind'],
            schema=LogSchema.from_dict(data['schema']),
            vocabulary={k: list(v) for k, v in data['vocabulary'].items()},
            case_vocabulary={k: list(v) for k, v in data['case_vocabulary'].items()},
            max_len=data.get('max_len'),
        ))


def extract_prefixes(log: EventLog, min_len: int = 1, max_len: Optional[int] = None) -> List[LabeledPrefix]:
    """
    Every prefix of lengths min_len..min(L, max_len) of every labeled trace.

    Args:
        log: Labeled log.
        min_len: Shortest prefix.
        max_len: Longest prefix; defaults to the longest trace.

    Returns:
        Prefixes ordered by trace, then by length.
    """
    if max_len is None:
        max_len = max((len(t) for t in log.traces), default=min_len)
    if min_len < 1:
        raise ParameterError(f"min_len must be >= 1, got {min_len}")
    if min_len > max_len:
        raise ParameterError(f"min_len ({min_len}) exceeds max_len ({max_len})")

    prefixes = []
    for trace in log.traces:
        if trace.outcome is None:
            raise InputError(f"Trace '{trace.case_id}' has no outcome; label the log first")
        for length in range(min_len, min(len(trace), max_len) + 1):
            prefixes.append(LabeledPrefix(trace.case_id, length, trace.events[:length], trace.case_attrs, trace.outcome))
    return prefixes


def clip_prefix(prefix: LabeledPrefix, length: int) -> LabeledPrefix:
    """The first `length` events of a prefix (identity when already shorter)."""
    if prefix.prefix_len <= length:
        return prefix
    return LabeledPrefix(prefix.case_id, length, prefix.events[:length], prefix.case_attrs, prefix.outcome)


def _levels(values: Iterable[Any]) -> List[str]:
    levels = sorted({str(v) for v in values if v is not None} - {OTHER_LEVEL})
    return levels + [OTHER_LEVEL]


def _fit_vocabulary(prefixes: List[LabeledPrefix], schema: LogSchema) -> Tuple[Dict[str, List[str]], Dict[str, List[str]]]:
    longest: Dict[str, LabeledPrefix] = {}
    for prefix in prefixes:
        kept = longest.get(prefix.case_id)
        if kept is None or prefix.prefix_len > kept.prefix_len:
            longest[prefix.case_id] = prefix

    event_attrs = [schema.activity] + schema.event_categorical
    vocabulary = {}
    for attr in event_attrs:
        values = []
        for prefix in longest.values():
            for event in prefix.events:
                values.append(event.activity if attr == schema.activity else event.payload.get(attr))
        vocabulary[attr] = _levels(values)
    case_vocabulary = {
        attr: _levels(p.case_attrs.get(attr) for p in longest.values())
        for attr in schema.case_categorical
    }
    return vocabulary, case_vocabulary


def _event_block_columns(spec: EncoderSpec) -> List[str]:
    schema = spec.schema
    columns = []
    for attr, levels in spec.vocabulary.items():
        columns.extend(f"{attr}={level}" for level in levels)
    columns.extend(schema.event_numeric)
    columns.extend(f"present__{attr}" for attr in schema.event_attributes)
    columns.extend(DERIVED_NAMES)
    return columns


def _case_block_columns(spec: EncoderSpec) -> List[str]:
    columns = []
    for attr, levels in spec.case_vocabulary.items():
        columns.extend(f"case__{attr}={level}" for level in levels)
    columns.extend(f"case__{attr}" for attr in spec.schema.case_numeric)
    return columns


def _aggregation_columns(spec: EncoderSpec) -> List[str]:
    schema = spec.schema
    columns = []
    for attr, levels in spec.vocabulary.items():
        columns.extend(f"agg__{attr}={level}" for level in levels)
    for attr in schema.event_numeric:
        columns.extend(f"{attr}__{stat}" for stat in NUMERIC_STATS)
    columns.extend(f"present__{attr}__mean" for attr in schema.event_attributes)
    columns.extend(f"last__{name}" for name in DERIVED_NAMES)
    return columns + _case_block_columns(spec)


def _with_columns(spec: EncoderSpec) -> EncoderSpec:
    if spec.kind == 'aggregation':
        columns = _aggregation_columns(spec)
    else:
        block = _event_block_columns(spec)
        columns = [f"e{i}__{c}" for i in range(1, spec.max_len + 1) for c in block] + _case_block_columns(spec)
    return EncoderSpec(spec.kind, spec.schema, spec.vocabulary, spec.case_vocabulary, spec.max_len, columns)


class _EventCoder:
    """Per-event and per-case vectors under a fitted vocabulary."""

    def __init__(self, spec: EncoderSpec):
        self.schema = spec.schema
        self.level_index: List[Tuple[str, Dict[str, int], int]] = []
        offset = 0
        for attr, levels in spec.vocabulary.items():
            self.level_index.append((attr, {level: i for i, level in enumerate(levels)}, offset))
            offset += len(levels)
        self.n_onehot = offset
        self.numeric = self.schema.event_numeric
        self.flags = self.schema.event_attributes
        self.n_numeric = len(self.numeric)
        self.n_flags = len(self.flags)
        self.width = self.n_onehot + self.n_numeric + self.n_flags + len(DERIVED_NAMES)

        self.case_index: List[Tuple[str, Dict[str, int], int]] = []
        offset = 0
        for attr, levels in spec.case_vocabulary.items():
            self.case_index.append((attr, {level: i for i, level in enumerate(levels)}, offset))
            offset += len(levels)
        self.case_width = offset + len(self.schema.case_numeric)

    def event_vector(self, event: Event) -> np.ndarray:
        vec = np.zeros(self.width)
        for attr, index, offset in self.level_index:
            value = event.activity if attr == self.schema.activity else event.payload.get(attr)
            if value is None:
                continue
            position = index.get(str(value), index[OTHER_LEVEL])
            vec[offset + position] = 1.0
        cursor = self.n_onehot
        for attr in self.numeric:
            value = event.payload.get(attr)
            vec[cursor] = 0.0 if value is None else float(value)
            cursor += 1
        for attr in self.flags:
            present = event.present.get(attr, event.payload.get(attr) is not None)
            vec[cursor] = 1.0 if present else 0.0
            cursor += 1
        if event.derived is not None:
            vec[cursor:] = event.derived.as_list()
        return vec

    def case_vector(self, case_attrs: Dict[str, Any]) -> np.ndarray:
        vec = np.zeros(self.case_width)
        for attr, index, offset in self.case_index:
            value = case_attrs.get(attr)
            if value is None:
                continue
            vec[offset + index.get(str(value), index[OTHER_LEVEL])] = 1.0
        cursor = self.case_width - len(self.schema.case_numeric)
        for attr in self.schema.case_numeric:
            value = case_attrs.get(attr)
            vec[cursor] = 0.0 if value is None else float(value)
            cursor += 1
        return vec


def _event_matrix(coder: _EventCoder, prefix: LabeledPrefix, cache: Dict[Tuple[str, int], np.ndarray]) -> np.ndarray:
    rows = []
    for position, event in enumerate(prefix.events):
        key = (prefix.case_id, position)
        vec = cache.get(key)
        if vec is None:
            vec = coder.event_vector(event)
            cache[key] = vec
        rows.append(vec)
    return np.vstack(rows) if rows else np.zeros((0, coder.width))


def _matrix(spec: EncoderSpec, prefixes: List[LabeledPrefix], rows: List[np.ndarray]) -> FeatureMatrix:
    width = len(spec.columns)
    values = np.vstack(rows) if rows else np.zeros((0, width))
    return FeatureMatrix(
        values=values,
        columns=list(spec.columns),
        labels=np.array([p.outcome for p in prefixes], dtype=int),
        case_ids=[p.case_id for p in prefixes],
        prefix_lens=np.array([p.prefix_len for p in prefixes], dtype=int),
    )


def fit_aggregation(prefixes: List[LabeledPrefix], schema: LogSchema) -> EncoderSpec:
    """Freeze the categorical vocabulary for the aggregation encoding."""
    if not prefixes:
        raise EncodeError("Cannot fit an encoder on zero prefixes")
    vocabulary, case_vocabulary = _fit_vocabulary(prefixes, schema)
    return _with_columns(EncoderSpec('aggregation', schema, vocabulary, case_vocabulary))


def encode_aggregation(spec: EncoderSpec, prefixes: List[LabeledPrefix]) -> FeatureMatrix:
    """
    Level counts, numeric mean/max/min/sum/std (population), indicator shares,
    the last event's derived features and the case attributes.
    """
    coder = _EventCoder(spec)
    cache: Dict[Tuple[str, int], np.ndarray] = {}
    num = slice(coder.n_onehot, coder.n_onehot + coder.n_numeric)
    flags = slice(num.stop, num.stop + coder.n_flags)
    derived = slice(flags.stop, coder.width)

    rows = []
    for prefix in prefixes:
        events = _event_matrix(coder, prefix, cache)
        numeric = events[:, num]
        stats = np.column_stack([
            numeric.mean(axis=0),
            numeric.max(axis=0),
            numeric.min(axis=0),
            numeric.sum(axis=0),
            numeric.std(axis=0),
        ]).ravel() if coder.n_numeric else np.zeros(0)
        rows.append(np.concatenate([
            events[:, :coder.n_onehot].sum(axis=0),
            stats,
            events[:, flags].mean(axis=0),
            events[-1, derived],
            coder.case_vector(prefix.case_attrs),
        ]))
    return _matrix(spec, prefixes, rows)


def fit_index(prefixes: List[LabeledPrefix], schema: LogSchema, max_len: int, kind: str = 'index_padded') -> EncoderSpec:
    """Freeze vocabulary and block count for an index-based encoding."""
    if not prefixes:
        raise EncodeError("Cannot fit an encoder on zero prefixes")
    if kind not in ('index_padded', 'index_bucketed'):
        raise ParameterError(f"Not an index encoding kind: '{kind}'")
    if max_len < 1:
        raise ParameterError(f"max_len must be >= 1, got {max_len}")
    vocabulary, case_vocabulary = _fit_vocabulary(prefixes, schema)
    return _with_columns(EncoderSpec(kind, schema, vocabulary, case_vocabulary, max_len))


def encode_index_padded(spec: EncoderSpec, prefixes: List[LabeledPrefix]) -> FeatureMatrix:
    """One block per event position; positions past the prefix are all zeros."""
    coder = _EventCoder(spec)
    cache: Dict[Tuple[str, int], np.ndarray] = {}
    width = coder.width
    rows = []
    for prefix in prefixes:
        if prefix.prefix_len > spec.max_len:
            raise EncodeError(
                f"Prefix of length {prefix.prefix_len} (case '{prefix.case_id}') exceeds max_len {spec.max_len}"
            )
        row = np.zeros(spec.max_len * width + coder.case_width)
        events = _event_matrix(coder, prefix, cache)
        row[:events.size] = events.ravel()
        row[spec.max_len * width:] = coder.case_vector(prefix.case_attrs)
        rows.append(row)
    return _matrix(spec, prefixes, rows)


def fit_encoder(kind: str, prefixes: List[LabeledPrefix], schema: LogSchema, max_len: Optional[int] = None) -> EncoderSpec:
    if kind == 'aggregation':
        return fit_aggregation(prefixes, schema)
    if kind in ('index_padded', 'index_bucketed'):
        if max_len is None:
            max_len = max(p.prefix_len for p in prefixes)
        return fit_index(prefixes, schema, max_len, kind)
    raise ParameterError(f"Unknown encoder kind '{kind}'")


def encode(spec: EncoderSpec, prefixes: List[LabeledPrefix]) -> FeatureMatrix:
    if spec.kind == 'aggregation':
        return encode_aggregation(spec, prefixes)
    return encode_index_padded(spec, prefixes)


def bucket_by_length(prefixes: List[LabeledPrefix]) -> Dict[int, List[LabeledPrefix]]:
    """Partition prefixes by length; keys ascending, empty buckets absent."""
    buckets: Dict[int, List[LabeledPrefix]] = {}
    for prefix in prefixes:
        buckets.setdefault(prefix.prefix_len, []).append(prefix)
    return dict(sorted(buckets.items()))


def route_bucket(available: Iterable[int], length: int) -> int:
    """Bucket `length` if trained, else the largest bucket below it, else the smallest bucket."""
    keys = sorted(available)
    if not keys:
        raise EncodeError("No trained buckets to route to")
    below = [k for k in keys if k <= length]
    return below[-1] if below else keys[0]
