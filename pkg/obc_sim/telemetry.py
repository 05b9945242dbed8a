"""
Structured run telemetry, written as line-delimited JSON.

Every record carries the schema version, a record type and the SimTime tick
it was emitted at.
"""
from __future__ import annotations

import json
import math
from collections import Counter
from enum import Enum
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional

TELEMETRY_SCHEMA = 1


def _plain(value: Any) -> Any:
    if isinstance(value, float) and math.isnan(value):
        return None
    if hasattr(value, 'tolist'):
        return _plain(value.tolist())
    if isinstance(value, tuple):
        return [_plain(v) for v in value]
    if isinstance(value, list):
        return [_plain(v) for v in value]
    if isinstance(value, dict):
        return {str(k): _plain(v) for k, v in value.items()}
    if isinstance(value, Enum):
        return value.value
    return value


class TelemetryLog:
    """
    In-memory record stream with a JSONL writer.

    Usage Example:
        >>> log = TelemetryLog()
        >>> log.emit('boot', 0, image='primary')['type']
        'boot'
    """

    def __init__(self):
        self.records: List[Dict[str, Any]] = []
        self.counts: Counter = Counter()

    def emit(self, record_type: str, t: int, **fields: Any) -> Dict[str, Any]:
        record = {'schema': TELEMETRY_SCHEMA, 'type': record_type, 't': int(t)}
        record.update({key: _plain(value) for key, value in fields.items()})
        self.records.append(record)
        self.counts[record_type] += 1
        return record

    def of_type(self, *record_types: str) -> List[Dict[str, Any]]:
        return [rec for rec in self.records if rec['type'] in record_types]

    def last(self, record_type: str) -> Optional[Dict[str, Any]]:
        for rec in reversed(self.records):
            if rec['type'] == record_type:
                return rec
        return None

    def __iter__(self) -> Iterator[Dict[str, Any]]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def lines(self) -> Iterator[str]:
        for rec in self.records:
            yield json.dumps(rec, sort_keys=True, separators=(',', ':'))

    def write_jsonl(self, path: (str | Path)) -> Path:
        path = Path(path)
        with path.open('w', encoding='utf-8', newline='\n') as f:
            for line in self.lines():
                f.write(line)
                f.write('\n')
        return path
