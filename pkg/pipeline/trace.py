"""
Trace Records and Serialization
===============================
The trace is the simulator's structured log: one record per observable
event, written as one JSON object per line with sorted keys, integer
femtosecond timestamps and hex payloads. Line-delimited text keeps golden
files diffable.

Schema (version 1)
------------------
Every record: v, t_fs, board (null for network-wide records), event.

    tx_start          dst, cmd, [payload], end_fs
    tx_end            dst, cmd
    tx_backpressure   dst, cmd, dropped_total
    rx_deliver        port, dst, cmd, [payload], latency_fs
    rx_filtered       port, dst, cmd
    rx_overflow       port, dst, cmd, [payload], overflow_total
    clk_applied       cmd, edge, tick
    clk_note          cmd, edge, note
    flag_edge         port, level, latency_fs
    pulse             tag, edge, tick
    id_assigned       id, round
    autoid_retry      round, unresolved
    script_error      pc, line, message
    script_halt       pc

Bump TRACE_SCHEMA_VERSION whenever a record's fields change.
"""

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional

import pandas as pd

TRACE_SCHEMA_VERSION = 1

EVENT_NAMES = (
    'tx_start', 'tx_end', 'tx_backpressure',
    'rx_deliver', 'rx_filtered', 'rx_overflow',
    'clk_applied', 'clk_note', 'flag_edge', 'pulse',
    'id_assigned', 'autoid_retry', 'script_error', 'script_halt',
)


@dataclass(frozen=True)
class TraceRecord:
    t_fs: int
    board: Optional[int]
    event: str
    fields: Dict[str, Any] = field(default_factory=dict)

    def get(self, key: str, default: Any = None) -> Any:
        return self.fields.get(key, default)

    def to_dict(self) -> Dict[str, Any]:
        out = dict(self.fields)
        out.update(v=TRACE_SCHEMA_VERSION, t_fs=self.t_fs, board=self.board, event=self.event)
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(',', ':'))


def write_trace(records: Iterable[TraceRecord], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', newline='\n') as f:
        for record in records:
            f.write(record.to_json())
            f.write('\n')
    return path


def read_trace(path: Path) -> List[TraceRecord]:
    records = []
    with open(path) as f:
        for line in f:
            if not line.strip():
                continue
            data = json.loads(line)
            if data.pop('v') != TRACE_SCHEMA_VERSION:
                raise ValueError(f"unsupported trace schema in {path}")
            records.append(TraceRecord(
                t_fs=data.pop('t_fs'),
                board=data.pop('board'),
                event=data.pop('event'),
                fields=data,
            ))
    return records


def trace_digest(records: Iterable[TraceRecord]) -> str:
    """SHA-256 of the serialized trace; equal digests mean byte-identical traces."""
    h = hashlib.sha256()
    for record in records:
        h.update(record.to_json().encode())
        h.update(b'\n')
    return h.hexdigest()


def trace_frame(records: Iterable[TraceRecord]) -> pd.DataFrame:
    """Flat DataFrame view of a trace (one column per field seen)."""
    rows = [record.to_dict() for record in records]
    if not rows:
        return pd.DataFrame(columns=['v', 't_fs', 'board', 'event'])
    df = pd.DataFrame(rows)
    leading = ['t_fs', 'board', 'event']
    return df[leading + [c for c in df.columns if c not in leading]]
