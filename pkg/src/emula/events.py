"""Longitudinal patient event streams.

Times are hours since each patient's record origin. Within a patient, events
are ordered by ``(time_h, kind, code)`` so iteration is deterministic.
"""
from __future__ import annotations

import csv
import io
import math
from bisect import bisect_left
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Iterator

from .errors import DuplicateDeath, MalformedRow, NegativeTime, UnknownPatient

CSV_HEADER = ("patient_id", "time_h", "kind", "code", "value")


class Kind(str, Enum):
    Admission = "Admission"
    Measurement = "Measurement"
    Drug = "Drug"
    Procedure = "Procedure"
    Outcome = "Outcome"


@dataclass(frozen=True, slots=True)
class EventRecord:
    patient_id: str
    time_h: float
    kind: Kind
    code: str
    value: float | None = None

    def sort_key(self):
        return (self.time_h, self.kind.value, self.code)


def _is_death(ev: EventRecord) -> bool:
    return ev.kind is Kind.Outcome and ev.code == "death"


class EventStore:
    """Immutable per-patient, time-sorted collection of events."""

    def __init__(self, events: Iterable[EventRecord] = ()):
        by_patient: dict[str, list[EventRecord]] = {}
        for ev in events:
            by_patient.setdefault(ev.patient_id, []).append(ev)
        self._events: dict[str, tuple[EventRecord, ...]] = {}
        vocab = set()
        for pid in sorted(by_patient):
            seq = sorted(by_patient[pid], key=EventRecord.sort_key)
            if sum(_is_death(ev) for ev in seq) > 1:
                raise DuplicateDeath(pid)
            self._events[pid] = tuple(seq)
            vocab.update(ev.code for ev in seq)
        self._patients = tuple(self._events)
        self._vocabulary = frozenset(vocab)

    @property
    def patients(self) -> tuple[str, ...]:
        return self._patients

    @property
    def vocabulary(self) -> frozenset[str]:
        return self._vocabulary

    def events(self, patient: str) -> tuple[EventRecord, ...]:
        try:
            return self._events[patient]
        except KeyError:
            raise UnknownPatient(patient) from None

    def __getitem__(self, patient: str) -> tuple[EventRecord, ...]:
        return self.events(patient)

    def __contains__(self, patient) -> bool:
        return patient in self._events

    def __iter__(self) -> Iterator[str]:
        return iter(self._patients)

    def __len__(self) -> int:
        return len(self._patients)

    def n_events(self) -> int:
        return sum(len(v) for v in self._events.values())

    def records(self) -> Iterator[EventRecord]:
        for pid in self._patients:
            yield from self._events[pid]

    def merge(self, other: EventStore) -> EventStore:
        return EventStore([*self.records(), *other.records()])

    def __eq__(self, other) -> bool:
        if not isinstance(other, EventStore):
            return NotImplemented
        return self._events == other._events

    def __repr__(self):
        return f"EventStore(patients={len(self)}, events={self.n_events()})"


def query_window(store: EventStore, patient: str, t_lo: float, t_hi: float, code: str) -> list[EventRecord]:
    """Events of ``patient`` with ``code`` and ``t_lo <= time_h < t_hi``."""
    if t_lo > t_hi:
        raise ValueError(f"t_lo={t_lo} > t_hi={t_hi}")
    seq = store.events(patient)
    times = [ev.time_h for ev in seq]
    start = bisect_left(times, t_lo)
    stop = bisect_left(times, t_hi)
    return [ev for ev in seq[start:stop] if ev.code == code]


def _parse_row(row: list[str], line: int) -> EventRecord:
    if len(row) != 5:
        raise MalformedRow(line, f"expected 5 fields, got {len(row)}")
    pid, t_raw, kind_raw, code, v_raw = row
    if not pid:
        raise MalformedRow(line, "empty patient_id")
    if not code:
        raise MalformedRow(line, "empty code")
    try:
        t = float(t_raw)
    except ValueError:
        raise MalformedRow(line, f"bad time {t_raw!r}") from None
    if not math.isfinite(t) or t < 0:
        raise NegativeTime(line)
    try:
        kind = Kind(kind_raw)
    except ValueError:
        raise MalformedRow(line, f"bad kind {kind_raw!r}") from None
    if v_raw == "":
        value = None
    else:
        try:
            value = float(v_raw)
        except ValueError:
            raise MalformedRow(line, f"bad value {v_raw!r}") from None
    return EventRecord(pid, t, kind, code, value)


def read_events(fh) -> EventStore:
    reader = csv.reader(fh)
    try:
        header = next(reader)
    except StopIteration:
        raise MalformedRow(1, "missing header") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise MalformedRow(1, f"header must be {','.join(CSV_HEADER)}")
    records = [_parse_row(row, i) for i, row in enumerate(reader, start=2)]
    return EventStore(records)


def load_events(path) -> EventStore:
    """Load an event CSV (``patient_id,time_h,kind,code,value``)."""
    with open(path, newline="", encoding="utf-8") as fh:
        return read_events(fh)


def _fmt(x: float) -> str:
    # repr is the shortest round-tripping form
    return repr(float(x))


def write_events(store: EventStore, fh) -> None:
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for ev in store.records():
        w.writerow([ev.patient_id, _fmt(ev.time_h), ev.kind.value, ev.code,
                    "" if ev.value is None else _fmt(ev.value)])


def save_events(store: EventStore, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        write_events(store, fh)


def events_to_csv(store: EventStore) -> str:
    buf = io.StringIO()
    write_events(store, buf)
    return buf.getvalue()
