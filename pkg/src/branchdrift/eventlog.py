"""Event-log model and XES (subset) reader/writer.

Only ``concept:name`` and ``time:timestamp`` are interpreted; every other
string/date literal on an event is kept as an opaque string attribute.
Timestamps are normalized to UTC with millisecond precision so ordering is
platform independent.
"""

from __future__ import annotations

import gzip
import io
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from typing import IO, Iterable, Union
from xml.etree import ElementTree as ET

__all__ = [
    "Event",
    "Trace",
    "EventLog",
    "ParseIssue",
    "XesError",
    "parse_xes",
    "write_xes",
    "log_stats",
    "parse_timestamp",
    "format_timestamp",
]

EPOCH = datetime(1970, 1, 1, tzinfo=timezone.utc)

_TS_RE = re.compile(
    r"^(\d{4})-(\d{2})-(\d{2})[T ](\d{2}):(\d{2}):(\d{2})"
    r"(?:\.(\d+))?(Z|[+-]\d{2}:?\d{2})?$"
)


class XesError(ValueError):
    """Raised when an XES document cannot be parsed at all."""


@dataclass(frozen=True)
class Event:
    activity: str
    timestamp: datetime            # tz-aware, UTC, millisecond precision
    attrs: tuple = ()              # pass-through (key, value) string pairs

    def __post_init__(self):
        if not self.activity:
            raise ValueError("event activity must be non-empty")
        if self.timestamp.tzinfo is None:
            raise ValueError("event timestamp must be timezone-aware")


@dataclass(frozen=True)
class Trace:
    case_id: str
    events: tuple  # tuple[Event, ...], non-decreasing timestamps


@dataclass(frozen=True)
class ParseIssue:
    """One skipped event or warning produced while reading a log."""

    kind: str        # "event-error" | "trace-dropped" | "warning"
    detail: str
    case_id: str = ""


@dataclass(frozen=True)
class EventLog:
    traces: tuple  # tuple[Trace, ...]
    source: str = "<memory>"
    issues: tuple = ()  # tuple[ParseIssue, ...]

    @property
    def trace_count(self) -> int:
        return len(self.traces)

    @property
    def event_count(self) -> int:
        return sum(len(t.events) for t in self.traces)

    def trace_by_case(self) -> dict:
        return {t.case_id: t for t in self.traces}


def parse_timestamp(text: str) -> "tuple[datetime, bool]":
    """Parse an ISO-8601 timestamp.

    Returns (instant normalized to UTC and truncated to milliseconds,
    whether an explicit timezone was present). Timestamps without a zone
    are interpreted as UTC.
    """
    m = _TS_RE.match(text.strip())
    if m is None:
        raise ValueError(f"unparseable timestamp: {text!r}")
    y, mo, d, h, mi, s = (int(m.group(i)) for i in range(1, 7))
    frac = m.group(7) or ""
    micros = int((frac + "000000")[:6]) if frac else 0
    micros -= micros % 1000  # truncate to milliseconds
    tz_text = m.group(8)
    if tz_text is None or tz_text == "":
        tz, had_tz = timezone.utc, False
    elif tz_text == "Z":
        tz, had_tz = timezone.utc, True
    else:
        sign = 1 if tz_text[0] == "+" else -1
        hh = int(tz_text[1:3])
        mm = int(tz_text[-2:])
        tz, had_tz = timezone(sign * timedelta(hours=hh, minutes=mm)), True
    dt = datetime(y, mo, d, h, mi, s, micros, tzinfo=tz)
    return dt.astimezone(timezone.utc), had_tz


def format_timestamp(dt: datetime) -> str:
    """Millisecond ISO-8601 in UTC; inverse of parse_timestamp."""
    dt = dt.astimezone(timezone.utc)
    return dt.strftime("%Y-%m-%dT%H:%M:%S.") + f"{dt.microsecond // 1000:03d}+00:00"


def _local(tag: str) -> str:
    return tag.rsplit("}", 1)[-1]


def _open_stream(source) -> "tuple[IO[bytes], str]":
    if hasattr(source, "read"):
        data = source.read()
        if isinstance(data, str):
            data = data.encode("utf-8")
        name = getattr(source, "name", "<stream>")
    else:
        name = str(source)
        with open(source, "rb") as fh:
            data = fh.read()
    if data[:2] == b"\x1f\x8b":  # gzip magic, covers .xes.gz
        data = gzip.decompress(data)
    return io.BytesIO(data), name


def parse_xes(source: Union[str, IO]) -> EventLog:
    """Read an XES document (plain or gzipped) into an EventLog.

    One Trace per ``<trace>``, one Event per ``<event>``; events are kept
    in document order and then stably sorted by timestamp. Events missing
    ``concept:name`` or ``time:timestamp`` are collected as issues; a trace
    is dropped only when all of its events are invalid.
    """
    stream, name = _open_stream(source)
    try:
        tree = ET.parse(stream)
    except ET.ParseError as exc:
        raise XesError(f"{name}: malformed XML at line {exc.position[0]}, "
                       f"column {exc.position[1]}: {exc.msg}") from exc

    root = tree.getroot()
    traces = []
    issues = []
    seen_cases = {}
    anonymous = 0

    for trace_el in root:
        if _local(trace_el.tag) != "trace":
            continue
        case_id = None
        events = []
        had_events = False
        for child in trace_el:
            tag = _local(child.tag)
            if tag == "event":
                had_events = True
                ev, err = _parse_event(child)
                if ev is not None:
                    events.append(ev)
                else:
                    issues.append(ParseIssue("event-error", err,
                                             case_id or "<unknown>"))
            elif child.get("key") == "concept:name":
                case_id = child.get("value")
        if case_id is None:
            anonymous += 1
            case_id = f"case_{anonymous}"
            issues.append(ParseIssue("warning",
                                     "trace without concept:name, "
                                     f"assigned id {case_id}", case_id))
        if case_id in seen_cases:
            seen_cases[case_id] += 1
            new_id = f"{case_id}#{seen_cases[case_id]}"
            issues.append(ParseIssue("warning",
                                     f"duplicate case id {case_id!r}, "
                                     f"renamed to {new_id!r}", case_id))
            case_id = new_id
        else:
            seen_cases[case_id] = 1
        if had_events and not events:
            issues.append(ParseIssue("trace-dropped",
                                     "all events invalid", case_id))
            continue
        events.sort(key=lambda e: e.timestamp)  # stable: doc order kept on ties
        traces.append(Trace(case_id, tuple(events)))

    if not traces:
        raise XesError(f"{name}: no traces in document")
    return EventLog(tuple(traces), source=name, issues=tuple(issues))


def _parse_event(event_el):
    activity = None
    ts_text = None
    attrs = []
    for attr in event_el:
        key = attr.get("key")
        value = attr.get("value")
        if key == "concept:name":
            activity = value
        elif key == "time:timestamp":
            ts_text = value
        elif key is not None and value is not None \
                and _local(attr.tag) in ("string", "date", "int", "float", "boolean", "id"):
            attrs.append((key, value))
    if not activity:
        return None, "event missing concept:name"
    if not ts_text:
        return None, f"event {activity!r} missing time:timestamp"
    try:
        ts, _ = parse_timestamp(ts_text)
    except ValueError as exc:
        return None, str(exc)
    return Event(activity, ts, tuple(attrs)), None


def write_xes(log: EventLog) -> str:
    """Serialize to XES; parse_xes(write_xes(log)) preserves
    (case_id, activity, timestamp) for every event."""
    out = ['<?xml version="1.0" encoding="UTF-8"?>',
           '<log xes.version="1.0" xes.features="">']
    for trace in log.traces:
        out.append("  <trace>")
        out.append(f'    <string key="concept:name" value="{_xml_escape(trace.case_id)}"/>')
        for ev in trace.events:
            out.append("    <event>")
            out.append(f'      <string key="concept:name" value="{_xml_escape(ev.activity)}"/>')
            out.append(f'      <date key="time:timestamp" value="{format_timestamp(ev.timestamp)}"/>')
            for key, value in ev.attrs:
                out.append(f'      <string key="{_xml_escape(key)}" value="{_xml_escape(value)}"/>')
            out.append("    </event>")
        out.append("  </trace>")
    out.append("</log>")
    out.append("")
    return "\n".join(out)


def _xml_escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


def log_stats(log: EventLog) -> dict:
    """Exact counts plus sorted activity vocabulary and time span."""
    activities = sorted({ev.activity for t in log.traces for ev in t.events})
    timestamps = [ev.timestamp for t in log.traces for ev in t.events]
    return {
        "source": log.source,
        "traces": log.trace_count,
        "events": log.event_count,
        "empty_traces": sum(1 for t in log.traces if not t.events),
        "activities": activities,
        "first_event": format_timestamp(min(timestamps)) if timestamps else None,
        "last_event": format_timestamp(max(timestamps)) if timestamps else None,
        "issues": len(log.issues),
    }
