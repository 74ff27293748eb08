"""Per-segment branch-frequency reports and their JSON/CSV/SVG renderings.

The change-point timestamp is the timestamp of the first element of the
new segment, which is how drift dates are reported. Rendering is
byte-stable: identical inputs give identical bytes in every format.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from typing import Iterable, Mapping, Optional

from .choices import ChoiceDiagnostics, ChoiceSequence, diagnostics
from .changepoint import Segmentation
from .eventlog import format_timestamp, parse_timestamp
from .petri import InterestingPlace, PetriNet, hidden_skip_target

__all__ = [
    "SegmentStats",
    "PlaceReport",
    "DriftReport",
    "resolve_label_names",
    "summarize",
    "build_report",
    "render",
    "report_from_json",
]


@dataclass(frozen=True)
class SegmentStats:
    place: str
    index: int
    start_index: int          # element indices, half-open [start, end)
    end_index: int
    start_ts: datetime
    end_ts: datetime
    counts: tuple             # ((label, count), ...) over all labels 1..k
    frequencies: tuple        # ((label, fraction), ...) summing to 1

    @property
    def length(self) -> int:
        return self.end_index - self.start_index


@dataclass(frozen=True)
class ChangePointInfo:
    element_index: int
    timestamp: datetime


@dataclass(frozen=True)
class PlaceReport:
    place: str
    label_names: tuple        # ((label, display name), ...)
    segments: tuple           # tuple[SegmentStats, ...]
    change_points: tuple      # tuple[ChangePointInfo, ...]
    deltas: tuple             # per change: ((label, percentage-point diff), ...)
    gamma: float
    total_cost: float
    diagnostics: Optional[ChoiceDiagnostics] = None


@dataclass(frozen=True)
class DriftReport:
    places: tuple             # tuple[PlaceReport, ...]
    metadata: tuple           # sorted ((key, value), ...), all strings/numbers

    def metadata_dict(self) -> dict:
        return dict(self.metadata)


def resolve_label_names(net: PetriNet, place: InterestingPlace) -> dict:
    """Human-readable name per arc label; hidden transitions become
    "skip to <activity>" when that is unique, otherwise the tau symbol."""
    names = {}
    for tid, label in place.arc_labels:
        activity = net.label(tid)
        if activity is None:
            target = hidden_skip_target(net, tid)
            activity = f"skip to {target}" if target else "τ"
        names[label] = activity
    return names


def summarize(seq: ChoiceSequence, segm: Segmentation,
              label_names: Mapping[int, str],
              diag: Optional[ChoiceDiagnostics] = None) -> PlaceReport:
    """Per-segment frequency tables plus change points and deltas.

    ``diag`` overrides the recomputed diagnostics when the sequence was
    rebuilt from a dump that no longer carries the extraction flags.
    """
    labels = [label for _, label in seq.place.arc_labels]
    if diag is None:
        diag = diagnostics(seq)
    segments = []
    for idx, (a, b) in enumerate(segm.segments() if segm.n else []):
        counts = {label: 0 for label in labels}
        for el in seq.elements[a:b]:
            counts[el.label] += 1
        length = b - a
        freqs = tuple((label, counts[label] / length) for label in labels)
        segments.append(SegmentStats(
            place=seq.place.place,
            index=idx,
            start_index=a,
            end_index=b,
            start_ts=seq.elements[a].timestamp,
            end_ts=seq.elements[b - 1].timestamp,
            counts=tuple(sorted(counts.items())),
            frequencies=freqs,
        ))
    change_points = tuple(
        ChangePointInfo(b, seq.elements[b].timestamp) for b in segm.breakpoints)
    deltas = []
    for prev, nxt in zip(segments, segments[1:]):
        prev_f = dict(prev.frequencies)
        next_f = dict(nxt.frequencies)
        deltas.append(tuple((label, (next_f[label] - prev_f[label]) * 100.0)
                            for label in labels))
    return PlaceReport(
        place=seq.place.place,
        label_names=tuple(sorted(label_names.items())),
        segments=tuple(segments),
        change_points=change_points,
        deltas=tuple(deltas),
        gamma=segm.gamma,
        total_cost=segm.total_cost,
        diagnostics=diag,
    )


def build_report(places: Iterable[PlaceReport], metadata: Mapping) -> DriftReport:
    return DriftReport(tuple(places), tuple(sorted(metadata.items())))


# -- rendering ---------------------------------------------------------------


def render(report: DriftReport, fmt: str) -> bytes:
    if fmt == "json":
        return _render_json(report)
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "svg":
        return _render_svg(report)
    raise ValueError(f"unknown report format {fmt!r} (expected json, csv or svg)")


def _place_to_dict(pr: PlaceReport) -> dict:
    return {
        "place": pr.place,
        "gamma": pr.gamma,
        "total_cost": pr.total_cost,
        "labels": [{"label": lab, "name": name} for lab, name in pr.label_names],
        "segments": [
            {
                "index": s.index,
                "start_index": s.start_index,
                "end_index": s.end_index,
                "start_ts": format_timestamp(s.start_ts),
                "end_ts": format_timestamp(s.end_ts),
                "counts": [{"label": lab, "count": c} for lab, c in s.counts],
                "frequencies": [{"label": lab, "frequency": f}
                                for lab, f in s.frequencies],
            }
            for s in pr.segments
        ],
        "change_points": [
            {"element_index": c.element_index,
             "timestamp": format_timestamp(c.timestamp)}
            for c in pr.change_points
        ],
        "deltas": [
            [{"label": lab, "percentage_points": d} for lab, d in delta]
            for delta in pr.deltas
        ],
        "diagnostics": None if pr.diagnostics is None else {
            "elements": pr.diagnostics.elements,
            "label_counts": [{"label": lab, "count": c}
                             for lab, c in pr.diagnostics.label_counts],
            "traversal_trace_ratio": pr.diagnostics.traversal_trace_ratio,
            "fallback_timestamp_count": pr.diagnostics.fallback_timestamp_count,
            "ambiguous_alignment_count": pr.diagnostics.ambiguous_alignment_count,
            "skipped_no_timestamp": pr.diagnostics.skipped_no_timestamp,
            "missed_traversals": pr.diagnostics.missed_traversals,
            "initial_tokens": pr.diagnostics.initial_tokens,
        },
    }


def _render_json(report: DriftReport) -> bytes:
    doc = {
        "metadata": dict(report.metadata),
        "places": [_place_to_dict(pr) for pr in report.places],
    }
    return (json.dumps(doc, sort_keys=True, indent=2) + "\n").encode("utf-8")


def _render_csv(report: DriftReport) -> bytes:
    lines = ["place,segment,start_ts,end_ts,label,transition,count,frequency"]
    for pr in report.places:
        names = dict(pr.label_names)
        for seg in pr.segments:
            counts = dict(seg.counts)
            for label, freq in seg.frequencies:
                lines.append(",".join([
                    _csv_field(pr.place),
                    str(seg.index),
                    format_timestamp(seg.start_ts),
                    format_timestamp(seg.end_ts),
                    str(label),
                    _csv_field(names.get(label, "")),
                    str(counts[label]),
                    repr(freq),
                ]))
    return ("\n".join(lines) + "\n").encode("utf-8")


def _csv_field(text: str) -> str:
    if any(c in text for c in ',"\n'):
        return '"' + text.replace('"', '""') + '"'
    return text


# fixed palette; cycled when a place has more labels
_COLORS = ("#4e79a7", "#f28e2b", "#59a14f", "#e15759", "#b07aa1",
           "#76b7b2", "#edc948", "#9c755f")

_ROW_H = 150
_BAR_H = 60
_WIDTH = 960
_MARGIN = 70


def _render_svg(report: DriftReport) -> bytes:
    """Stacked per-segment frequency bars on a shared time axis, one row
    per place, a dashed marker per change point."""
    rows = len(report.places)
    height = _MARGIN + max(rows, 1) * _ROW_H
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{height}" viewBox="0 0 {_WIDTH} {height}">',
        f'<text x="{_MARGIN}" y="24" font-size="16" font-family="sans-serif">'
        'Branching-frequency drift report</text>',
    ]
    spans = []
    for pr in report.places:
        if pr.segments:
            spans.append((pr.segments[0].start_ts, pr.segments[-1].end_ts))
    if spans:
        t0 = min(s for s, _ in spans)
        t1 = max(e for _, e in spans)
        total = max((t1 - t0).total_seconds(), 1.0)
    else:
        t0 = None
        total = 1.0
    plot_w = _WIDTH - 2 * _MARGIN

    def x_of(ts):
        return _MARGIN + plot_w * (ts - t0).total_seconds() / total

    for row, pr in enumerate(report.places):
        top = _MARGIN + row * _ROW_H
        out.append(f'<text x="{_MARGIN}" y="{top - 8}" font-size="13" '
                   f'font-family="sans-serif">place {_xml_escape(pr.place)}</text>')
        names = dict(pr.label_names)
        for seg in pr.segments:
            x_a = x_of(seg.start_ts)
            x_b = max(x_of(seg.end_ts), x_a + 2.0)
            y = top
            for i, (label, freq) in enumerate(seg.frequencies):
                h = _BAR_H * freq
                color = _COLORS[(label - 1) % len(_COLORS)]
                out.append(
                    f'<rect x="{x_a:.2f}" y="{y:.2f}" '
                    f'width="{x_b - x_a:.2f}" height="{h:.2f}" '
                    f'fill="{color}" stroke="#ffffff" stroke-width="0.5">'
                    f'<title>{_xml_escape(names.get(label, str(label)))}: '
                    f'{freq * 100.0:.1f}%</title></rect>')
                y += h
            out.append(
                f'<text x="{x_a + 3.0:.2f}" y="{top + _BAR_H + 14}" '
                f'font-size="10" font-family="sans-serif">'
                + " / ".join(f"{freq * 100.0:.1f}%" for _, freq in seg.frequencies)
                + "</text>")
        for cp in pr.change_points:
            x = x_of(cp.timestamp)
            out.append(
                f'<line class="change-point" x1="{x:.2f}" y1="{top - 4}" '
                f'x2="{x:.2f}" y2="{top + _BAR_H + 4}" stroke="#333333" '
                f'stroke-width="1.5" stroke-dasharray="4,3"/>')
            out.append(
                f'<text x="{x + 3.0:.2f}" y="{top + _BAR_H + 28}" font-size="10" '
                f'font-family="sans-serif">{format_timestamp(cp.timestamp)[:10]}'
                '</text>')
        legend_y = top + _BAR_H + 44
        legend_x = float(_MARGIN)
        for label, name in pr.label_names:
            color = _COLORS[(label - 1) % len(_COLORS)]
            out.append(f'<rect x="{legend_x:.2f}" y="{legend_y - 9}" width="10" '
                       f'height="10" fill="{color}"/>')
            out.append(f'<text x="{legend_x + 14.0:.2f}" y="{legend_y}" '
                       f'font-size="11" font-family="sans-serif">'
                       f'{label}: {_xml_escape(name)}</text>')
            legend_x += 20.0 + 7.0 * len(f"{label}: {name}")
    out.append("</svg>")
    out.append("")
    return "\n".join(out).encode("utf-8")


def _xml_escape(text: str) -> str:
    return (text.replace("&", "&amp;").replace("<", "&lt;")
            .replace(">", "&gt;").replace('"', "&quot;"))


# -- JSON round-trip ---------------------------------------------------------


def report_from_json(data) -> DriftReport:
    """Rebuild a DriftReport from render(report, "json") output."""
    if isinstance(data, (bytes, str)):
        data = json.loads(data)
    places = []
    for pd in data["places"]:
        segments = tuple(
            SegmentStats(
                place=pd["place"],
                index=sd["index"],
                start_index=sd["start_index"],
                end_index=sd["end_index"],
                start_ts=parse_timestamp(sd["start_ts"])[0],
                end_ts=parse_timestamp(sd["end_ts"])[0],
                counts=tuple((c["label"], c["count"]) for c in sd["counts"]),
                frequencies=tuple((f["label"], f["frequency"])
                                  for f in sd["frequencies"]),
            )
            for sd in pd["segments"])
        change_points = tuple(
            ChangePointInfo(cd["element_index"],
                            parse_timestamp(cd["timestamp"])[0])
            for cd in pd["change_points"])
        deltas = tuple(
            tuple((d["label"], d["percentage_points"]) for d in delta)
            for delta in pd["deltas"])
        diag = None
        dd = pd.get("diagnostics")
        if dd is not None:
            diag = ChoiceDiagnostics(
                place=pd["place"],
                elements=dd["elements"],
                label_counts=tuple((c["label"], c["count"])
                                   for c in dd["label_counts"]),
                traversal_trace_ratio=dd["traversal_trace_ratio"],
                fallback_timestamp_count=dd["fallback_timestamp_count"],
                ambiguous_alignment_count=dd["ambiguous_alignment_count"],
                skipped_no_timestamp=dd["skipped_no_timestamp"],
                missed_traversals=dd["missed_traversals"],
                initial_tokens=dd["initial_tokens"],
            )
        places.append(PlaceReport(
            place=pd["place"],
            label_names=tuple((ld["label"], ld["name"]) for ld in pd["labels"]),
            segments=segments,
            change_points=change_points,
            deltas=deltas,
            gamma=pd["gamma"],
            total_cost=pd["total_cost"],
            diagnostics=diag,
        ))
    return DriftReport(tuple(places), tuple(sorted(data["metadata"].items())))
