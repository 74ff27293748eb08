"""branchdrift command line: the detection pipeline plus one subcommand
per stage so intermediate results can be inspected or piped via files.

Exit codes: 0 success, 1 structural findings escalated by --strict,
2 input/parameter errors. Warnings go to stderr as JSON lines.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
from pathlib import Path

from . import __version__
from .alignment import (CostScheme, alignment_from_dict, alignment_to_dict,
                        align_log, default_state_budget)
from .changepoint import (active_backend, encode, exact_dp, pelt,
                          sweep_penalty)
from .choices import (ChoiceDiagnostics, ChoiceElement, ChoiceSequence,
                      diagnostics, extract)
from .eventlog import (XesError, format_timestamp, log_stats, parse_timestamp,
                       parse_xes, write_xes)
from .petri import (InterestingPlace, PnmlError, decision_places, parse_pnml,
                    validate_structure)
from .report import build_report, render, resolve_label_names, summarize
from .synth import GenerationError, generate, load_schedule

EXIT_OK = 0
EXIT_FINDINGS = 1
EXIT_INPUT = 2


def warn(code: str, **payload):
    line = {"warning": code}
    line.update(payload)
    print(json.dumps(line, sort_keys=True), file=sys.stderr)


def fail(message: str) -> int:
    print(json.dumps({"error": message}, sort_keys=True), file=sys.stderr)
    return EXIT_INPUT


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _load_model(path):
    if not os.path.exists(path):
        raise PnmlError(f"model file not found: {path}")
    net = parse_pnml(path)
    for message in net.warnings:
        warn("model", detail=message, model=str(path))
    return net, _sha256(path)


def _load_log(path):
    if not os.path.exists(path):
        raise XesError(f"log file not found: {path}")
    log = parse_xes(path)
    for issue in log.issues:
        warn("log-" + issue.kind, detail=issue.detail, case_id=issue.case_id)
    return log, _sha256(path)


def _select_places(net, places_arg):
    available = decision_places(net)
    if not places_arg:
        return available
    wanted = [p.strip() for p in places_arg.split(",") if p.strip()]
    by_id = {ip.place: ip for ip in available}
    unknown = [p for p in wanted if p not in by_id]
    if unknown:
        raise PnmlError(
            f"not decision places: {unknown}; valid ids: {sorted(by_id)}")
    return [by_id[p] for p in wanted]


def _cost_scheme(args) -> CostScheme:
    return CostScheme(sync_cost=args.sync_cost,
                      hidden_model_cost=args.hidden_cost,
                      visible_model_cost=args.model_cost,
                      log_cost=args.log_cost)


def _write_output(data: bytes, output):
    if output in (None, "-"):
        sys.stdout.buffer.write(data)
        sys.stdout.buffer.flush()
    else:
        tmp = str(output) + ".tmp"
        with open(tmp, "wb") as fh:
            fh.write(data)
        os.replace(tmp, output)


# -- per-stage helpers --------------------------------------------------------


def _run_alignments(net, log, args):
    costs = _cost_scheme(args)
    budget = args.state_budget if args.state_budget else None
    batch = align_log(net, log, costs, jobs=args.jobs,
                      state_budget=budget,
                      detect_ambiguity=not args.no_ambiguity)
    for issue in batch.errors:
        warn("unalignable-trace", case_id=issue.case_id,
             error=issue.error, detail=issue.detail)
    return batch


def _dump_alignments(batch, path):
    lines = [json.dumps(alignment_to_dict(a), sort_keys=True)
             for a in batch.alignments]
    _write_output(("\n".join(lines) + "\n").encode("utf-8") if lines else b"",
                  path)


def _read_alignments(path):
    alignments = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                alignments.append(alignment_from_dict(json.loads(line)))
    return alignments


def _safe_name(place_id: str) -> str:
    return "".join(c if c.isalnum() or c in "-_" else "_" for c in place_id)


def _dump_sequences(seq_list, directory, net, source_digests):
    """One CSV (timestamp_iso,label,case_id) plus one meta JSON per place."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for order, seq in enumerate(seq_list):
        stem = f"{order:02d}_{_safe_name(seq.place.place)}"
        rows = ["timestamp_iso,label,case_id"]
        rows += [f"{format_timestamp(el.timestamp)},{el.label},{el.case_id}"
                 for el in seq.elements]
        (directory / f"{stem}.csv").write_text("\n".join(rows) + "\n",
                                               encoding="utf-8")
        diag = diagnostics(seq)
        names = resolve_label_names(net, seq.place)
        meta = {
            "order": order,
            "place": seq.place.place,
            "k": seq.place.k,
            "arc_labels": [{"label": label, "transition": tid,
                            "name": names[label]}
                           for tid, label in seq.place.arc_labels],
            "diagnostics": diag.__dict__ | {"label_counts":
                                            list(map(list, diag.label_counts))},
            "source_digests": source_digests,
        }
        (directory / f"{stem}.meta.json").write_text(
            json.dumps(meta, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_sequences(directory):
    """Rebuild (sequence, diagnostics, label names, digests) from a dump."""
    directory = Path(directory)
    metas = sorted(directory.glob("*.meta.json"))
    if not metas:
        raise FileNotFoundError(f"no *.meta.json files in {directory}")
    out = []
    for meta_path in metas:
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        csv_path = meta_path.with_name(meta_path.name.replace(".meta.json", ".csv"))
        elements = []
        with open(csv_path, "r", encoding="utf-8") as fh:
            header = fh.readline()
            for pos, line in enumerate(fh):
                line = line.rstrip("\n")
                if not line:
                    continue
                ts_text, label_text, case_id = line.split(",", 2)
                elements.append(ChoiceElement(
                    label=int(label_text),
                    timestamp=parse_timestamp(ts_text)[0],
                    case_id=case_id,
                    model_move_position=pos,
                ))
        place = InterestingPlace(
            place=meta["place"],
            arc_labels=tuple((a["transition"], a["label"])
                             for a in meta["arc_labels"]),
            incoming_transitions=frozenset(),
            outgoing_transitions=frozenset(),
        )
        seq = ChoiceSequence(place=place, elements=tuple(elements))
        dd = meta["diagnostics"]
        diag = ChoiceDiagnostics(
            place=meta["place"],
            elements=dd["elements"],
            label_counts=tuple((int(l), int(c)) for l, c in dd["label_counts"]),
            traversal_trace_ratio=dd["traversal_trace_ratio"],
            fallback_timestamp_count=dd["fallback_timestamp_count"],
            ambiguous_alignment_count=dd["ambiguous_alignment_count"],
            skipped_no_timestamp=dd["skipped_no_timestamp"],
            missed_traversals=dd["missed_traversals"],
            initial_tokens=dd["initial_tokens"],
        )
        names = {a["label"]: a["name"] for a in meta["arc_labels"]}
        out.append((seq, diag, names, meta.get("source_digests", {})))
    return out


def _segment(seq, args):
    enc = encode(seq)
    if args.search == "exact":
        return exact_dp(enc, args.penalty, min_size=args.min_size,
                        gamma=args.gamma, max_n=args.oracle_bound)
    return pelt(enc, args.penalty, min_size=args.min_size,
                gamma=args.gamma, backend=args.backend)


def _warn_sequence(seq, diag):
    if diag.fallback_timestamp_count:
        warn("fallback-timestamps", place=diag.place,
             count=diag.fallback_timestamp_count)
    if diag.missed_traversals:
        warn("missed-traversals", place=diag.place,
             count=diag.missed_traversals)
    if diag.skipped_no_timestamp:
        warn("skipped-traversals", place=diag.place,
             count=diag.skipped_no_timestamp)
    if diag.ambiguous_alignment_count:
        warn("ambiguous-alignments", place=diag.place,
             count=diag.ambiguous_alignment_count)
    if diag.initial_tokens:
        warn("initial-tokens-in-place", place=diag.place,
             count=diag.initial_tokens)
    if not seq.elements:
        warn("empty-choice-sequence", place=diag.place)


def _human_summary(report):
    for pr in report.places:
        names = dict(pr.label_names)
        print(f"place {pr.place}: {len(pr.change_points)} change point(s)")
        for cp in pr.change_points:
            print(f"  change at element {cp.element_index} "
                  f"({format_timestamp(cp.timestamp)})")
        for seg in pr.segments:
            freqs = ", ".join(f"{names[label]}: {f:.3f}"
                              for label, f in seg.frequencies)
            print(f"  segment {seg.index} "
                  f"[{format_timestamp(seg.start_ts)} .. "
                  f"{format_timestamp(seg.end_ts)}] n={seg.length}: {freqs}")


# -- subcommands ---------------------------------------------------------------


def cmd_log_stats(args) -> int:
    try:
        log, _ = _load_log(args.log)
    except (XesError, OSError) as exc:
        return fail(str(exc))
    print(json.dumps(log_stats(log), sort_keys=True, indent=2))
    return EXIT_OK


def cmd_validate_model(args) -> int:
    try:
        net, _ = _load_model(args.model)
    except (PnmlError, OSError) as exc:
        return fail(str(exc))
    findings = validate_structure(net)
    print(json.dumps({"model": str(args.model),
                      "findings": [{"code": f.code, "detail": f.detail}
                                   for f in findings]},
                     sort_keys=True, indent=2))
    if findings and args.strict:
        return EXIT_FINDINGS
    return EXIT_OK


def cmd_list_places(args) -> int:
    try:
        net, _ = _load_model(args.model)
        places = _select_places(net, args.places)
    except (PnmlError, OSError) as exc:
        return fail(str(exc))
    doc = []
    for ip in places:
        names = resolve_label_names(net, ip)
        doc.append({
            "place": ip.place,
            "k": ip.k,
            "incoming": sorted(ip.incoming_transitions),
            "arcs": [{"label": label, "transition": tid, "name": names[label]}
                     for tid, label in ip.arc_labels],
        })
    print(json.dumps(doc, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_align(args) -> int:
    try:
        net, _ = _load_model(args.model)
        log, _ = _load_log(args.log)
    except (PnmlError, XesError, OSError) as exc:
        return fail(str(exc))
    batch = _run_alignments(net, log, args)
    _dump_alignments(batch, args.out)
    return EXIT_OK


def cmd_extract(args) -> int:
    try:
        net, model_digest = _load_model(args.model)
        log, log_digest = _load_log(args.log)
        places = _select_places(net, args.places)
    except (PnmlError, XesError, OSError) as exc:
        return fail(str(exc))
    if args.alignments:
        try:
            alignments = _read_alignments(args.alignments)
        except (OSError, ValueError, KeyError) as exc:
            return fail(f"cannot read alignments: {exc}")
    else:
        alignments = _run_alignments(net, log, args).alignments
    digests = {"model_sha256": model_digest, "log_sha256": log_digest}
    seq_list = []
    summary = []
    for ip in places:
        seq = extract(ip, alignments, log,
                      initial_tokens=net.initial_marking[ip.place])
        diag = diagnostics(seq)
        _warn_sequence(seq, diag)
        seq_list.append(seq)
        summary.append({"place": seq.place.place,
                        "elements": len(seq.elements),
                        "diagnostics": diag.__dict__ |
                        {"label_counts": list(map(list, diag.label_counts))}})
    if args.dump_sequences:
        _dump_sequences(seq_list, args.dump_sequences, net, digests)
    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


def cmd_detect(args) -> int:
    try:
        if args.sequences:
            loaded = _read_sequences(args.sequences)
            digests = loaded[0][3] if loaded else {}
            triples = [(seq, diag, names) for seq, diag, names, _ in loaded]
        else:
            if not args.model or not args.log:
                return fail("detect needs --model and --log "
                            "(or --sequences DIR)")
            net, model_digest = _load_model(args.model)
            log, log_digest = _load_log(args.log)
            findings = validate_structure(net)
            for f in findings:
                warn("structural-finding", code=f.code, detail=f.detail)
            if findings and args.strict:
                print(json.dumps({"error": "structural findings with --strict",
                                  "findings": [f.code for f in findings]},
                                 sort_keys=True), file=sys.stderr)
                return EXIT_FINDINGS
            places = _select_places(net, args.places)
            if args.alignments:
                alignments = _read_alignments(args.alignments)
            else:
                batch = _run_alignments(net, log, args)
                alignments = batch.alignments
                if args.dump_alignments:
                    _dump_alignments(batch, args.dump_alignments)
            digests = {"model_sha256": model_digest, "log_sha256": log_digest}
            triples = []
            seq_list = []
            for ip in places:
                seq = extract(ip, alignments, log,
                              initial_tokens=net.initial_marking[ip.place])
                diag = diagnostics(seq)
                _warn_sequence(seq, diag)
                triples.append((seq, diag, resolve_label_names(net, ip)))
                seq_list.append(seq)
            if args.dump_sequences:
                _dump_sequences(seq_list, args.dump_sequences, net, digests)
    except (PnmlError, XesError, OSError, ValueError) as exc:
        return fail(str(exc))

    place_reports = []
    for seq, diag, names in triples:
        segm = _segment(seq, args)
        place_reports.append(summarize(seq, segm, names, diag=diag))
    metadata = {
        "penalty": args.penalty,
        "min_size": args.min_size,
        "search": args.search,
        "backend": active_backend(args.backend) if args.search == "pelt" else "python",
        "tool": f"branchdrift {__version__}",
        **digests,
    }
    report = build_report(place_reports, metadata)
    data = render(report, args.format)
    _write_output(data, args.output)
    if args.output not in (None, "-"):
        _human_summary(report)
    return EXIT_OK


def cmd_synth(args) -> int:
    try:
        net, _ = _load_model(args.model)
        schedule = load_schedule(args.schedule)
        start = parse_timestamp(args.start)[0]
        log, change_indices = generate(net, schedule,
                                       inter_arrival=args.inter_arrival,
                                       seed=args.seed, start=start)
    except (PnmlError, GenerationError, OSError, ValueError) as exc:
        return fail(str(exc))
    _write_output(write_xes(log).encode("utf-8"), args.out)
    truth = {
        "change_indices": list(change_indices),
        "traces": log.trace_count,
        "events": log.event_count,
        "seed": args.seed if args.seed is not None else schedule.seed,
    }
    if args.truth:
        _write_output((json.dumps(truth, sort_keys=True, indent=2) + "\n")
                      .encode("utf-8"), args.truth)
    if args.out not in (None, "-"):
        print(json.dumps(truth, sort_keys=True))
    return EXIT_OK


def cmd_sweep_penalty(args) -> int:
    try:
        if args.sequences:
            triples = [(seq, diag, names)
                       for seq, diag, names, _ in _read_sequences(args.sequences)]
        else:
            if not args.model or not args.log:
                return fail("sweep-penalty needs --model and --log "
                            "(or --sequences DIR)")
            net, _ = _load_model(args.model)
            log, _ = _load_log(args.log)
            places = _select_places(net, args.places)
            alignments = _run_alignments(net, log, args).alignments
            triples = []
            for ip in places:
                seq = extract(ip, alignments, log,
                              initial_tokens=net.initial_marking[ip.place])
                triples.append((seq, diagnostics(seq),
                                resolve_label_names(net, ip)))
        penalties = [float(p) for p in args.penalties.split(",") if p.strip()]
        if not penalties:
            return fail("no penalties given")
    except (PnmlError, XesError, OSError, ValueError) as exc:
        return fail(str(exc))
    table = []
    for seq, _diag, _names in triples:
        enc = encode(seq)
        for segm in sweep_penalty(enc, penalties, min_size=args.min_size,
                                  gamma=args.gamma, backend=args.backend):
            table.append({
                "place": seq.place.place,
                "penalty": segm.penalty,
                "breakpoints": list(segm.breakpoints),
                "breakpoint_count": len(segm.breakpoints),
                "total_cost": segm.total_cost,
            })
    print(json.dumps(table, sort_keys=True, indent=2))
    return EXIT_OK


# -- parser --------------------------------------------------------------------


def _add_cost_flags(p):
    p.add_argument("--sync-cost", type=float, default=0.0)
    p.add_argument("--hidden-cost", type=float, default=0.0)
    p.add_argument("--model-cost", type=float, default=1.0,
                   help="cost of a visible model-only move")
    p.add_argument("--log-cost", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=1,
                   help="parallel workers for alignment")
    p.add_argument("--state-budget", type=int, default=0,
                   help="max explored states per trace "
                        "(0 = default / BRANCHDRIFT_STATE_BUDGET)")
    p.add_argument("--no-ambiguity", action="store_true",
                   help="skip detection of alternative optimal alignments")


def _add_place_flags(p):
    group = p.add_mutually_exclusive_group()
    group.add_argument("--places", help="comma-separated place ids")
    group.add_argument("--all-places", action="store_true",
                       help="use every decision place (default)")


def _add_detect_flags(p):
    p.add_argument("--penalty", type=float, default=5.0)
    p.add_argument("--min-size", type=int, default=2)
    p.add_argument("--search", choices=("pelt", "exact"), default="pelt")
    p.add_argument("--gamma", type=float, default=None,
                   help="RBF bandwidth (default: median heuristic)")
    p.add_argument("--backend", choices=("c", "python"), default=None)
    p.add_argument("--oracle-bound", type=int, default=2000,
                   help="max sequence length for --search exact")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="branchdrift",
        description="Detect branching-frequency drifts at Petri-net "
                    "decision places from an event log.")
    parser.add_argument("--version", action="version",
                        version=f"branchdrift {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("log-stats", help="summarize an XES log")
    p.add_argument("log")
    p.set_defaults(func=cmd_log_stats)

    p = sub.add_parser("validate-model", help="structural WF-net findings")
    p.add_argument("model")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 when findings exist")
    p.set_defaults(func=cmd_validate_model)

    p = sub.add_parser("list-places", help="decision places and arc labels")
    p.add_argument("model")
    p.add_argument("--places", help="comma-separated place ids")
    p.set_defaults(func=cmd_list_places)

    p = sub.add_parser("align", help="align every trace, JSON lines out")
    p.add_argument("--model", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--out", default=None, help="output path (default stdout)")
    _add_cost_flags(p)
    p.set_defaults(func=cmd_align)

    p = sub.add_parser("extract", help="choice sequences per decision place")
    p.add_argument("--model", required=True)
    p.add_argument("--log", required=True)
    p.add_argument("--alignments", help="reuse a JSONL alignment dump")
    p.add_argument("--dump-sequences", help="directory for per-place CSV dumps")
    _add_place_flags(p)
    _add_cost_flags(p)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("detect", help="full pipeline: report drifts")
    p.add_argument("--model")
    p.add_argument("--log")
    p.add_argument("--alignments", help="reuse a JSONL alignment dump")
    p.add_argument("--sequences", help="reuse a --dump-sequences directory")
    p.add_argument("--format", choices=("json", "csv", "svg"), default="json")
    p.add_argument("--output", default=None, help="report path (default stdout)")
    p.add_argument("--dump-alignments")
    p.add_argument("--dump-sequences")
    p.add_argument("--strict", action="store_true",
                   help="exit 1 on structural findings")
    _add_place_flags(p)
    _add_cost_flags(p)
    _add_detect_flags(p)
    p.set_defaults(func=cmd_detect)

    p = sub.add_parser("synth", help="generate a log with known drifts")
    p.add_argument("--model", required=True)
    p.add_argument("--schedule", required=True, help="schedule JSON")
    p.add_argument("--seed", type=int, default=None,
                   help="override the schedule's seed")
    p.add_argument("--inter-arrival", type=float, default=60.0,
                   help="seconds between trace starts")
    p.add_argument("--start", default="2000-01-01T00:00:00+00:00",
                   help="timestamp of the first trace")
    p.add_argument("--out", required=True, help="XES output path")
    p.add_argument("--truth", help="write ground-truth JSON here")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("sweep-penalty",
                       help="breakpoints for a list of penalties")
    p.add_argument("--model")
    p.add_argument("--log")
    p.add_argument("--sequences", help="reuse a --dump-sequences directory")
    p.add_argument("--penalties", default="1,2,5,10,20")
    p.add_argument("--min-size", type=int, default=2)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--backend", choices=("c", "python"), default=None)
    _add_place_flags(p)
    _add_cost_flags(p)
    p.set_defaults(func=cmd_sweep_penalty)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
