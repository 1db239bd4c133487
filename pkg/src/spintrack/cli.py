"""Command line: ``spintrack track|simulate|summary``.

Exit codes: 0 success, 2 configuration error, 3 I/O error, 4 parse error.
"""

import argparse
import contextlib
import json
import logging
import sys
from dataclasses import dataclass, replace
from typing import Optional

from .export import CsvWriter, EventBased, JsonlWriter, Periodic, ReportParseError, read_reports
from .flowid import ALL_FLOWS, CidLenMap, SelectionList
from .pcapio import PcapError, emit_pcap, iter_pcap
from .pipeline import Pipeline, Stats
from .postproc import ClassConfig
from .simgen import InvalidConfig, Pattern, SimConfig, simulate
from .summary import summarize
from .tracker import DetectionMode, ModeKind

EXIT_OK, EXIT_CONFIG, EXIT_IO, EXIT_PARSE = 0, 2, 3, 4

log = logging.getLogger("spintrack")


class ConfigError(Exception):
    pass


@dataclass
class RunConfig:
    mode: DetectionMode = DetectionMode.naive()
    ring_size: int = 4
    classes: Optional[str] = None
    export: str = "event"
    interval_ms: float = 5.0
    select: str = "*"
    cid_map: Optional[str] = None
    use_cid: bool = False
    out: Optional[str] = None
    fmt: str = "jsonl"

    def pipeline(self) -> Pipeline:
        if self.ring_size < 1 or self.ring_size & (self.ring_size - 1):
            raise ConfigError(f"ring size must be a power of two, got {self.ring_size}")
        try:
            classes = ClassConfig.load(self.classes) if self.classes else ClassConfig.default()
            selection = ALL_FLOWS if self.select == "*" else SelectionList.load(self.select)
            cid_map = CidLenMap.load(self.cid_map) if self.cid_map else None
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        if self.export == "event":
            export = EventBased()
        else:
            if self.interval_ms <= 0:
                raise ConfigError("--interval-ms must be positive")
            export = Periodic(round(self.interval_ms * 1e6))
        return Pipeline(mode=self.mode, ring_size=self.ring_size, classes=classes, export=export,
                        selection=selection, cid_map=cid_map, use_cid=self.use_cid or cid_map is not None)


@contextlib.contextmanager
def _output(path):
    if path is None or path == "-":
        yield sys.stdout
    else:
        with open(path, "w", newline="") as fh:
            yield fh


def _writer(fh, fmt: str, pipeline: Pipeline):
    if fmt == "csv":
        return CsvWriter(fh, len(pipeline.classes.rules) + 1)
    return JsonlWriter(fh)


def run_track(cfg: RunConfig, input_path: str):
    """Track every UDP packet of a capture file; returns the pipeline stats."""
    pipeline = cfg.pipeline()
    with _output(cfg.out) as fh:
        writer = _writer(fh, cfg.fmt, pipeline)
        for pkt in iter_pcap(input_path):
            if pkt is None:
                pipeline.stats.packets_in += 1
                pipeline.stats.skipped["not_udp"] += 1
                continue
            writer.write(pipeline.feed(pkt.capture_ts, pkt.five_tuple, pkt.payload))
        writer.write(pipeline.finish())
    return pipeline.stats


def run_simulate(cfg: RunConfig, sim: SimConfig, truth_path: Optional[str] = None,
                 pcap_path: Optional[str] = None, runs: int = 1):
    """Generate and track ``runs`` scenarios in-process.

    Run ``i`` uses seed ``sim.seed + i`` and source port ``+ i`` so the runs
    appear as separate flows in one report.
    """
    if runs < 1:
        raise ConfigError("--runs must be >= 1")
    pipeline = cfg.pipeline()
    total = Stats()
    all_events = []
    with _output(cfg.out) as fh, _output(truth_path) if truth_path else contextlib.nullcontext() as tfh:
        writer = _writer(fh, cfg.fmt, pipeline)
        for i in range(runs):
            tuple_ = replace(sim.five_tuple, src_port=(sim.five_tuple.src_port + i) & 0xFFFF)
            run_cfg = replace(sim, seed=sim.seed + i, five_tuple=tuple_)
            events, truth = simulate(run_cfg)
            if i:
                pipeline = cfg.pipeline()
            for ev in events:
                writer.write(pipeline.feed_event(ev))
            writer.write(pipeline.finish())
            total.packets_in += pipeline.stats.packets_in
            total.tracked += pipeline.stats.tracked
            total.measurements += pipeline.stats.measurements
            total.skipped.update(pipeline.stats.skipped)
            if tfh is not None:
                for line in truth.to_lines():
                    tfh.write(json.dumps({"run": i, **json.loads(line)}) + "\n")
            all_events.extend(events)
    if pcap_path:
        all_events.sort(key=lambda ev: ev.t_ns)
        emit_pcap(all_events, pcap_path)
    return total


def run_summary(report_path: str, as_json: bool = False, out=None):
    stats = summarize(read_reports(report_path))
    out = out or sys.stdout
    out.write((json.dumps(stats.to_dict(), indent=2) if as_json else stats.format()) + "\n")
    return stats


def _parse_schedule(text: str) -> list:
    steps = []
    for part in text.split(","):
        start, _, rtt = part.partition(":")
        steps.append((float(start), float(rtt)))
    return steps


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spintrack", description="Passive QUIC spin bit RTT tracking")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def tracking_options(p):
        p.add_argument("--mode", choices=[k.value for k in ModeKind], default="naive")
        p.add_argument("--threshold", type=int, default=3, help="reordering threshold N for v1/v2")
        p.add_argument("--ring", type=int, default=4, help="ring buffer size (power of two)")
        p.add_argument("--classes", help="class rule file")
        p.add_argument("--export", choices=["event", "periodic"], default="event")
        p.add_argument("--interval-ms", type=float, default=5.0)
        p.add_argument("--select", default="*", help="selection list file, or '*'")
        p.add_argument("--cid-map", help="static CID length map; enables CID flow IDs")
        p.add_argument("--cid", action="store_true", help="learn CID lengths from long headers")
        p.add_argument("--format", choices=["jsonl", "csv"], default="jsonl")
        p.add_argument("--out", help="report file (default: stdout)")

    p = sub.add_parser("track", help="track a pcap capture")
    p.add_argument("input")
    tracking_options(p)

    p = sub.add_parser("simulate", help="simulate a scenario and track it")
    p.add_argument("scenario", nargs="?", help="scenario JSON file")
    p.add_argument("--rtt-ms", type=float, help="constant RTT")
    p.add_argument("--schedule", help="RTT steps as start_s:rtt_ms,...")
    p.add_argument("--rate", type=float, help="packets per second")
    p.add_argument("--duration", type=float, help="seconds")
    p.add_argument("--pattern", choices=[x.value for x in Pattern])
    p.add_argument("--seed", type=int)
    p.add_argument("--runs", type=int, default=1)
    p.add_argument("--truth", help="ground truth output file")
    p.add_argument("--pcap", help="also write the generated packets as pcap")
    tracking_options(p)

    p = sub.add_parser("summary", help="summarize a JSONL report")
    p.add_argument("report")
    p.add_argument("--json", action="store_true", help="machine-readable output")
    return parser


def _run_config(args) -> RunConfig:
    if args.threshold < 1:
        raise ConfigError("--threshold must be >= 1")
    return RunConfig(
        mode=DetectionMode(ModeKind(args.mode), args.threshold),
        ring_size=args.ring,
        classes=args.classes,
        export=args.export,
        interval_ms=args.interval_ms,
        select=args.select,
        cid_map=args.cid_map,
        use_cid=args.cid,
        out=args.out,
        fmt=args.format,
    )


def _sim_config(args) -> SimConfig:
    d = {}
    if args.scenario:
        with open(args.scenario) as fh:
            d = json.load(fh)
    if args.rtt_ms is not None:
        d["rtt_schedule"] = [(0.0, args.rtt_ms)]
    if args.schedule:
        try:
            d["rtt_schedule"] = _parse_schedule(args.schedule)
        except ValueError as exc:
            raise ConfigError(f"bad --schedule: {exc}") from exc
    for key, value in (("pkt_rate", args.rate), ("duration", args.duration),
                       ("pattern", args.pattern), ("seed", args.seed)):
        if value is not None:
            d[key] = value
    return SimConfig.from_dict(d)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(name)s: %(message)s")
    try:
        if args.command == "summary":
            run_summary(args.report, args.json)
            return EXIT_OK
        cfg = _run_config(args)
        if args.command == "track":
            stats = run_track(cfg, args.input)
        else:
            stats = run_simulate(cfg, _sim_config(args), args.truth, args.pcap, args.runs)
        log.info("packets in %d, tracked %d, skipped %s", stats.packets_in, stats.tracked, dict(stats.skipped))
        print(f"packets: {stats.packets_in} in, {stats.tracked} tracked, {stats.packets_skipped} skipped, "
              f"{stats.measurements} measurements", file=sys.stderr)
        return EXIT_OK
    except (ConfigError, InvalidConfig, json.JSONDecodeError) as exc:
        print(f"spintrack: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ReportParseError, PcapError) as exc:
        print(f"spintrack: parse error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except OSError as exc:
        print(f"spintrack: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
