"""Command-line front end: ``wifiboost {campaign,drop,calibrate}``."""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

from . import __version__
from .config import MODES, CampaignConfig, ConfigError, parse_config
from .engine import (SimulationError, calibrate, derive_seed, make_drop, resolve_workers, run_campaign,
                     run_drop)
from .metrics import (format_table, summarize, sum_cell_throughput, write_manifest, write_samples_csv,
                      write_summary_csv)

TRACE_HEADER = ("time_s", "kind", "node", "packet_class", "size_bytes", "path")


def write_trace(events, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_HEADER)
        for t, kind, node, cls, size, via in events:
            w.writerow([f"{t:.9f}", kind, node, cls or "-", size, via or "-"])


def read_trace(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="wifiboost", description="LTE/Wi-Fi aggregation drop simulator.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--config", metavar="PATH", help="campaign file (defaults when omitted)")
        sp.add_argument("--out", metavar="DIR", help="output directory")
        sp.add_argument("--seed", type=int, metavar="N", help="master seed")

    c = sub.add_parser("campaign", help="run the full mode x UE-count x drop matrix")
    common(c)
    c.add_argument("--workers", type=int, metavar="N", help="worker processes (env BOOSTSIM_WORKERS)")
    c.add_argument("--mode", action="append", choices=MODES, help="restrict to a mode (repeatable)")
    c.add_argument("--ues", type=int, action="append", metavar="N", help="restrict to a UE count (repeatable)")

    d = sub.add_parser("drop", help="run one drop")
    common(d)
    d.add_argument("--mode", choices=MODES, default="boost")
    d.add_argument("--ues", type=int, default=4, metavar="N")
    d.add_argument("--drop", type=int, default=0, metavar="K", help="drop index used in seed derivation")
    d.add_argument("--trace", nargs="?", const="trace.csv", metavar="FILE",
                   help="write an event trace (default name trace.csv inside --out)")

    k = sub.add_parser("calibrate", help="fit the LTE and Wi-Fi rate-table scales")
    common(k)
    k.add_argument("--lte-target", type=float, default=63.0)
    k.add_argument("--wifi-target", type=float, default=140.0)
    return p


def _load(args) -> CampaignConfig:
    cc = parse_config(args.config)
    if args.seed is not None:
        cc.master_seed = args.seed
    if args.out:
        cc.output = args.out
    return cc


def _campaign(args) -> int:
    cc = _load(args)
    if args.mode:
        cc.modes = list(dict.fromkeys(args.mode))
    if args.ues:
        cc.ue_counts = list(dict.fromkeys(args.ues))
    cc.validate()
    workers = resolve_workers(args.workers)
    out = Path(cc.output)
    out.mkdir(parents=True, exist_ok=True)

    t0 = time.time()

    def progress(i, n):
        if sys.stderr.isatty():
            print(f"\r{i}/{n} drops", end="", file=sys.stderr, flush=True)

    results = run_campaign(cc, workers, progress)
    if sys.stderr.isatty():
        print(file=sys.stderr)
    write_samples_csv(results, out / "samples.csv")
    rows = write_summary_csv(results, out / "summary.csv")
    seeds = {f"{n}/{d}": derive_seed(cc.master_seed, n, d) for n in cc.ue_counts for d in range(cc.drops)}
    write_manifest(out / "manifest.json", cc.to_dict(), seeds, {
        "version": __version__,
        "files": ["samples.csv", "summary.csv"],
        "switch_drop_fraction": {f"{s.mode}/{s.n_ues}": s.switch_drop_fraction for s in rows},
        "sum_cell_max": {f"{s.mode}/{s.n_ues}": s.sum_cell_max for s in rows},
    })
    print(format_table(rows))
    print(f"{len(results)} drops in {time.time() - t0:.1f} s -> {out}")
    return 0


def _drop(args) -> int:
    cc = _load(args)
    if args.ues < 1:
        raise ConfigError("--ues must be >= 1")
    seed = derive_seed(cc.master_seed, args.ues, args.drop)
    trace = [] if args.trace else None
    result = run_drop(make_drop(seed, args.ues, cc.sim), args.mode, cc.sim, trace)
    result.drop = args.drop
    out = Path(cc.output)
    out.mkdir(parents=True, exist_ok=True)
    write_samples_csv([result], out / "samples.csv")
    rows = write_summary_csv([result], out / "summary.csv")
    if trace is not None:
        tpath = Path(args.trace)
        if not tpath.is_absolute():
            tpath = out / tpath
        write_trace(trace, tpath)
        print(f"trace: {len(trace)} events -> {tpath}")
    print(format_table(rows))
    print(f"sum cell {sum_cell_throughput(result):.1f} Mbps, "
          f"{len(result.data_switches)} data-phase switches, seed {seed}")
    return 0


def _calibrate(args) -> int:
    cc = _load(args)
    lte, wifi = calibrate(cc.sim, args.lte_target, args.wifi_target, seed=cc.master_seed)
    print(f"channel.lte_scale = {lte:.6f}")
    print(f"channel.wifi_scale = {wifi:.6f}")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _parser().parse_args(argv)
    handler = {"campaign": _campaign, "drop": _drop, "calibrate": _calibrate}[args.command]
    try:
        return handler(args)
    except (ConfigError, SimulationError, ValueError, OSError) as e:
        print(f"wifiboost: error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
