"""
qkd_dispersion.cli
~~~~~~~~~~~~~~~~~~

Command-line front end. Every command is a deterministic batch job: for a
fixed seed and configuration its output files are byte-identical whatever
the worker count.
"""

import argparse
import csv
import json
import logging
import math
import sys
from pathlib import Path

import numpy as np
import scipy

from . import api
from .__version__ import __version__
from .adapters import DCM_COLUMNS
from .compat import error_payload, exit_code_for
from .config import load_config
from .exceptions import NoKeyError, QKDSimError
from .model import peak_to_trough_ratio, SweepResult, SweepRow
from .montecarlo import expected_singles_rate
from .tags import Party, read_tags, write_tags

logger = logging.getLogger(__name__)

DISTANCE_COLUMNS = (
    "distance_km",
    "sigma_d_ps",
    "delta_t_ps",
    "t_cc_ps",
    "cc_tot_cps",
    "qber",
    "r_s_bits_per_s",
    "brightness_cps",
)

LOG_LEVELS = {0: logging.WARNING, 1: logging.INFO, 2: logging.DEBUG}


def versions():
    return {"qkd_dispersion": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def _clean(value):
    """JSON-safe copy: non-finite floats become null, numpy scalars plain numbers."""
    if isinstance(value, dict):
        return {str(key): _clean(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [_clean(item) for item in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def write_json(path, payload):
    text = json.dumps(_clean(payload), indent=2, sort_keys=True, allow_nan=False)
    Path(path).write_text(text + "\n", encoding="utf-8")


def write_csv(path, columns, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        writer.writerows(rows)


def _output_dir(args):
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    result = api.simulate(args.config, seed=args.seed, threads=args.threads)
    out = _output_dir(args)
    suffix = ".csv.gz" if args.compress else ".csv"
    files = {"A": f"tags_a{suffix}", "B": f"tags_b{suffix}"}
    write_tags(result.tags_a, out / files["A"])
    write_tags(result.tags_b, out / files["B"])

    scenario = result.scenario_file.scenario()
    manifest = {
        "command": "simulate",
        "config_origin": result.scenario_file.origin,
        "resolved_config": result.scenario_file.resolved,
        "seed": result.run.seed,
        "duration_s": result.run.duration_s,
        "versions": versions(),
        "files": files,
        "counts": {"A": len(result.tags_a), "B": len(result.tags_b)},
        "expected_singles_cps": {
            party.value: expected_singles_rate(scenario, party) for party in Party
        },
    }
    write_json(out / "manifest.json", manifest)
    logger.info(f"wrote {len(result.tags_a)} + {len(result.tags_b)} tags to {out!s}")
    return 0


def _manifest_duration(tags_path):
    """Run duration recorded by `simulate` next to the tag files, if any."""
    manifest = Path(tags_path).parent / "manifest.json"
    if not manifest.is_file():
        return None
    try:
        return json.loads(manifest.read_text(encoding="utf-8")).get("duration_s")
    except (ValueError, AttributeError):
        logger.warning(f"ignoring unreadable manifest {manifest!s}")
        return None


def cmd_analyze(args):
    f = 1.1
    bin_width, search_range, delay = 1.0, 2000.0, None
    resolved = None
    if args.config is not None:
        scenario_file = load_config(args.config)
        resolved = scenario_file.resolved
        f = resolved["source"]["error_correction_efficiency"]
        bin_width, search_range, delay = scenario_file.analysis_options()
    bin_width = args.bin_width if args.bin_width is not None else bin_width
    search_range = args.search_range if args.search_range is not None else search_range
    delay = args.delay if args.delay is not None else delay

    duration = args.duration if args.duration is not None else _manifest_duration(args.tags_a)
    tags_a = read_tags(args.tags_a, duration=duration, party=Party.A)
    tags_b = read_tags(args.tags_b, duration=duration, party=Party.B)
    result = api.analyze(
        tags_a, tags_b, delay=delay, f=f, bin_width=bin_width, search_range=search_range,
        threads=args.threads,
    )
    out = _output_dir(args)
    hist = result.histogram
    write_csv(
        out / "histogram.csv",
        ("delay_ps", "counts", "counts_per_s"),
        zip(hist.delays.tolist(), hist.counts.tolist(), hist.rates.tolist()),
    )
    settings = result.settings
    write_json(out / "fit.json", {
        "fit": result.fit.to_dict() if result.fit is not None else None,
        "error": result.fit_error,
        "settings": settings.to_dict() if settings is not None else None,
        "delta_t_ps": settings.average_fwhm if settings is not None else None,
    })
    options = {
        "bin_width_ps": bin_width,
        "search_range_ps": search_range,
        "delay_ps": delay,
        "error_correction_efficiency": f,
        "duration_s": max(tags_a.duration, tags_b.duration),
        "resolved_config": resolved,
        "versions": versions(),
    }
    write_json(out / "keyrate.json", {"report": result.report.to_dict(), "options": options})
    return 0


def _dcm_point(row):
    return {"dcm_ps_per_nm": row.x, "r_s_bits_per_s": row.r_s, "delta_t_ps": row.delta_t}


def _dcm_summary(rows):
    summary = {}
    for source in sorted({row.source for row in rows}):
        picked = [row for row in rows if row.source == source]
        sweep = SweepResult("dcm_ps_per_nm", [
            SweepRow(row.dcm_ps_per_nm, 0.0, row.delta_t_ps, row.t_cc_ps, row.cc_tot_cps,
                     row.qber, row.r_s_bits_per_s, row.r_s_bits_per_s, 0.0)
            for row in picked
        ])
        peak, trough = sweep.peak(), sweep.trough()
        try:
            ratio = peak_to_trough_ratio(sweep)
        except NoKeyError:
            ratio = None
        summary[source] = {
            "peak": _dcm_point(peak),
            "trough": _dcm_point(trough),
            "peak_to_trough_ratio": ratio,
            "trough_without_key": trough.r_s <= 0,
        }
    return summary


def cmd_sweep_dcm(args):
    rows = api.sweep_dcm(args.config, mode=args.mode, threads=args.threads, seed=args.seed)
    out = _output_dir(args)
    if args.format == "json":
        write_json(out / "dcm_sweep.json", [row._asdict() for row in rows])
    else:
        write_csv(out / "dcm_sweep.csv", DCM_COLUMNS, rows)
    scenario_file = load_config(args.config)
    write_json(out / "dcm_summary.json", {
        "mode": args.mode,
        "seed": scenario_file.run(args.seed).seed,
        "summary": _dcm_summary(rows),
        "resolved_config": scenario_file.resolved,
        "versions": versions(),
    })
    return 0


def _distance_rows(curve):
    return [
        (row.x, row.sigma_d, row.delta_t, row.t_cc, row.cc_tot, row.qber, row.r_s, row.brightness)
        for row in curve
    ]


def cmd_sweep_distance(args):
    result = api.sweep_distance(args.config, threads=args.threads)
    out = _output_dir(args)
    for (width, compensated), curve in result.curves.items():
        state = "compensated" if compensated else "uncompensated"
        name = f"distance_{width:g}ghz_{state}"
        if args.format == "json":
            records = [dict(zip(DISTANCE_COLUMNS, row)) for row in _distance_rows(curve)]
            write_json(out / f"{name}.json", records)
        else:
            write_csv(out / f"{name}.csv", DISTANCE_COLUMNS, _distance_rows(curve))
    write_json(out / "distance_summary.json", dict(result.summary, versions=versions()))
    return 0


def cmd_compare_local(args):
    result = api.compare_local(args.config)
    payload = dict(result, resolved_config=load_config(args.config).resolved)
    if args.out is not None:
        write_json(_output_dir(args) / "compare_local.json", payload)
    print(json.dumps(_clean(result), indent=2, sort_keys=True))
    return 0


def _common(parser, out_default="."):
    parser.add_argument("--config", default=None, help="JSON scenario file or preset name.")
    parser.add_argument("--out", default=out_default, help="Output directory.")
    parser.add_argument("--threads", type=int, default=None,
                        help="Worker threads (default: $QKD_DISPERSION_THREADS, else all CPUs).")
    parser.add_argument("-v", "--verbose", action="count", default=0)
    parser.add_argument("--error-json", action="store_true",
                        help="Print errors as JSON on stderr.")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="qkd-dispersion",
        description="Entangled-photon QKD over dispersive fiber.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    commands = parser.add_subparsers(dest="command", required=True)

    simulate = commands.add_parser("simulate", help="Generate time-tag files.")
    _common(simulate)
    simulate.add_argument("--seed", type=int, default=None)
    simulate.add_argument("--compress", action="store_true", help="Write gzip tag files.")
    simulate.set_defaults(handler=cmd_simulate)

    analyze = commands.add_parser("analyze", help="Histogram, fit and key rate of two tag files.")
    analyze.add_argument("tags_a")
    analyze.add_argument("tags_b")
    _common(analyze)
    analyze.add_argument("--delay", type=float, default=None, help="Peak delay t_A - t_B in ps.")
    analyze.add_argument("--bin-width", type=float, default=None)
    analyze.add_argument("--search-range", type=float, default=None)
    analyze.add_argument("--duration", type=float, default=None,
                         help="Acquisition time in s (default: inferred from the last tag).")
    analyze.set_defaults(handler=cmd_analyze)

    sweep_dcm = commands.add_parser("sweep-dcm", help="Key rate per compensator reading.")
    _common(sweep_dcm)
    sweep_dcm.add_argument("--mode", choices=("mc", "model", "both"), default="model")
    sweep_dcm.add_argument("--format", choices=("csv", "json"), default="csv")
    sweep_dcm.add_argument("--seed", type=int, default=None)
    sweep_dcm.set_defaults(handler=cmd_sweep_dcm)

    sweep_distance = commands.add_parser("sweep-distance", help="Key rate vs total distance.")
    _common(sweep_distance)
    sweep_distance.add_argument("--format", choices=("csv", "json"), default="csv")
    sweep_distance.set_defaults(handler=cmd_sweep_distance)

    compare_local = commands.add_parser("compare-local", help="Nonlocal vs local compensation.")
    _common(compare_local, out_default=None)
    compare_local.set_defaults(handler=cmd_compare_local)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=LOG_LEVELS[min(args.verbose, 2)],
        format="%(asctime)s - %(levelname)s - %(message)s",
    )
    try:
        return args.handler(args)
    except QKDSimError as exc:
        if args.error_json:
            print(json.dumps(_clean(error_payload(exc)), sort_keys=True), file=sys.stderr)
        else:
            print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
