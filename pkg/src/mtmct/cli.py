"""Command-line entry point: ``mtmct <synth|zones|tsct|clm|track|eval> ...``.

Logs go to stderr; results go to files (``-`` for stdout). Exit codes:
0 success, 2 usage, 3 input, 4 config, 5 model, 6 capacity, 7 I/O.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import asdict
from pathlib import Path

from . import formats, synth
from .config import dump_config, load_config
from .core import CapacityError, ConfigError, InputError, ModelError
from .metrics import clear_mot, format_report, format_report_csv, id_measures, per_camera_identities
from .pipeline import find_zones, fit_zones_and_model, run_tracking, train_link_model, traffic_relink
from .tsct import format_report as format_relink_report
from .zones import ZoneKind

log = logging.getLogger("mtmct")

LOG_ENV = "MTMCT_LOG_LEVEL"
EXIT_USAGE, EXIT_INPUT, EXIT_CONFIG, EXIT_MODEL, EXIT_CAPACITY, EXIT_IO = 2, 3, 4, 5, 6, 7


def _load_tracklets(tracks, embeddings):
    return formats.flatten(formats.parse_tracks(tracks, embeddings))


def cmd_synth(args, cfg):
    sc = synth.ScenarioConfig(seed=args.seed, n_cameras=args.cameras, n_vehicles=args.vehicles,
                              n_train_vehicles=args.train_vehicles, embedding_dim=args.dim,
                              identity_noise_sigma=args.sigma, fragmentation=args.fragmentation)
    if args.cameras != 3:
        fwd = tuple(range(args.cameras))
        hops = tuple((40, 80) for _ in fwd[1:])
        sc = synth.with_overrides(sc, routes=(synth.Route(fwd, hops), synth.Route(fwd[::-1], hops)),
                                  traffic_lights=((min(1, args.cameras - 1), synth.EAST),))
    out = Path(args.out)
    meta = {"config": asdict(sc), "splits": {}}
    for scenario in synth.generate_dataset(sc):
        d = out / scenario.split
        formats.write_tracks(d / "tracks.csv", scenario.tracklets)
        formats.write_embeddings(d / "embeddings.bin", scenario.tracklets)
        formats.write_detections(d / "gt.csv", scenario.gt_detections)
        meta["splits"][scenario.split] = {"tracklets": len(scenario.tracklets),
                                          "vehicles": len(scenario.gt_tracks),
                                          "fragmentation_events": scenario.events}
    formats._atomic_write(out / "scenario.json", json.dumps(meta, indent=1, sort_keys=True) + "\n")
    log.info("wrote scenario to %s", out)
    return 0


def cmd_zones(args, cfg):
    tracklets = _load_tracklets(args.tracks, None)
    zones = find_zones(tracklets, cfg)
    formats.write_zones(args.out, zones)
    counts = {k.value: sum(z.kind is k for z in zones) for k in ZoneKind}
    log.info("zones: %s", counts)
    return 0


def cmd_tsct(args, cfg):
    tracklets = _load_tracklets(args.tracks, args.embeddings)
    merged, records, _ = traffic_relink(tracklets, cfg)
    formats.write_tracks(args.out, merged)
    if args.embeddings_out:
        formats.write_embeddings(args.embeddings_out, merged)
    if args.report:
        formats._atomic_write(args.report, format_relink_report(records))
    return 0


def cmd_clm(args, cfg):
    gt = formats.parse_results(args.gt)
    per_cam = formats.detections_to_tracks(gt)
    zones = find_zones(formats.flatten(per_cam), cfg)
    model = train_link_model(gt, zones, cfg)
    formats.write_zones(args.zones_out, zones)
    formats.write_clm(args.out, model)
    return 0


def cmd_track(args, cfg):
    tracklets = _load_tracklets(args.tracks, args.embeddings)
    if args.no_tsct or args.no_clm:
        cfg = cfg.with_values({"pipeline.tsct": cfg.pipeline.tsct and not args.no_tsct,
                               "pipeline.use_clm": cfg.pipeline.use_clm and not args.no_clm})
    zones, model = [], None
    if cfg.pipeline.use_clm:
        if args.train_gt:
            zones, model = fit_zones_and_model(formats.parse_results(args.train_gt), cfg)
        elif args.clm and args.zones:
            zones = formats.parse_zones(args.zones)
            model = formats.parse_clm(args.clm)
        else:
            raise ConfigError("track needs --train-gt or both --zones and --clm (or --no-clm)")
    result = run_tracking(tracklets, cfg, zones, model)
    formats.write_results(args.out, result.global_tracks, result.tracklets)
    if args.relink_report:
        formats._atomic_write(args.relink_report, format_relink_report(result.relinks))
    return 0


def cmd_eval(args, cfg):
    gt = formats.parse_results(args.gt)
    pred = formats.parse_results(args.pred)
    if args.single_camera:
        gt, pred = per_camera_identities(gt), per_camera_identities(pred)
    thr = args.iou if args.iou is not None else cfg.pipeline.iou_threshold
    report = id_measures(gt, pred, thr)
    clear = clear_mot(gt, pred, thr) if args.clear else None
    text = format_report_csv(report, clear) if args.format == "csv" else format_report(report, clear)
    formats._atomic_write(args.out, text)
    return 0


def cmd_config(args, cfg):
    formats._atomic_write(args.out, dump_config(cfg))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mtmct", description=__doc__.splitlines()[0])
    p.add_argument("--config", help="flat YAML config with section.key entries")
    p.add_argument("--log-level", default=None, help=f"DEBUG/INFO/WARNING/ERROR (env {LOG_ENV})")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", metavar="command")
    sub.required = True

    s = sub.add_parser("synth", help="generate a synthetic train/test scenario")
    s.add_argument("-o", "--out", required=True, help="output directory")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--cameras", type=int, default=3)
    s.add_argument("--vehicles", type=int, default=20)
    s.add_argument("--train-vehicles", type=int, default=40)
    s.add_argument("--dim", type=int, default=64)
    s.add_argument("--sigma", type=float, default=0.01)
    s.add_argument("--fragmentation", type=float, default=0.0)
    s.set_defaults(func=cmd_synth)

    s = sub.add_parser("zones", help="discover and classify zones from tracks")
    s.add_argument("--tracks", required=True)
    s.add_argument("-o", "--out", default="-")
    s.set_defaults(func=cmd_zones)

    s = sub.add_parser("tsct", help="re-link tracklets broken inside traffic-aware zones")
    s.add_argument("--tracks", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("-o", "--out", default="-")
    s.add_argument("--embeddings-out")
    s.add_argument("--report", help="write the re-link report here")
    s.set_defaults(func=cmd_tsct)

    s = sub.add_parser("clm", help="build the camera link model from labelled training tracks")
    s.add_argument("--gt", required=True, help="identity-labelled training tracks (results format)")
    s.add_argument("--zones-out", required=True)
    s.add_argument("-o", "--out", default="-")
    s.set_defaults(func=cmd_clm)

    s = sub.add_parser("track", help="full pipeline: zones, re-link, link model, association")
    s.add_argument("--tracks", required=True)
    s.add_argument("--embeddings", required=True)
    s.add_argument("--train-gt", help="build zones and link model from this training ground truth")
    s.add_argument("--zones", help="zones file written by `clm`")
    s.add_argument("--clm", help="link model file written by `clm`")
    s.add_argument("--no-tsct", action="store_true")
    s.add_argument("--no-clm", action="store_true")
    s.add_argument("--relink-report")
    s.add_argument("-o", "--out", default="-")
    s.set_defaults(func=cmd_track)

    s = sub.add_parser("eval", help="identity and CLEAR metrics against ground truth")
    s.add_argument("--gt", required=True)
    s.add_argument("--pred", required=True)
    s.add_argument("--iou", type=float)
    s.add_argument("--single-camera", action="store_true", help="score identities per camera")
    s.add_argument("--clear", action="store_true", help="also report MOTA/MOTP/recall/MT")
    s.add_argument("--format", choices=("text", "csv"), default="text")
    s.add_argument("-o", "--out", default="-")
    s.set_defaults(func=cmd_eval)

    s = sub.add_parser("config", help="print the effective configuration")
    s.add_argument("-o", "--out", default="-")
    s.set_defaults(func=cmd_config)
    return p


def _setup_logging(args) -> None:
    level = args.log_level or os.environ.get(LOG_ENV)
    if level is None:
        level = "DEBUG" if args.verbose > 1 else "INFO" if args.verbose else "WARNING"
    numeric = logging.getLevelName(str(level).upper())
    if not isinstance(numeric, int):
        raise ConfigError(f"unknown log level {level!r}")
    handler = logging.StreamHandler(sys.stderr)
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("mtmct")
    root.handlers[:] = [handler]
    root.setLevel(numeric)
    root.propagate = False


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0) and EXIT_USAGE
    try:
        _setup_logging(args)
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except (ConfigError, InputError, ModelError, CapacityError, OSError) as e:
        for cls, code, kind in _ERROR_CODES:
            if isinstance(e, cls):
                print(f"mtmct: {kind} error: {e}", file=sys.stderr)
                return code
        raise


# ConfigError and InputError are both ValueErrors; order matters
_ERROR_CODES = (
    (ConfigError, EXIT_CONFIG, "config"),
    (InputError, EXIT_INPUT, "input"),
    (ModelError, EXIT_MODEL, "model"),
    (CapacityError, EXIT_CAPACITY, "capacity"),
    (OSError, EXIT_IO, "io"),
)


if __name__ == "__main__":
    sys.exit(main())
