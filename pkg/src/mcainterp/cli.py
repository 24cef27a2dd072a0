"""``mcainterp`` command line.

Exit codes: 0 success, 2 input/output failure, 3 invalid usage or data,
4 numerical failure. Option values come from flags, then from the JSON file
given by ``--config``, then from built-in defaults.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
import time
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import container
from .grids import FLIEGE_SIZES, LEBEDEV_ORDERS, GridError, parse_grid_spec
from .metrics import evaluate
from .pipeline import Limiter, McaConfig, PipelineError, mca_upsample
from .sets import EARS
from .sphere import HeadModel, optimal_head_radius, sphere_transfer_function, synth_sphere_hrirs

EXIT_IO = 2
EXIT_USAGE = 3
EXIT_NUMERIC = 4

log = logging.getLogger("mcainterp")

DEFAULTS = {
    "synth-sphere": {"grid": "lebedev:3", "fs": 44100.0, "ir_length": 512, "subject": None},
    "grids": {"spec": None, "output": None, "list": False},
    "upsample": {"order": None, "target": "fliege:900", "emit_uncorrected": None,
                 "emit_filters": None, "no_correction": False, "phase": "minimum",
                 "limit": "off", "knee": 3.0, "no_fade": False, "sh_mode": None, "threads": 0},
    "evaluate": {"csv": None, "summary": None, "band_table": None, "subject": None,
                 "ear": "left", "monaural": False, "threads": 0},
    "info": {"directions": False},
}
HEAD_DEFAULT_RADIUS_M = 0.0875


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_head(p):
    g = p.add_mutually_exclusive_group()
    g.add_argument("--radius", type=float, default=None, metavar="M",
                   help="sphere radius in metres (default 0.0875, or derived from container "
                        "anthropometrics)")
    g.add_argument("--head-dims", type=float, nargs=3, default=None, metavar=("W", "H", "D"),
                   help="head width, height and depth in metres; radius from the Algazi regression")


def build_parser() -> argparse.ArgumentParser:
    top = _Parser(prog="mcainterp", description="Magnitude-corrected SH upsampling of HRTF sets.")
    top.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth-sphere", help="write rigid-sphere HRIRs to a container")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--grid", default=None, help="grid spec, e.g. lebedev:3, fliege:900, file.json")
    p.add_argument("--fs", type=float, default=None, help="sample rate in Hz (44100)")
    p.add_argument("--ir-length", type=int, default=None, help="impulse response length (512)")
    p.add_argument("--subject", default=None)
    _add_head(p)
    p.add_argument("--config", default=None, help="JSON file with option defaults")

    p = sub.add_parser("grids", help="list grids or write one as JSON")
    p.add_argument("spec", nargs="?", default=None)
    p.add_argument("-o", "--output", default=None)
    p.add_argument("--list", action="store_true", default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("upsample", help="MCA upsampling of a sparse HRIR container")
    p.add_argument("input")
    p.add_argument("-o", "--output", required=True, help="corrected dense container")
    p.add_argument("--order", type=int, default=None, help="sparse SH order (default: grid order)")
    p.add_argument("--target", default=None, help="target grid spec (fliege:900)")
    p.add_argument("--emit-uncorrected", default=None, metavar="PATH")
    p.add_argument("--emit-filters", default=None, metavar="PATH")
    p.add_argument("--no-correction", action="store_true", default=None,
                   help="force all correction filters to 0 dB")
    p.add_argument("--phase", choices=("minimum", "zero"), default=None)
    p.add_argument("--limit", default=None, help="limiter threshold in dB, or 'off'")
    p.add_argument("--knee", type=float, default=None, help="limiter knee width in dB (3)")
    p.add_argument("--no-fade", action="store_true", default=None,
                   help="disable the fade-in below the aliasing frequency")
    p.add_argument("--sh-mode", choices=("quadrature", "lstsq"), default=None)
    p.add_argument("--threads", type=int, default=None, help="BLAS threads, 0 = library default")
    _add_head(p)
    p.add_argument("--config", default=None)

    p = sub.add_parser("evaluate", help="compare a test container with a reference")
    p.add_argument("test")
    p.add_argument("reference")
    p.add_argument("--csv", default=None, metavar="PATH", help="long-format per-band errors")
    p.add_argument("--summary", default=None, metavar="PATH", help="summary JSON ('-' = stdout)")
    p.add_argument("--band-table", default=None, metavar="PATH")
    p.add_argument("--subject", default=None)
    p.add_argument("--ear", choices=EARS, default=None)
    p.add_argument("--monaural", action="store_true", default=None, help="skip ILD and ITD")
    p.add_argument("--threads", type=int, default=None)
    p.add_argument("--config", default=None)

    p = sub.add_parser("info", help="describe a container")
    p.add_argument("path")
    p.add_argument("--directions", action="store_true", default=None)
    p.add_argument("--config", default=None)
    return top


def resolve(args: argparse.Namespace) -> argparse.Namespace:
    """Fill unset options from the config file, then from DEFAULTS."""
    defaults = DEFAULTS[args.command]
    config = {}
    if getattr(args, "config", None):
        try:
            config = json.loads(Path(args.config).read_text())
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config}: {exc}") from exc
        if not isinstance(config, dict):
            raise UsageError(f"config {args.config}: expected a JSON object")
        config = {k.replace("-", "_"): v for k, v in config.items()}
        known = set(defaults) | {"radius", "head_dims"}
        unknown = sorted(set(config) - known)
        if unknown:
            raise UsageError(f"config {args.config}: unknown option(s) {', '.join(unknown)}")
        if args.command in ("synth-sphere", "upsample") and (args.radius or args.head_dims):
            config.pop("radius", None)
            config.pop("head_dims", None)
    for key, default in defaults.items():
        if getattr(args, key, None) is None:
            setattr(args, key, config.get(key, default))
    for key in ("radius", "head_dims"):
        if hasattr(args, key) and getattr(args, key) is None:
            setattr(args, key, config.get(key))
    if getattr(args, "radius", None) is not None and getattr(args, "head_dims", None) is not None:
        raise UsageError("--radius and --head-dims are mutually exclusive")
    return args


def _head(args, container_meta: dict | None = None) -> HeadModel:
    if args.head_dims is not None:
        if len(args.head_dims) != 3:
            raise UsageError("head_dims needs width, height and depth")
        radius = optimal_head_radius(*map(float, args.head_dims))
    elif args.radius is not None:
        radius = float(args.radius)
    elif container_meta and isinstance(container_meta.get("head"), dict) \
            and "radius_m" in container_meta["head"]:
        radius = float(container_meta["head"]["radius_m"])
    elif container_meta and "head_dims" in container_meta:
        d = container_meta["head_dims"]
        radius = optimal_head_radius(d["width_m"], d["height_m"], d["depth_m"])
    else:
        radius = HEAD_DEFAULT_RADIUS_M
    return HeadModel(radius)


def _threads(n):
    if not n:
        return nullcontext()
    if n < 0:
        raise UsageError("--threads must be >= 0")
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=int(n))


def _write_text(path: str, text: str):
    if path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def _check_writable(*paths):
    for path in paths:
        if path and path != "-" and not Path(path).resolve().parent.is_dir():
            raise FileNotFoundError(f"output directory of {path} does not exist")


# ---------------------------------------------------------------- commands

def cmd_synth_sphere(args) -> int:
    _check_writable(args.output)
    head = _head(args)
    grid = parse_grid_spec(args.grid)
    hrirs = synth_sphere_hrirs(head, grid, int(args.ir_length), float(args.fs))
    container.write_container(hrirs, args.output, subject_id=args.subject)
    print(f"wrote {len(grid)} directions x {args.ir_length} samples at {args.fs:g} Hz "
          f"(r0 = {head.radius_m * 100:.2f} cm) to {args.output}")
    return 0


def cmd_grids(args) -> int:
    if args.list or not args.spec:
        print("lebedev:N   N in " + " ".join(map(str, LEBEDEV_ORDERS)))
        print("fliege:P    P in " + " ".join(map(str, FLIEGE_SIZES)))
        print("horizontal:STEP  azimuth step in degrees, 360 divisible by STEP")
        print("PATH        JSON grid file")
        return 0
    grid = parse_grid_spec(args.spec)
    w = np.asarray(grid.weights) if grid.weights is not None else None
    ratio = f", weight ratio {w.max() / w.min():.3f}" if w is not None else ""
    print(f"{grid.name}: {len(grid)} directions, SH order {grid.nominal_order}{ratio}")
    if args.output:
        container.write_grid(grid, args.output)
    return 0


def cmd_upsample(args) -> int:
    _check_writable(args.output, args.emit_uncorrected, args.emit_filters)
    sparse = container.read_container(args.input)
    head = _head(args, sparse.metadata)
    order = args.order if args.order is not None else sparse.grid.nominal_order
    if order is None:
        raise UsageError(f"grid {sparse.grid.name!r} has no nominal SH order; pass --order")
    target = parse_grid_spec(args.target)
    limiter = None
    if str(args.limit).lower() != "off":
        try:
            limiter = Limiter(float(args.limit), float(args.knee))
        except ValueError as exc:
            raise UsageError(f"bad limiter setting: {exc}") from exc
    sh_mode = {"lstsq": "least_squares"}.get(args.sh_mode, args.sh_mode)
    cfg = McaConfig(int(order), head, target, enable_aliasing_fade=not args.no_fade,
                    limiter=limiter, phase_mode=args.phase, sh_mode=sh_mode,
                    apply_correction=not args.no_correction)
    print(f"f_A = {cfg.aliasing_freq_hz / 1000:.2f} kHz (N = {order}, r0 = {head.radius_m * 100:.2f} cm)")
    print(f"sparse grid {sparse.grid.name}: {len(sparse.grid)} directions; "
          f"target grid {target.name}: {len(target)} directions")
    t0 = time.perf_counter()
    with _threads(args.threads):
        result = mca_upsample(sparse, cfg)
    log.info("upsampling took %.2f s", time.perf_counter() - t0)
    gains = result.filters.gains_db
    print(f"correction gains: max |g| = {np.abs(gains).max():.3f} dB, "
          f"mean |g| = {np.abs(gains).mean():.3f} dB")
    if sparse.metadata.get("kind") == "sphere":
        print(f"sphere oracle: max per-bin deviation from analytic STF = "
              f"{_sphere_deviation(result.dense_corrected, _synth_head(sparse, head)):.2e} dB")
    container.write_container(result.dense_corrected, args.output)
    if args.emit_uncorrected:
        container.write_container(result.dense_uncorrected, args.emit_uncorrected)
    if args.emit_filters:
        container.export_filters(result.filters, args.emit_filters)
    return 0


def _synth_head(hrirs, fallback: HeadModel) -> HeadModel:
    meta = hrirs.metadata.get("head")
    if isinstance(meta, dict) and "radius_m" in meta:
        return HeadModel(float(meta["radius_m"]), allow_any_radius=True)
    return fallback


def _sphere_deviation(hrirs, head: HeadModel) -> float:
    spec = hrirs.to_hrtf()
    stf = sphere_transfer_function(head, hrirs.grid, spec.num_bins, spec.sample_rate_hz)
    return float(np.max(np.abs(20 * np.log10(np.abs(spec.spectra) / np.abs(stf.spectra)))))


def cmd_evaluate(args) -> int:
    for path in (args.csv, args.summary, args.band_table):
        _check_writable(path)
    test = container.read_container(args.test)
    ref = container.read_container(args.reference)
    subject = args.subject if args.subject is not None else str(ref.metadata.get("subject_id", ""))
    with _threads(args.threads):
        report = evaluate(test, ref, subject, binaural=not args.monaural)
    ear = EARS.index(args.ear)
    if args.csv:
        _write_text(args.csv, report.to_csv())
    if args.band_table:
        _write_text(args.band_table, report.band_table_csv(ear))
    summary = report.summary_json(ear)
    if args.summary:
        _write_text(args.summary, summary)
    if args.summary != "-":
        s = report.summary(ear)["delta_g_db"]
        parts = [f"{k} {v:.3f} dB" for k, v in s.items() if v is not None and "above" not in k]
        print("mean dG " + ", ".join(parts))
    return 0


def cmd_info(args) -> int:
    header = container.read_header(args.path)
    if not args.directions:
        header.pop("directions", None)
        header.pop("weights", None)
    print(json.dumps(header, indent=2, sort_keys=True))
    return 0


COMMANDS = {"synth-sphere": cmd_synth_sphere, "grids": cmd_grids, "upsample": cmd_upsample,
            "evaluate": cmd_evaluate, "info": cmd_info}


def exit_code(exc: BaseException) -> int:
    if isinstance(exc, (OSError, container.ContainerError)):
        return EXIT_IO
    if isinstance(exc, PipelineError):
        return EXIT_USAGE if exc.stage == "validate" else EXIT_NUMERIC
    if isinstance(exc, (FloatingPointError, np.linalg.LinAlgError, ArithmeticError)):
        return EXIT_NUMERIC
    return EXIT_USAGE


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr,
                        format="%(asctime)s %(levelname)s %(message)s")
    try:
        resolve(args)
        return COMMANDS[args.command](args)
    except (OSError, container.ContainerError, GridError, UsageError, ValueError,
            ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"mcainterp {args.command}: error: {exc}", file=sys.stderr)
        return exit_code(exc)


if __name__ == "__main__":
    sys.exit(main())
