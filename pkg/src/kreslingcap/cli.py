"""Command-line entry point.

Exit codes: 0 success, 1 usage, 2 configuration, 3 solver, 4 I/O.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import tempfile

from . import __version__
from .config import Config, ConfigError, dump_config, load_config, update
from .errors import GeometryError, ParameterError, SolverError

EXIT_OK, EXIT_USAGE, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("kreslingcap")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common():
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--config", help="YAML config with flat dotted keys")
    p.add_argument("--out", default=None, help="output directory")
    p.add_argument("--seed", type=int, default=None, help="random seed (non-negative integer)")
    p.add_argument("-v", "--verbose", action="store_true")
    return p


def build_parser():
    common = _common()
    ap = _Parser(prog="kreslingcap", description="Inverted-Kresling capacitive twist sensor toolkit")
    ap.add_argument("--version", action="version", version=__version__)
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    g = sub.add_parser("generate", parents=[common], help="write the assembled mesh")
    g.add_argument("--format", choices=("stl", "obj"), default="stl")

    s = sub.add_parser("simulate", parents=[common], help="one torque-twist curve")
    s.add_argument("--delta", type=float, default=0.0, help="axial offset (mm)")
    s.add_argument("--theta-max", type=float, default=None)
    s.add_argument("--points", type=int, default=31)

    c = sub.add_parser("capacitance", parents=[common], help="one capacitance-twist curve")
    c.add_argument("--delta", type=float, default=0.0)
    c.add_argument("--theta-max", type=float, default=None)
    c.add_argument("--points", type=int, default=31)

    sg = sub.add_parser("signal", parents=[common], help="acquisition chain on a t_s,C_pF timeline")
    sg.add_argument("timeline", help="CSV with columns t_s, C_pF")
    sg.add_argument("--window", type=int, default=None, help="sliding calibration window (samples)")

    pr = sub.add_parser("protocol", parents=[common], help="full simulated test protocol")
    pr.add_argument("--offsets", type=float, nargs="+", default=None, help="axial offsets (mm)")
    pr.add_argument("--cycles", type=int, default=None)
    pr.add_argument("--theta-max", type=float, default=None)
    pr.add_argument("--json-summary", action="store_true", help="also write summary.json")
    pr.add_argument("--no-plots", action="store_true")

    cb = sub.add_parser("calibrate", parents=[common], help="fit hinge and electrode-area factors")
    cb.add_argument("--write", default=None, help="where to write the calibrated config "
                                                   "(default: the --config file, else <out>/calibrated.yaml)")
    return ap


def _load(args) -> Config:
    cfg = load_config(args.config) if args.config else Config()
    if args.seed is not None:
        if args.seed < 0 or args.seed >= 2**64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        cfg = update(cfg, "protocol", seed=int(args.seed))
    theta_max = getattr(args, "theta_max", None)
    if theta_max is not None:
        cfg = update(cfg, "protocol", theta_max=float(theta_max))
    if getattr(args, "offsets", None) is not None:
        cfg = update(cfg, "protocol", axial_offsets=tuple(args.offsets))
    if getattr(args, "cycles", None) is not None:
        cfg = update(cfg, "protocol", cycles=int(args.cycles))
    try:
        cfg.validate()
    except ParameterError as exc:
        raise UsageError(str(exc)) from exc
    return cfg


def _out_dir(args, cfg):
    out = args.out or cfg.protocol.output_dir
    os.makedirs(out, exist_ok=True)
    return out


def _write_atomic(path, data, mode="w"):
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    with os.fdopen(fd, mode) as fh:
        fh.write(data)
    os.replace(tmp, path)


def cmd_generate(args, cfg):
    from .geometry import assemble, export_mesh

    mesh = assemble(cfg.geometry)
    out = _out_dir(args, cfg)
    path = os.path.join(out, f"kresling.{args.format}")
    _write_atomic(path, export_mesh(mesh, args.format), "wb")
    ext = mesh.extents()
    print(f"wrote {path}: {len(mesh.vertices)} vertices, {len(mesh.faces)} faces, "
          f"extents {ext[0]:.3f} x {ext[1]:.3f} x {ext[2]:.3f} mm")


def _curve(args, cfg):
    from .harness import build_pipeline
    from .structure import torque_rotation_curve

    if args.points < 2:
        raise UsageError("--points must be >= 2")
    pipe = build_pipeline(cfg)
    curve = torque_rotation_curve(pipe.model, args.delta, cfg.protocol.theta_max, args.points)
    return pipe, curve


def cmd_simulate(args, cfg):
    from .harness import write_csv
    from .plotting import curve_plot

    _, curve = _curve(args, cfg)
    out = _out_dir(args, cfg)
    path = os.path.join(out, "torque_curve.csv")
    write_csv(path, curve.CSV_HEADER, curve.rows())
    curve_plot(curve.theta, curve.torque, "twist (deg)", "torque (N mm)", os.path.join(out, "torque_curve.svg"))
    print(f"wrote {path}: torque at {curve.theta[-1]:g} deg = {curve.torque[-1]:.4g} N mm")


def cmd_capacitance(args, cfg):
    from .capacitance import capacitance_vs_twist, curve_csv, sensitivity
    from .plotting import curve_plot

    pipe, curve = _curve(args, cfg)
    cc = capacitance_vs_twist(pipe.model, pipe.pairs, args.delta, curve=curve,
                              area_scale=cfg.electrodes.area_scale)
    out = _out_dir(args, cfg)
    path = os.path.join(out, "capacitance_curve.csv")
    _write_atomic(path, curve_csv(cc))
    curve_plot(cc.theta, cc.total, "twist (deg)", "C (pF)", os.path.join(out, "capacitance_curve.svg"))
    print(f"wrote {path}: C(0)={cc.total[0]:.4g} pF, C({cc.theta[-1]:g})={cc.total[-1]:.4g} pF, "
          f"sensitivity {sensitivity(cc):.4g} pF/deg, area_scale {cfg.electrodes.area_scale:.4g}")


def cmd_signal(args, cfg):
    from .signal import read_timeline, synthesize_acquisition

    with open(args.timeline) as fh:
        t, c = read_timeline(fh.read())
    window = args.window if args.window is not None else cfg.signal.window
    acq = synthesize_acquisition(t, c, cfg.tank, seed=cfg.protocol.seed, window=window)
    out = _out_dir(args, cfg)
    path = os.path.join(out, "signal.csv")
    _write_atomic(path, acq.to_csv())
    print(f"wrote {path}: {len(t)} samples")


def cmd_protocol(args, cfg):
    from .harness import run_protocol, write_json_summary

    out = _out_dir(args, cfg)
    bundle = run_protocol(cfg, out, plots=not args.no_plots,
                          progress=(lambda m: log.info(m)) if args.verbose else None)
    if args.json_summary:
        write_json_summary(bundle, os.path.join(out, "summary.json"))
    failed = sum(int(r.summary[9]) for r in bundle.offsets)
    print(f"wrote {len(bundle.csv_paths)} offset tables and {bundle.summary_path}")
    if failed:
        print(f"{failed} points failed to converge (see valid_flag)", file=sys.stderr)


def cmd_calibrate(args, cfg):
    from .harness import apply_calibration, calibrate

    res = calibrate(cfg, progress=(lambda m: log.info(m)) if args.verbose else None)
    new = apply_calibration(cfg, res)
    if args.write:
        path = args.write
    elif args.config:
        path = args.config
    else:
        path = os.path.join(_out_dir(args, cfg), "calibrated.yaml")
    _write_atomic(path, dump_config(new))
    print(f"fold_coeff={res.fold_coeff:.6g} facet_ratio={res.facet_ratio:g} area_scale={res.area_scale:.6g} "
          f"(torque at 30 deg {res.torque_30:.4g} N mm, C ratio {res.c_ratio:.4g}); wrote {path}")


COMMANDS = {"generate": cmd_generate, "simulate": cmd_simulate, "capacitance": cmd_capacitance,
            "signal": cmd_signal, "protocol": cmd_protocol, "calibrate": cmd_calibrate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except FileNotFoundError as exc:
        print(f"error: config file not found: {exc.filename}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        COMMANDS[args.command](args, cfg)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SolverError as exc:
        print(f"solver error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except (ParameterError, GeometryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
