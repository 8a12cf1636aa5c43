"""Command-line driver: ``simulate``, ``fuse`` and ``stats``.

Exit codes: 0 success, 1 usage, 2 data error, 3 internal error.
"""

from __future__ import annotations

import argparse
import logging
import sys
import traceback
from pathlib import Path

from . import dataio, sim
from .errors import ConfigError, DepthFuseError, ParseError
from .fusion import StatsRow, format_table, sequence_stats
from .geometry import MODES
from .pipeline import PipelineConfig, run_fusion
from .scale import SCALE_MODES

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_INTERNAL = 0, 1, 2, 3

log = logging.getLogger("depthfuse")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


# ------------------------------------------------------------------------ parsing


def _gate(text: str) -> float | None:
    if text.strip().lower() == "off":
        return None
    try:
        k = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected 'off' or a positive number, got {text!r}") from None
    if not k > 0:
        raise argparse.ArgumentTypeError(f"fusion gate must be positive, got {text!r}")
    return k


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise argparse.ArgumentTypeError(f"expected a boolean, got {text!r}")


# config-file key -> converter; keys are the PipelineConfig field names
_CONFIG_KEYS = {
    "dataset": Path,
    "output": Path,
    "interpolation": str,
    "scale_mode": str,
    "scale_once": _bool,
    "min_support": int,
    "noise_coeff": float,
    "fusion_gate": _gate,
    "sigma_viz_max": float,
}


def read_config(path) -> dict:
    """PipelineConfig overrides from a ``key value`` file."""
    out = {}
    for key, (value, lineno) in dataio.read_keyvalue(path).items():
        conv = _CONFIG_KEYS.get(key)
        if conv is None:
            raise ParseError(f"{path}:{lineno}: unknown key {key!r}; expected one of {sorted(_CONFIG_KEYS)}")
        try:
            out[key] = conv(value)
        except (ValueError, argparse.ArgumentTypeError) as exc:
            raise ParseError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from None
    return out


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="depthfuse", description="Fuse RGBD depth with semi-dense SfM depth.")
    p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    p.add_argument("-q", "--quiet", action="store_true", help="warnings and errors only")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="write a synthetic dataset with ground truth")
    s.add_argument("out", type=Path, help="dataset root to create")
    s.add_argument("--scene", type=Path, help="scene file (default: built-in demo room)")
    traj = s.add_mutually_exclusive_group()
    traj.add_argument("--line", action="store_true", help="straight dolly toward the back wall (default)")
    traj.add_argument("--orbit", action="store_true", help="arc around the room centre")
    traj.add_argument("--trajectory", type=Path, help="explicit trajectory file")
    s.add_argument("--frames", type=int, default=100, help="frames for --line/--orbit (default 100)")
    s.add_argument("--fps", type=float, default=30.0)
    s.add_argument("--stride", type=int, default=10, help="keyframe every N frames (default 10)")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--sfm-alpha", type=float, default=1.0, help="hidden SfM scale")
    s.add_argument("--sfm-scale-drift", type=float, default=0.0, help="fractional scale drift over the run")
    s.add_argument("--sfm-fraction", type=float, default=0.3, help="fraction of textured pixels with SfM depth")
    s.add_argument("--pose-noise", type=float, default=0.0, help="uniform pose perturbation (m and rad)")
    s.add_argument("--intrinsics", type=Path, help="intrinsics file (default: built-in 320x240 camera)")

    f = sub.add_parser("fuse", help="run the fusion pipeline over a dataset")
    f.add_argument("--config", type=Path, help="key-value file of defaults; flags override it")
    f.add_argument("--dataset", type=Path)
    f.add_argument("--output", type=Path, help="default: <dataset>/fused")
    f.add_argument("--interpolation", choices=MODES)
    f.add_argument("--scale-mode", choices=SCALE_MODES)
    f.add_argument("--scale-once", action="store_const", const=True, default=None)
    f.add_argument("--min-support", type=int)
    f.add_argument("--noise-coeff", type=float)
    f.add_argument("--fusion-gate", type=_gate, metavar="off|K")
    f.add_argument("--sigma-viz-max", type=float)

    st = sub.add_parser("stats", help="summarize stats.csv of one or more fused runs")
    st.add_argument("dirs", nargs="+", type=Path, help="fused directories (or stats.csv files)")
    return p


# ----------------------------------------------------------------------- commands


def cmd_simulate(args) -> int:
    scene = sim.read_scene(args.scene) if args.scene else sim.demo_scene()
    intr = dataio.read_intrinsics(args.intrinsics) if args.intrinsics else sim.demo_intrinsics()
    if args.trajectory:
        traj = list(dataio.read_trajectory(args.trajectory).values())
        if not traj:
            raise ParseError(f"{args.trajectory}: no poses")
    else:
        if args.frames < 1:
            raise ConfigError(f"--frames must be >= 1, got {args.frames}")
        make = sim.orbit_trajectory if args.orbit else sim.line_trajectory
        traj = make(args.frames, fps=args.fps)
    cfg = sim.SimConfig(
        seed=args.seed,
        sfm_alpha=args.sfm_alpha,
        sfm_scale_drift=args.sfm_scale_drift,
        sfm_fraction=args.sfm_fraction,
        pose_noise=args.pose_noise,
    )
    info = sim.generate_dataset(scene, traj, args.stride, cfg, args.out, intr)
    log.info("wrote %d frames, %d keyframes to %s", info.frames, info.keyframes, info.root)
    return EXIT_OK


def fuse_config(args) -> PipelineConfig:
    values = read_config(args.config) if args.config else {}
    for key in _CONFIG_KEYS:
        v = getattr(args, key)
        if v is not None:
            values[key] = v
    if "dataset" not in values:
        raise UsageError("depthfuse fuse: --dataset is required (or 'dataset' in --config)")
    return PipelineConfig(**values)


def cmd_fuse(args) -> int:
    cfg = fuse_config(args)
    frames = run_fusion(cfg)
    log.info("fused %d frames into %s", len(frames), cfg.output)
    return EXIT_OK


def _stats_path(d: Path) -> Path:
    return d if d.suffix == ".csv" else d / "stats.csv"


def _experiment_name(d: Path) -> str:
    d = d.parent if d.suffix == ".csv" else d
    # <dataset>/fused is the default layout, so name it after the dataset
    return d.parent.name if d.name == "fused" and d.parent.name else d.name


def cmd_stats(args) -> int:
    if len(args.dirs) == 1:
        rows, _ = dataio.read_stats_csv(_stats_path(args.dirs[0]))
        print(format_table(sequence_stats(rows), "frame"))
        return EXIT_OK
    experiments = []
    for d in args.dirs:
        rows, _ = dataio.read_stats_csv(_stats_path(d))
        avg = sequence_stats(rows)[-1]
        experiments.append(
            StatsRow(_experiment_name(d), avg.rgbd_only_pct, avg.sfm_only_pct, avg.fused_pct, avg.total_measured)
        )
    print(format_table(sequence_stats(experiments), "experiment"))
    return EXIT_OK


_COMMANDS = {"simulate": cmd_simulate, "fuse": cmd_fuse, "stats": cmd_stats}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    level = logging.DEBUG if args.verbose else logging.WARNING if args.quiet else logging.INFO
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr, force=True)
    try:
        return _COMMANDS[args.command](args)
    except (UsageError, ConfigError) as exc:
        print(f"depthfuse {args.command}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DepthFuseError, OSError) as exc:
        print(exc, file=sys.stderr)
        return EXIT_DATA
    except Exception:  # noqa: BLE001
        traceback.print_exc()
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
