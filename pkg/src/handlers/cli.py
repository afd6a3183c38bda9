import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from config.run_config import load_config
from handlers.pipeline import run_pipeline
from handlers.stages import FULL_RUN, STAGE_ORDER
from shockstab.errors import ShockStabError
from storage.artifacts import dump_json

logger = logging.getLogger(__name__)

# 全サブコマンド共通のフラグ -> 設定キー
COMMON_FLAGS: Dict[str, Tuple[str, type]] = {
    "law": ("law.name", str),
    "scheme": ("scheme.name", str),
    "nu": ("scheme.nu", float),
    "D": ("scheme.D", float),
    "J_dom": ("lattice.J_dom", int),
    "tol": ("newton.tol", float),
    "disc_radius": ("symbol.disc_radius", float),
    "seed": ("stability.seed", int),
    "out": ("output.dir", str),
    "bucket": ("output.bucket", str),
}

# サブコマンド固有: (フラグ, 設定キー または None (ステージの option), 型)
STAGE_FLAGS: Dict[str, List[Tuple[str, Optional[str], Any]]] = {
    "green-spatial": [("z", "green.z", float), ("j0", "green.j0", int)],
    "green-temporal": [("j0", "decompose.j0", int), ("nmax", None, int)],
    "decompose": [("j0", "decompose.j0", int), ("nmax", None, int)],
    "stability": [("r1", None, str), ("r2", None, str), ("gen", None, str), ("nmax", "stability.nmax", int),
                  ("center", "stability.center", int)],
    "kernels": [
        ("mu", None, int),
        ("beta", None, complex),
        ("xmin", "kernels.xmin", float),
        ("xmax", "kernels.xmax", float),
        ("n", "kernels.n", int),
    ],
    "spectrum": [("rho", "spectrum.rho", float)],
}


def build_parser() -> argparse.ArgumentParser:
  parser = argparse.ArgumentParser(
      prog="dsp-stab",
      description="Stationary discrete shock profiles and their spectral / orbital stability.",
  )
  parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
  sub = parser.add_subparsers(dest="command", required=True)

  for name in (*STAGE_ORDER, FULL_RUN):
    command = sub.add_parser(name, help=f"run {name} and its prerequisites")
    command.add_argument("--config", type=Path, default=None, help="TOML file or bundled preset name")
    for flag, (_, kind) in COMMON_FLAGS.items():
      command.add_argument(f"--{flag}", type=kind, default=None)
    for flag, _, kind in STAGE_FLAGS.get(name, []):
      command.add_argument(f"--{flag}", type=kind, default=None)
    if name == "evans":
      command.add_argument("--circle", nargs=2, type=float, metavar=("R", "N"), default=None,
                           help="radius and number of points of the circle around z=1")
  return parser


def split_arguments(args: argparse.Namespace) -> Tuple[Dict[str, Any], Dict[str, Any]]:
  """
  フラグを設定の上書き (ドット区切りキー) とステージ option に分ける。
  """

  overrides: Dict[str, Any] = {}
  options: Dict[str, Any] = {}
  for flag, (key, _) in COMMON_FLAGS.items():
    overrides[key] = getattr(args, flag)
  for flag, key, _ in STAGE_FLAGS.get(args.command, []):
    value = getattr(args, flag)
    if value is None:
      continue
    if key is None:
      options[flag] = value
    else:
      overrides[key] = value
      if flag == "nmax":
        options[flag] = value
  if getattr(args, "circle", None):
    radius, points = args.circle
    overrides["evans.radius"] = radius
    overrides["evans.n_points"] = int(points)
  return {k: v for k, v in overrides.items() if v is not None}, options


def main(argv: Optional[List[str]] = None) -> int:
  args = build_parser().parse_args(argv)
  logging.basicConfig(
      level=logging.DEBUG if args.verbose else logging.INFO,
      format="%(levelname)s %(name)s %(message)s",
      stream=sys.stderr,
  )

  try:
    overrides, options = split_arguments(args)
    config = load_config(args.config, overrides)
  except ShockStabError as exc:
    logger.error("[CLI] %s", exc)
    print(dump_json(exc.to_report()))
    return exc.exit_code

  run = run_pipeline(config, target=args.command, options=options)
  if args.command in run.results:
    result = run.results[args.command]
    print(dump_json({**result.summary, "checks": result.checks}))
  else:
    print(dump_json(run.manifest()))
  return run.exit_code


if __name__ == "__main__":
  sys.exit(main())
