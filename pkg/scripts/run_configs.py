"""Run every shipped config through the CLI.

    python scripts/run_configs.py [--quick] [--open-system] [--only gate ...] [--out out]

Each config goes to the subcommand its sections imply. Output lands in
``OUT/<config stem>``; a one-line status per config is printed.
"""

import argparse
import time
from pathlib import Path

from fluxsim import cli
from fluxsim.config import load_config

ROOT = Path(__file__).resolve().parents[1]


def subcommand(path: Path) -> str:
    cfg = load_config(path)
    text = path.read_text()
    if "[optimize]" in text:
        return "optimize"
    if "[coherence]" in text:
        return "coherence"
    if cfg.pulse is not None:
        return "gate"
    return "spectrum"


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--quick", action="store_true")
    ap.add_argument("--open-system", action="store_true")
    ap.add_argument("--only", nargs="*", default=None, help="substrings of config names to run")
    ap.add_argument("--out", default="out")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args(argv)
    for path in sorted((ROOT / "configs").glob("*.toml")):
        if args.only and not any(s in path.stem for s in args.only):
            continue
        cmd = subcommand(path)
        argv_ = [cmd, "--config", str(path), "--out", str(Path(args.out) / path.stem)]
        if args.quick:
            argv_.append("--quick")
        if args.open_system and cmd == "gate":
            argv_.append("--open-system")
        if args.workers:
            argv_ += ["--workers", str(args.workers)]
        t = time.perf_counter()
        code = cli.main(argv_)
        print(f"{path.stem:24s} {cmd:10s} exit {code}  {time.perf_counter() - t:7.1f} s")


if __name__ == "__main__":
    main()
