"""Phase map of the supporter model over Red lethality and Red capacity.

Runs the sweep from demos/configs/lethality_map.json (optionally coarsened) and
prints an ASCII map: B for Blue wins, R for Red wins, . for a draw.
"""
import argparse
import json
from pathlib import Path

from advdyn import cli
from advdyn.sweep import SweepSpec, run_sweep

CONFIG = Path(__file__).parent / "configs" / "lethality_map.json"


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("-n", type=int, default=24, help="grid points per axis")
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()

    cfg = json.loads(CONFIG.read_text())
    cfg["sweep"]["axis_x"][3] = cfg["sweep"]["axis_y"][3] = args.n
    spec: SweepSpec = cli.sweep_spec_from_config(cfg)
    res = run_sweep(spec, workers=cli.resolve_workers(args.workers))
    glyph = {"blue": "B", "red": "R", "draw": ".", "none": " "}
    print("capacity_R (top = high) vs lethality_R (left = 0)")
    for j in range(args.n - 1, -1, -1):
        print(f"{res.y[j, 0]:5.2f} " + "".join(glyph[o] for o in res.outcome[j]))


if __name__ == "__main__":
    main()
