"""Outage and SINR variance versus blocklength at desk scale.

Runs a small paired-seed sweep over eta for both self-interference levels,
writes the usual CSV artifacts and prints the summary table with the
variance local-minimum verdict.  The same can be done from the shell with
``risisac run`` followed by ``risisac summarize``.

Run with ``python demos/blocklength_sweep.py [--seeds 3] [--out demo_out]``.
"""

import argparse
from pathlib import Path

from risisac.cli import summarize, write_artifacts
from risisac.config import SystemConfig, desk_scale
from risisac.scenario import monte_carlo

parser = argparse.ArgumentParser()
parser.add_argument("--seeds", type=int, default=3)
parser.add_argument("--out", default="demo_out")
args = parser.parse_args()

cfg = desk_scale(SystemConfig())
results = monte_carlo(cfg, [125, 150, 200, 300, 400], [-120.0, -118.0], args.seeds, keep_slots=True)

out = Path(args.out)
write_artifacts(results, out, cfg.n_users, cfg.r_des)
print(f"artifacts in {out}/ (sweep.csv, slots.csv, curves.csv)")
summarize(out / "sweep.csv")
