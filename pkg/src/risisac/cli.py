"""Command-line driver: ``risisac run`` writes CSV artifacts, ``risisac summarize`` reads them back.

Output files of ``run`` (all CSV with a header row, numbers at 17 significant digits):

``manifest.json``  config checksum, code version, grids, seeds, timestamps, output paths
``sweep.csv``      eta, rho_db, seed, cts_1..cts_K, outage_probability, sinr_variance, n_slots, n_failed, error
``slots.csv``      eta, rho_db, seed, t, tau, r_1..r_K, gamma_s_planned, gamma_s_realized, outage, psi
``curves.csv``     eta, rho_db, seed, t, cts_1..cts_K (running CTS)
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, config_from_mapping, desk_scale, read_config_mapping
from .scenario import aggregate, cts_series, monte_carlo

EXIT_OK, EXIT_CONFIG, EXIT_SOLVER, EXIT_IO = 0, 1, 2, 3


class CsvFormatError(ValueError):
    pass


def fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def sweep_header(K):
    return (["eta", "rho_db", "seed"] + [f"cts_{k + 1}" for k in range(K)]
            + ["outage_probability", "sinr_variance", "n_slots", "n_failed", "error"])


def sweep_row(r):
    return ([fmt(r.eta), fmt(r.rho_db), fmt(r.seed)] + [fmt(c) for c in r.cts_per_user]
            + [fmt(r.outage_probability), fmt(r.sinr_variance), fmt(r.n_slots), fmt(r.n_failed), r.error])


def slot_header(K):
    return (["eta", "rho_db", "seed", "t", "tau"] + [f"r_{k + 1}" for k in range(K)]
            + ["gamma_s_planned", "gamma_s_realized", "outage", "psi"])


def write_artifacts(results, out, K, r_des):
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "sweep.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(sweep_header(K))
        for r in results:
            w.writerow(sweep_row(r))
    with open(out / "slots.csv", "w", newline="") as fs, open(out / "curves.csv", "w", newline="") as fc:
        ws = csv.writer(fs, lineterminator="\n")
        wc = csv.writer(fc, lineterminator="\n")
        ws.writerow(slot_header(K))
        wc.writerow(["eta", "rho_db", "seed", "t"] + [f"cts_{k + 1}" for k in range(K)])
        for r in results:
            if not r.slots:
                continue
            key = [fmt(r.eta), fmt(r.rho_db), fmt(r.seed)]
            for s in r.slots:
                ws.writerow(key + [fmt(s.t), fmt(s.tau)] + [fmt(x) for x in s.rates]
                            + [fmt(s.gamma_s_planned), fmt(s.gamma_s_realized), fmt(s.outage), fmt(s.psi)])
            for s, row in zip(r.slots, cts_series(r.slots, r_des)):
                wc.writerow(key + [fmt(s.t)] + [fmt(x) for x in row])


def read_sweep_csv(path):
    """Parse ``sweep.csv`` into a list of dicts; raises :class:`CsvFormatError` with the line number."""
    rows = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise CsvFormatError(f"{path}:1: empty file") from None
        required = {"eta", "rho_db", "seed", "outage_probability", "sinr_variance"}
        missing = required - set(header)
        if missing:
            raise CsvFormatError(f"{path}:1: missing column(s) {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise CsvFormatError(f"{path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            rec = {}
            for name, cell in zip(header, row):
                if name == "error":
                    rec[name] = cell
                    continue
                try:
                    rec[name] = int(cell) if name in ("eta", "seed", "n_slots", "n_failed") else float(cell)
                except ValueError:
                    raise CsvFormatError(f"{path}:{lineno}: column {name!r} is not numeric: {cell!r}") from None
            rows.append(rec)
    return rows


def _mean_ci(vals, z=1.96):
    vals = np.asarray(vals, float)
    if vals.size == 1:
        return float(vals[0]), 0.0
    return float(vals.mean()), float(z * vals.std(ddof=1) / math.sqrt(vals.size))


def local_minima(etas, values):
    """Interior indices where ``values`` dips below both neighbours."""
    return [etas[i] for i in range(1, len(values) - 1) if values[i] < values[i - 1] and values[i] < values[i + 1]]


def summarize(path, out=sys.stdout):
    rows = [r for r in read_sweep_csv(path) if not r.get("error")]
    groups = {}
    for r in rows:
        groups.setdefault((r["eta"], r["rho_db"]), []).append(r)
    print(f"{'eta':>6} {'rho_db':>8} {'n':>4} {'outage':>24} {'sinr_variance':>30}", file=out)
    stats = {}
    for (eta, rho), rs in sorted(groups.items()):
        o = _mean_ci([r["outage_probability"] for r in rs])
        v = _mean_ci([r["sinr_variance"] for r in rs])
        stats[(eta, rho)] = (o, v)
        print(f"{eta:>6} {rho:>8.1f} {len(rs):>4} {o[0]:>12.4f} +- {o[1]:<8.4f} {v[0]:>14.6g} +- {v[1]:<12.6g}",
              file=out)
    verdicts = {}
    for rho in sorted({k[1] for k in stats}):
        etas = sorted(e for e, r in stats if r == rho)
        var = [stats[(e, rho)][1][0] for e in etas]
        mins = local_minima(etas, var)
        verdicts[rho] = mins
        if mins:
            print(f"rho={rho:g} dB: variance local minimum at eta={','.join(str(m) for m in mins)}", file=out)
        else:
            print(f"rho={rho:g} dB: no local minimum in SINR variance over eta", file=out)
    rhos = sorted({k[1] for k in stats})
    for lo, hi in zip(rhos, rhos[1:]):
        for eta in sorted({k[0] for k in stats}):
            if (eta, lo) in stats and (eta, hi) in stats and stats[(eta, hi)][0][0] < stats[(eta, lo)][0][0]:
                print(f"warning: eta={eta}: mean outage at rho={hi:g} dB below rho={lo:g} dB", file=out)
    return verdicts


def _float_list(text):
    return [float(x) for x in text.split(",") if x.strip()]


def _int_list(text):
    return [int(x) for x in text.split(",") if x.strip()]


def build_parser():
    p = argparse.ArgumentParser(prog="risisac", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run the eta x rho x seed sweep and write CSV artifacts")
    run.add_argument("--config", type=Path, help="dotted-key TOML config (defaults if omitted)")
    run.add_argument("--eta", type=_int_list, help="comma-separated blocklengths")
    run.add_argument("--rho", type=_float_list, help="comma-separated residual SI levels in dB")
    run.add_argument("--seeds", type=int, help="number of seeds per grid cell")
    run.add_argument("--seed-base", type=int, help="first seed")
    run.add_argument("--out", type=Path, default=Path("out"))
    run.add_argument("--full-scale", action="store_true", help="50x50 RIS and every slot")
    run.add_argument("--decimate", type=int, help="evaluate every N-th slot")
    run.add_argument("--inner-sca", type=int, help="SCA iterations per slot")
    run.add_argument("--max-failed-frac", type=float, default=0.5,
                     help="exit 2 when more than this fraction of slots/cells failed")
    summ = sub.add_parser("summarize", help="tabulate a sweep.csv")
    summ.add_argument("sweep", type=Path)
    return p


def _join_negative_values(argv):
    """Allow ``--rho -120,-118`` (argparse would read ``-120,-118`` as an option)."""
    out, i = [], 0
    while i < len(argv):
        a = argv[i]
        if a in ("--rho", "--eta") and i + 1 < len(argv) and argv[i + 1].startswith("-"):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


def resolve_config(args):
    mapping = read_config_mapping(args.config) if args.config else {}
    cfg = config_from_mapping(mapping)
    if args.full_scale:
        cfg = cfg.replace(ris_rows=50, ris_cols=50, decimate=1)
    else:  # desk scale fills in only what the config file leaves unset
        explicit = set(mapping.get("system", {})) | set(mapping.get("optim", {}))
        cfg = desk_scale(cfg, keep=explicit)
    overrides = {}
    if args.decimate is not None:
        overrides["decimate"] = args.decimate
    if args.inner_sca is not None:
        overrides["inner_sca"] = args.inner_sca
    sweep = cfg.sweep
    sweep_changes = {}
    if args.eta:
        sweep_changes["eta"] = tuple(args.eta)
    if args.rho:
        sweep_changes["rho_db"] = tuple(args.rho)
    if args.seeds is not None:
        sweep_changes["seeds"] = args.seeds
    if args.seed_base is not None:
        sweep_changes["seed_base"] = args.seed_base
    if sweep_changes:
        import dataclasses

        overrides["sweep"] = dataclasses.replace(sweep, **sweep_changes)
    return cfg.replace(**overrides) if overrides else cfg


def cmd_run(args):
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    out = args.out
    sw = cfg.sweep
    manifest = {
        "config_checksum": cfg.checksum(),
        "code_version": __version__,
        "eta": list(sw.eta),
        "rho_db": list(sw.rho_db),
        "seeds": list(range(sw.seed_base, sw.seed_base + sw.seeds)),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "outputs": {name: str(out / name) for name in ("sweep.csv", "slots.csv", "curves.csv")},
        "config": cfg.to_dict(),
    }
    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=list) + "\n")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    results = monte_carlo(cfg, list(sw.eta), list(sw.rho_db), sw.seeds, sw.seed_base, keep_slots=True)
    try:
        write_artifacts(results, out, cfg.n_users, cfg.r_des)
        manifest["finished"] = time.strftime("%Y-%m-%dT%H:%M:%S%z")
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=list) + "\n")
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    for (eta, rho), row in aggregate(results).items():
        o = row["outage_probability"]
        print(f"eta={eta} rho={rho:g} dB  outage={o[0]:.4f} +- {o[1]:.4f}  n={row['n']}")
    n_cells = len(results)
    bad_cells = sum(bool(r.error) for r in results)
    n_slots = sum(r.n_slots for r in results)
    bad_slots = sum(r.n_failed for r in results)
    if bad_cells > args.max_failed_frac * n_cells or (n_slots and bad_slots > args.max_failed_frac * n_slots):
        print(f"solver failure budget exceeded: {bad_cells}/{n_cells} cells, {bad_slots}/{n_slots} slots",
              file=sys.stderr)
        return EXIT_SOLVER
    return EXIT_OK


def cmd_summarize(args):
    try:
        summarize(args.sweep)
    except CsvFormatError as exc:
        print(f"malformed CSV: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


def main(argv=None):
    args = build_parser().parse_args(_join_negative_values(list(sys.argv[1:] if argv is None else argv)))
    if args.command == "run":
        return cmd_run(args)
    return cmd_summarize(args)


if __name__ == "__main__":
    sys.exit(main())
