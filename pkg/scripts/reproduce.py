"""Run the shipped experiment grids on a synthetic corpus and print their tables.

    python scripts/reproduce.py                       # every grid in configs/
    python scripts/reproduce.py configs/dl_study.grid --variability 1.0 --workers 2

Outputs land in ``runs/<grid name>/`` (results.csv, timings.csv, table_*.csv).
Reruns resume from the journal, so an interrupted run can simply be restarted.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
import warnings
from pathlib import Path

from eegattn.ingest import SynthSpec, generate_synthetic
from eegattn.sweep import emit_table, load_grid, run_sweep, table_name, write_results, write_timings

ROOT = Path(__file__).resolve().parents[1]


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    p.add_argument("grids", nargs="*", type=Path)
    p.add_argument("--out", type=Path, default=ROOT / "runs")
    p.add_argument("--subjects", type=int, default=5)
    p.add_argument("--trials", type=int, default=5)
    p.add_argument("--minutes", type=float, default=45.0)
    p.add_argument("--variability", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--workers", type=int, default=1)
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO, format="%(message)s")

    grids = args.grids or sorted((ROOT / "configs").glob("*.grid"))
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        spec = SynthSpec(
            num_subjects=args.subjects,
            trials_per_subject=args.trials,
            trial_duration_min=args.minutes,
            subject_variability=args.variability,
            seed=args.seed,
        )
        recordings = generate_synthetic(spec)
    print(f"corpus: {len(recordings)} recordings in {time.perf_counter() - t0:.1f} s")

    for path in grids:
        grid = load_grid(path)
        out = args.out / path.stem
        t0 = time.perf_counter()
        result = run_sweep(recordings, grid, workers=args.workers, out_dir=out)
        write_results(result, out / "results.csv", {"grid": grid.to_dict(), "synth": vars(args) | {"grids": None, "out": None}})
        write_timings(result, out / "timings.csv")
        print(f"\n== {path.name}: {len(result.records)} records, {len(result.errors())} errors, "
              f"{time.perf_counter() - t0:.0f} s")
        for group_by in grid.tables or (("classifier",),):
            table = out / table_name(group_by)
            emit_table(result, group_by, table, drowsy_recall=True)
            print(f"-- {table.name}")
            print(table.read_text().rstrip())
    return 0


if __name__ == "__main__":
    sys.exit(main())
