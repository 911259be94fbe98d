"""Wall-clock comparison of the naive and wavefront table sweeps."""

import csv
import io
import time

import numpy as np

from .autograd import Tensor, no_grad
from .table_encoder import SCHEDULES, MdGruCell, run_direction

DEFAULT_SIZES = (16, 32, 64, 128)


def time_sweep(n, schedule, hidden=32, d_in=32, repeats=1, seed=0):
    rng = np.random.default_rng(seed)
    cell = MdGruCell(d_in, hidden, rng)
    x = Tensor(rng.normal(size=(1, n, n, d_in)))
    best = float("inf")
    with no_grad():
        for _ in range(repeats):
            t0 = time.perf_counter()
            run_direction(cell, x, None, "a", schedule=schedule)
            best = min(best, time.perf_counter() - t0)
    return best


def run_bench(sizes=DEFAULT_SIZES, hidden=32, repeats=1, seed=0):
    """Rows of (N, schedule, seconds)."""
    return [(n, sched, time_sweep(n, sched, hidden, hidden, repeats, seed)) for n in sizes for sched in SCHEDULES]


def to_csv(rows):
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["N", "schedule", "seconds"])
    for n, sched, sec in rows:
        writer.writerow([n, sched, f"{sec:.6f}"])
    return buf.getvalue()


def ratios(rows):
    """naive / wavefront time per N."""
    by = {(n, s): t for n, s, t in rows}
    return {n: by[(n, "naive")] / by[(n, "wavefront")] for n in sorted({r[0] for r in rows})}
