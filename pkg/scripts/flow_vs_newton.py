"""Flow and Newton on the 1D pendulum: H_k history and cost per grid size."""

import sys

from effham.cli import ExperimentConfig, bench_one

ns = [int(a) for a in sys.argv[1:]] or [15, 30, 60, 120]
cfg = ExperimentConfig(hamiltonian="minus_sin", P=(0.5,), k=(100.0,), experiment="bench").validate()
print(f"{'N':>4} {'method':>7} {'H_k':>10} {'iters':>6} {'seconds':>8} {'evals':>6} {'benchmark':>10}")
for n in ns:
    for row in bench_one(cfg, n):
        N, meth, hb, its, wall, ev, _, bench = row
        print(f"{N:4d} {meth:>7} {hb:10.6f} {its:6d} {wall:8.3f} {ev:6d} {bench:10.6f}")
