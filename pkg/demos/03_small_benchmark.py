"""
A desk-sized benchmark
======================

Classic GP runs first on every (equation, seed) cell.  Cells it fails to
solve (test MSE above 0.001) are handed to the post-processing methods,
each starting from Classic's best equation.
"""

from redeq.bench import ExperimentConfig, load_corpus, run_experiment
from redeq.eds import GpConfig, GpModel
from redeq.postproc import Permute, Red, Refit, SeededGp

corpus = [e for e in load_corpus() if e.id in {"I.12.1", "I.14.4", "I.39.1", "sextic"}]
gp = GpConfig(population_size=300, generations=10)
cfg = ExperimentConfig(corpus, rows=300, seeds=(0, 1),
                       methods=(Red(), Permute(), Refit(), SeededGp(gp)))
report = run_experiment(cfg, GpModel(gp), out_dir="demo_report")

cols = ["method", "completed", "mse_gt_gate", "mse_q2", "operators_q2", "win_ratio_vs_classic"]
print("  ".join(f"{c:>20}" for c in cols))
for row in report.table():
    print("  ".join(f"{row[c]!s:>20.20}" for c in cols))

names, matrix = report.win_matrix()
print("\nwin ratio (row beats column):")
for name, line in zip(names, matrix):
    print(f"{name:>10}", " ".join(f"{v:6.2f}" for v in line))
