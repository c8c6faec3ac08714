"""End to end on a transaction CSV: filter, decompose, fit, score.

A toy CSV is generated first so the script runs anywhere; point
``CSV`` at a real export with the same columns to use your own data.
"""
import numpy as np

from crosscat.data import RawTransaction, write_transactions_csv
from crosscat.experiments import CaseStudyConfig, run_case_study

CSV = "toy_transactions.csv"

rng = np.random.default_rng(0)
raw = []
for week in range(20):
    for c in range(150):
        pasta = rng.choice(["p1", "p2", "p3"], p=[0.5, 0.3, 0.2])
        items = [("pasta", pasta, 1)]
        # sauce preference follows the pasta bought
        if rng.random() < 0.7:
            sauce = {"p1": "s1", "p2": "s2", "p3": "s3"}[pasta] if rng.random() < 0.6 else rng.choice(["s1", "s2", "s3"])
            items.append(("sauce", sauce, 1))
        raw.append(RawTransaction(week, f"c{c}", tuple(items)))
write_transactions_csv(raw, CSV)

out = run_case_study(CaseStudyConfig(transactions_csv=CSV, cat_A="pasta", cat_B="sauce", out_dir="case_out"))
print(f"co-purchase score CM = {out['cm']:.3f}")
for rep in out["reports"].values():
    print(rep.label, f"LL {rep.ll:.1f}", {k: round(v, 3) for k, v in rep.top_k_hit.items()})
print("SCS (rows: pasta, cols: sauce)")
print(np.round(out["scs"], 3))
