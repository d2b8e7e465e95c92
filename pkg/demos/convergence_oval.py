"""Self-referenced convergence of the oval relaxing towards a circle.

A small version of the study: levels 2-4 against a level-5 reference with
tau proportional to h.  Pass larger levels for sharper estimates (the
acceptance suite uses 4-6 against 7).
"""
import sys

from chsolve.convergence import convergence_study
from chsolve.presets import get_preset

levels = tuple(int(s) for s in sys.argv[1:]) or (2, 3, 4, 5)
*study, reference = levels
eps = 0.03
res = convergence_study(get_preset("oval", eps), eps, levels=study, reference_level=reference)
for lev, h, e, l2 in zip(res.levels, res.h, res.errors, res.l2_errors):
    print(f"h = 1/{round(1 / h):<4d} H1 error {e:.4e}   L2 error {l2:.4e}")
print("observed H1 orders:", ", ".join(f"{o:.2f}" for o in res.orders))
