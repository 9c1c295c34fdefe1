"""
Margin, distance and angle gaps against their predicted constants
=================================================================

On the two-point set {(1, 0), (0, 2)} the auxiliary vector a is not parallel to
w_hat, so all three gap constants are nonzero.  Multiplying each gap by the
right power of log t should give a curve that levels off near its constant.
"""

import os

import numpy as np

from implicitbias import (OptimizerConfig, fit_rate, make_appendix_d_dataset, run,
                          solve_hard_margin, table1_constants)
from implicitbias.svg import write_plot

out = os.environ.get("DEMO_OUT", ".")
T = int(os.environ.get("DEMO_T", 10**5))

ds = make_appendix_d_dataset(rescaled=True)
sol = solve_hard_margin(ds)
c = table1_constants(sol)
print(f"C1={c.C1:.5f} C2={c.C2:.5f} C3={c.C3:.5f}")

rec = run(OptimizerConfig(iterations=T), ds, sol)
t = rec.t
late = t >= 10

# %%
# Scaled gaps.  The ratio to the constant drifts slowly toward 1; the
# correction terms are only a power of log t smaller.

series = []
for col, C, p in (("margin_gap", c.C3, 1), ("dist_gap", c.C1, 1), ("angle_gap", c.C2, 2)):
    r = rec[col][late] * np.log(t[late]) ** p / C
    print(f"{col}: scaled/C at T = {r[-1]:.3f}")
    series.append((col, t[late], r, False))
write_plot(os.path.join(out, "rate_constants.svg"), series, title="gap * log^p t / C",
           xlabel="t", ylabel="ratio")

# %%
# Per-decade least-squares constants.

fit = fit_rate(t[late], rec["dist_gap"][late], "inv_log")
print("dist_gap constants by decade (newest first):", np.round(fit.constants, 4))
