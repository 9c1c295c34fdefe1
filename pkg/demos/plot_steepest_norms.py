"""
Steepest descent under L1, L2 and Linf
======================================

Steepest descent with respect to a norm picks the direction maximizing the
inner product with the negative gradient over that norm's unit ball.  Its
normalized margin tends to the max margin measured in the same norm, which
we compare against a dense grid over the unit sphere.
"""

import os

from implicitbias import OptimizerConfig, make_fig1_dataset, run
from implicitbias.maxmargin import general_norm_margin
from implicitbias.svg import write_plot

out = os.environ.get("DEMO_OUT", ".")
T = int(os.environ.get("DEMO_T", 10**5))
ds = make_fig1_dataset(6, seed=17)

series = []
for norm in ("L1", "L2", "Linf"):
    rec = run(OptimizerConfig(algorithm="steepest", norm=norm, step_rule="inv_sqrt", iterations=T), ds)
    g = general_norm_margin(ds, norm)
    print(f"{norm:>4}: margin at T = {rec['norm_margin'][-1]:.5f}, grid max margin = {g:.5f}")
    ok = rec.t >= 1
    series.append((norm, rec.t[ok], g - rec["norm_margin"][ok], False))

write_plot(os.path.join(out, "steepest_margin_gap.svg"), series, title="margin gap per norm",
           xlabel="t", ylabel="gap", logy=True)
