"""Equilibrium leads for strong and weak batteries and runners.

The outcome models carry random effects for pitchers, catchers and runners.
Pinning those effects at a skill percentile and re-solving the game shows how
much the optimal lead depends on who is on the field.
"""

import numpy as np

from pickoff import builder as bd
from pickoff import outcomes as om
from pickoff import report as rp
from pickoff import solver as so
from pickoff import synthetic as syn

ms = syn.synthetic_model_set()
base, comps = syn.world_rows()

print("start value and mean lead (ft) at 0-0, nobody out, by disengagements\n")
print(f"{'battery q':>9}  {'runner q':>8}  {'value':>6}  {'d=0':>5}  {'d=1':>5}  {'d=2':>5}")
for qb in (0.1, 0.5, 0.9):
    for qr in (0.1, 0.5, 0.9):
        effects = om.merge_effects(om.percentile_profile(ms, "battery", qb),
                                   om.percentile_profile(ms, "runner", qr))
        k = bd.assemble_from_rows(base, comps, ms, om.PlayContext(effects=effects))
        sol = so.solve(k, "vi")
        leads = rp.lead_grid(sol.runner)[0, 0, :, :].mean(axis=1)
        print(f"{qb:>9.1f}  {qr:>8.1f}  {sol.start_value():>6.4f}  "
              + "  ".join(f"{x:>5.1f}" for x in leads))

print("\nRows are (battery, runner) skill percentiles; higher is better for that side.")
print(f"lead grid spans {np.min(k.leads):.1f} to {np.max(k.leads):.1f} ft")
