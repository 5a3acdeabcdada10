"""From play-by-play to equilibrium leads in four steps.

1. simulate a synthetic season from known outcome models,
2. estimate a transition kernel from those plays,
3. solve the max-min game with value iteration,
4. compare the estimate with the kernel the plays were drawn from.

Run with ``python3 demos/01_quickstart_pipeline.py``; it takes under a minute.
"""

import time

import numpy as np

from pickoff import builder as bd
from pickoff import report as rp
from pickoff import solver as so
from pickoff import synthetic as syn

INNINGS = 50_000

ms = syn.synthetic_model_set()
t0 = time.perf_counter()
plays = syn.generate_synthetic_plays(syn.GeneratorConfig(innings=INNINGS, seed=1, model_set=ms))
print(f"generated {len(plays)} plays from {INNINGS} innings in {time.perf_counter() - t0:.1f} s")

# Estimating the kernel pools the observed transitions by how the state changed
# and plugs the lead-dependent outcome models in at the runner-agency states.
t0 = time.perf_counter()
k_est = bd.build_kernel(plays, ms)
print(f"estimated a {k_est.n_states}-state kernel with {k_est.n_leads} leads "
      f"in {time.perf_counter() - t0:.1f} s")
print("row sources:", k_est.metadata["fallback_levels"])
print(f"halting check: rho = {k_est.halting.rho:.2e} over m = {k_est.halting.m} steps\n")

est = so.solve(k_est, "vi")
truth = so.solve(syn.ground_truth_kernel(ms), "vi")
print(f"start-of-inning value, estimated kernel:    {est.start_value():.4f} runs")
print(f"start-of-inning value, generating kernel:   {truth.start_value():.4f} runs")
diff = est.runner.lead_values() - truth.runner.lead_values()
print(f"equilibrium leads differ by {np.abs(diff).mean():.2f} ft on average "
      f"(largest {np.abs(diff).max():.1f} ft)\n")

header, rows = rp.table_by_count(est.runner, outs=0)
print(rp.format_table(header, rows, title="estimated equilibrium lead (ft), nobody out"))
