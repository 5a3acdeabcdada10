"""Check the dynamic-programming value against simulated innings.

The value-iteration answer is an expectation over innings of unbounded
length.  Rolling out a million innings under the equilibrium policies gives
an independent estimate with a standard error, and the two should agree
within a few standard errors.  The rollout is split into fixed blocks of
innings with their own random streams, so the answer does not depend on
the number of worker threads.
"""

import time

from pickoff import simulate as sm
from pickoff import solver as so
from pickoff import synthetic as syn

k = syn.ground_truth_kernel(syn.synthetic_model_set())
V, rep = so.value_iteration(k)
runner, pitcher = so.extract_equilibrium_policies(V, k)
print(f"value iteration: {V[so.START_INDEX]:.5f} after {rep.iterations} sweeps "
      f"(error bound {rep.error_bound:.1e}, residual decay rate {rep.rate:.3f})")

for threads in (1, 4):
    t0 = time.perf_counter()
    res = sm.monte_carlo_value(k, runner, pitcher, 1_000_000, seed=11, threads=threads)
    z = (res.mean - V[so.START_INDEX]) / res.se
    print(f"{threads} thread(s): {res.mean:.5f} +/- {res.se:.5f}, z = {z:+.2f}, "
          f"longest inning {res.max_plays} plays, {time.perf_counter() - t0:.1f} s")
