"""Three runner strategies, ordered by how many runs they produce.

* behavioural: the leads the synthetic runners actually take,
* two-player: the lead that is best against a pitcher who adapts to it,
* one-player: the best lead against a pitcher who keeps behaving as observed.

The one-player runner exploits a pitcher who does not react, so its value
bounds the game value from above; the observed behaviour cannot beat the
max-min lead, so it bounds the game value from below.
"""

from pickoff import solver as so
from pickoff import synthetic as syn

S = so.START_INDEX

ms = syn.synthetic_model_set()
cfg = syn.GeneratorConfig(model_set=ms)
k1 = syn.ground_truth_kernel(ms, mode="one-player")
k2 = syn.ground_truth_kernel(ms)

Vb = so.evaluate_mixed(k1, syn.behavioural_lead_index(cfg), None)
V2 = so.solve(k2, "pi").values
V1 = so.solve_one_player(k1)[0]

print(f"behavioural leads:   {Vb[S]:.4f} runs per inning")
print(f"two-player game:     {V2[S]:.4f}")
print(f"one-player problem:  {V1[S]:.4f}")
print(f"\nequilibrium gain over behaviour: {V2[S] - Vb[S]:+.4f} runs per inning")
