"""How much longer should the lead get after each disengagement?

After two disengagements a third one that fails to retire the runner is a
balk, so pitchers rarely try, and the synthetic coefficients make pickoff
attempts rarer after each disengagement.  A runner facing that behaviour
should lengthen the lead as disengagements accumulate.  This script solves
the one-player problem (the runner optimises against observed pitcher
behaviour) and the two-player game, and reports the lead increments.
"""

import numpy as np

from pickoff import report as rp
from pickoff import solver as so
from pickoff import states as st
from pickoff import synthetic as syn

ms = syn.synthetic_model_set()
fixed = ms.po_attempt.fixed
print("pickoff-attempt log-odds shift after one and two disengagements: "
      f"{fixed['diseng_1']:+.2f}, {fixed['diseng_2']:+.2f}\n")

V1, runner1, _ = so.solve_one_player(syn.ground_truth_kernel(ms, mode="one-player"))
rep1 = rp.two_foot_rule_report(runner1)
print("one-player problem")
print(rep1.format())

k2 = syn.ground_truth_kernel(ms)
V2, _ = so.value_iteration(k2)
runner2, pitcher2 = so.extract_equilibrium_policies(V2, k2)
rep2 = rp.two_foot_rule_report(runner2)
print("two-player game")
print(f"mean increments d=0->1, d=1->2: {rep2.mean_increments[0]:+.2f}, {rep2.mean_increments[1]:+.2f} ft")
print(f"non-decreasing in every cell: {'yes' if rep2.non_decreasing else 'no'}")

# In the game the pitcher's best reply at the runner's chosen lead tells us
# where the threat of a pickoff keeps the runner honest.
chosen = pitcher2.action_idx[np.arange(len(runner2.lead_idx)), runner2.lead_idx]
d = np.array([st.state_of(int(s)).disengagements for s in runner2.agency])
pickoff = k2.pitcher_actions.index(st.PitcherAction.PICKOFF)
for j in range(3):
    share = np.mean(chosen[d == j] == pickoff)
    print(f"d={j}: pitcher attempts a pickoff at the equilibrium lead in {share:.0%} of states")
