# %% [markdown]
# # Opinions, tolerance and how far apart two groups are
#
# Each group's opinion on vaccination drifts toward its partner's when they
# interact. The interaction probability decides how much a group tolerates
# contact. The total-variation distance measures how different two groups'
# interaction patterns are.

# %%
from lockdown import opinion as op
from lockdown.model import GroupParams

params = GroupParams(varkappa=0.3, compromise="linear", sigma8=0.05)
for omega_k, omega_l in ((0.5, -0.5), (0.9, -0.5), (0.2, 0.2)):
    step = op.opinion_pair_drift_diffusion(omega_k, omega_l, 1.0, 1.0, params)
    print(f"opinions ({omega_k:+.1f}, {omega_l:+.1f}) -> drifts ({step.drift_k:+.3f}, {step.drift_l:+.3f})")

# %% [markdown]
# Extreme opinions move less because the compromise factor is 1 - |omega|.
#
# The tolerance rate combines the interaction probability with the posterior
# that a partner is infected and a cost distribution for interactions.

# %%
for pr in (0.0, 0.25, 0.5, 0.75, 1.0):
    post = op.posterior_p(pr, 0.3)
    uni = op.tolerance_rate(pr, op.CostDistribution(), p0=0.3)
    beta = op.tolerance_rate(pr, op.CostDistribution("beta", a=2.0, b=5.0), p0=0.3)
    print(f"Pr={pr:.2f}  posterior={post:.3f}  tolerance uniform={uni:.3f}  beta(2,5)={beta:.3f}")

# %%
mu = op.DiscreteMeasure(("home", "work", "school"), (0.5, 0.3, 0.2))
nu = op.DiscreteMeasure(("home", "work", "shops"), (0.4, 0.2, 0.4))
forms = op.tv_forms(mu, nu)
print(forms, "largest disagreement:", forms.max_discrepancy)
