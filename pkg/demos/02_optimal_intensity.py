# %% [markdown]
# # The closed-form optimal employment share
#
# At a given state the control objective is a smooth function of `e` with
# the shape `const - B e + (C / theta) e**theta`. When C > 0 its minimiser is
# `(B / C) ** (1 / (theta - 1))`, clipped to [0, 1]. Here we check that the
# formula agrees with a brute-force minimiser and see what happens when C
# turns negative.

# %%
from lockdown.control import (ControlContext, b_tilde_c_tilde, df_tilde_de, e_star_closed_form,
                              e_star_numeric)
from lockdown.model import GroupParams, GroupState

params = GroupParams(beta2=0.8, theta_exp=2.5, theta_weight=0.002, varkappa=0.15, r_sat=0.05,
                     kappa0=0.05, kappa1=0.5, gamma_fatigue=0.3)
state = GroupState(z=0.4, s_comp=20.0, i_comp=300.0, r_comp=50.0, w_prob=0.6, omega=0.3, time=2.0)
ctx = ControlContext(state, p_attach=0.3, omega_partner=-0.2, params=params)

bc = b_tilde_c_tilde(ctx, 0.5)
closed, numeric = e_star_closed_form(ctx), e_star_numeric(ctx)
print(f"B = {bc.b_tilde:.6f}, C = {bc.c_tilde:.6f}")
print(f"closed form  e* = {closed.e:.12f}")
print(f"grid+golden  e* = {numeric.e:.12f}")
print(f"slope of the objective at e*: {df_tilde_de(ctx, closed.e):.2e}")

# %% [markdown]
# C carries the factor (1/S - 1/I), so it is negative whenever susceptibles
# outnumber infectives. The power formula then has no minimum. The solver
# flags the case and falls back to the numerical minimiser.

# %%
early = ControlContext(GroupState(z=0.4, s_comp=900.0, i_comp=50.0, r_comp=50.0, w_prob=0.6, time=2.0),
                       p_attach=0.3, params=params)
res = e_star_closed_form(early)
print(f"C = {res.c_tilde:.4f}, e* = {res.e}, flags = {res.flags}")

# %% [markdown]
# The two B forms: "derived" comes from differentiating the objective and is
# the default. "displayed" adds the full opinion drift and the diffusion
# correction, which makes B depend on e, so it needs a damped fixed-point
# iteration. It lands on a different point.

# %%
from lockdown.control import ControlOptions

shown = e_star_closed_form(ctx, ControlOptions(b_tilde_form="displayed"))
print(f"displayed-form e* = {shown.e:.6f} after {shown.iterations} iterations; "
      f"objective slope there {df_tilde_de(ctx, shown.e):+.3f}")
