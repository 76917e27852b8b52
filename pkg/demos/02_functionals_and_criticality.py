# %% [markdown]
# # W3 and V3: evaluation, scale invariance, criticality
#
# W3 = int (tau^3 v3 + tau v1 / 8) dnu.  Shrinking solitons are critical;
# a generic torus density is not.

# %%
from __future__ import annotations

import math

from wcurv import functionals as F
from wcurv import geometry as G
from wcurv.tensorfield import GridSpec

# %%
gauss = G.gaussian_soliton(2, 0.5)
sphere = G.round_sphere(2)
print("W3(Gaussian) =", F.evaluate(F.W3, gauss))
print("W3(S^2)      =", F.evaluate(F.W3, sphere))
s = math.log(2) - 1
print("closed form  =", s**3 / 48 + s / 16)

# %% [markdown]
# ## Scale invariance
#
# Replacing (g, tau) by (c g, c tau) leaves W3 unchanged.

# %%
grid = GridSpec((32, 32), (2 * math.pi, 2 * math.pi))
torus = F.normalize_to_C1(
    G.conformal_torus(grid, G.trig_field(grid, amplitude=0.05, rng=1), G.trig_field(grid, amplitude=0.3, rng=2), tau=0.7)
)
for md, name in ((sphere, "sphere"), (torus, "torus")):
    base = F.evaluate(F.W3, md)
    print(name, [F.evaluate(F.W3, md.scaled(c)) - base for c in (0.25, 0.5, 2.0, 4.0)])

# %% [markdown]
# ## Euler-Lagrange residual
#
# Critical points make v3 - v2/(2 tau) + v1/(8 tau^2) constant.

# %%
for md, name in ((gauss, "gaussian"), (sphere, "sphere"), (torus, "torus")):
    rep = F.el_residual(md)
    print(f"{name:9s} c = {rep.c:+.6f}   sup deviation = {rep.sup:.2e}")
