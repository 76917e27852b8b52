# %% [markdown]
# # The weighted Laplacian and its first eigenvalue
#
# If Ric + Hess phi >= g/(2 tau) then lambda_1(-Delta_phi) >= 1/(2 tau).
# Rayleigh-Ritz on Hermite and harmonic bases.

# %%
from __future__ import annotations

from wcurv import bases
from wcurv import geometry as G
from wcurv import spectrum as S

# %%
for n in (1, 2, 3):
    md = G.gaussian_soliton(n, 0.5, order=10)
    labels, fields = bases.hermite_fields(md.chart.coords["x"], md.tau, 3)
    rep = S.obata_check(md, fields, labels=labels)
    print(f"Gaussian n={n}: lambda1 = {rep['lambda1']:.12f}  bound = {rep['bound']}  multiplicity k = {rep['k']}")

# %% [markdown]
# The round sphere meets the hypothesis with a strict inequality: its first
# eigenvalue 2 sits above 1/(2 tau) = 1.

# %%
sphere = G.round_sphere(2)
labels, fields = bases.harmonic_fields(sphere.chart.coords["embedding"], 2)
print(S.obata_check(sphere, fields, labels=labels))

# %% [markdown]
# A torus can never satisfy the hypothesis (phi has a maximum), so the check
# is skipped with a reason.

# %%
from wcurv.tensorfield import GridSpec  # noqa: E402

grid = GridSpec((16, 16), (6.283185307179586,) * 2)
torus = G.flat_torus(grid, G.trig_field(grid, rng=0), tau=0.5)
print(S.obata_check(torus, bases.fourier_fields(torus, 1)[1]))
