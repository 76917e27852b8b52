# %% [markdown]
# # First and second variations
#
# Analytic first variations against finite differences along constrained
# paths in C1(g), then the Gram matrix of W3'' on the three soliton types.

# %%
from __future__ import annotations

import numpy as np

from wcurv import functionals as F
from wcurv import geometry as G
from wcurv import variations as V
from wcurv.bases import fourier_fields
from wcurv.tensorfield import GridSpec

# %% [markdown]
# ## Analytic vs finite-difference first variation

# %%
grid = GridSpec((32, 32), (2 * np.pi, 2 * np.pi))
rng = np.random.default_rng(3)
md = F.normalize_to_C1(
    G.conformal_torus(grid, G.trig_field(grid, amplitude=0.05, rng=rng), G.trig_field(grid, amplitude=0.3, rng=rng), tau=0.8)
)
_, fields = fourier_fields(md, 2)
psi = 0.1 * sum(c * f for c, f in zip(rng.normal(size=len(fields)), fields))
d = V.project_tangent(md, psi, 0.25)
exact = V.first_variation_analytic(F.W3, md, d)
fd, err = V.first_variation_fd(F.W3, md, d)
print(f"analytic {exact:+.12f}\nfd       {fd:+.12f}  (error estimate {err:.1e})")

# %% [markdown]
# ## Null spaces of W3''
#
# Gaussian: translations plus the dilation.  Sphere: none.  S^2 x R: the
# translation along R.

# %%
gauss = G.gaussian_soliton(2, 0.5)
rep = V.gram_quadratic_form(F.W3, gauss, V.default_basis(gauss), threads=4)
print("Gaussian null dim", rep.null_dim, " eigenvalues", np.round(rep.eigenvalues, 6))
idx = np.abs(rep.null_vectors).max(axis=1) > 1e-3 * np.abs(rep.null_vectors).max()
print("null space lives on", [lab for lab, keep in zip(rep.labels, idx) if keep])

sphere = G.round_sphere(2)
rep = V.gram_quadratic_form(F.W3, sphere, V.default_basis(sphere))
print("sphere null dim", rep.null_dim, " smallest eigenvalue", rep.min_eig)

# %% [markdown]
# ## The stability lower bound
#
# At a soliton W3'' is bounded below by an explicit quadratic expression,
# with equality on Gaussians.

# %%
for dirn in V.default_basis(gauss)[:6]:
    q = V.second_variation_fd(F.W3, gauss, dirn)[0]
    print(f"{dirn.label:9s} W3'' = {q:+.8f}   bound = {V.stability_bound_rhs(F.W3, gauss, dirn):+.8f}")
