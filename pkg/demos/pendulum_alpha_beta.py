# %%
# Mather's alpha and beta for the pendulum L = v^2/2 + (1 - cos 2 pi x).
# alpha vanishes on a flat piece around c = 0; beta has a corner at h = 0.
import numpy as np

from weakkam import pendulum as exact
from weakkam.duality import AlphaTable, beta_search, flat_edge
from weakkam.lagrangian import builtin_model

model = builtin_model("pendulum")
tab = AlphaTable(model, "critical-value")
# %%
for c in np.arange(0.0, 3.01, 0.5):
    print(f"alpha({c:.1f}) = {tab(c):.6f}   closed form {exact.alpha(c):.6f}")
# %%
edge = flat_edge(tab, 1.0)
print(f"flat ends at c = {edge:.6f}; separatrix class {exact.flat_edge():.6f}")
# %%
for h in (0.25, 0.5, 1.0):
    b = beta_search(tab, h)
    print(f"beta({h}) = {b.value:.6f} (supporting c = {b.support_c[0]:.3f}), closed form {exact.beta(h):.6f}")
