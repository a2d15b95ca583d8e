# %%
# Mather, Aubry and Mane sets of the pendulum at three classes: inside the
# flat, at its edge and beyond it.
import numpy as np

from weakkam import pendulum as exact
from weakkam.duality import LPGrid
from weakkam.sets import aubry_set, check_inclusions, directed_hausdorff, kernel_tables, mane_set, mather_set
from weakkam.lagrangian import builtin_model

model = builtin_model("pendulum")
# %%
for c in (0.0, 4 / np.pi, 2.0):
    a = exact.alpha(c)
    t = kernel_tables(model, c)
    M = mather_set(model, c, LPGrid(64, 257, 4.0, 32))
    A = aubry_set(model, c, a, tables=t)
    N = mane_set(model, c, a, tables=t)
    rep = check_inclusions(M, A, N, a)
    print(f"c = {c:.4f}: |M| = {len(M)}, |A| = {len(A)}, |N| = {len(N)}, inclusions {rep['pass']}")
    print(f"    Aubry points away from Mather: {directed_hausdorff(A, M):.3f}")
