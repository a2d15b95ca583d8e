# %%
# Doubled pendulum L = v^2/2 + (1 - cos 4 pi x): two fixed points, so at
# c = 0 the Mane set contains heteroclinics in both directions and is not
# a graph, while the Aubry set is.
import numpy as np

from weakkam.lagrangian import doubled_pendulum
from weakkam.sets import aubry_set, check_connectivity, check_graph_property, kernel_tables, mane_set

model = doubled_pendulum()
t = kernel_tables(model, 0.0)
A = aubry_set(model, 0.0, 0.0, tables=t)
N = mane_set(model, 0.0, 0.0, tables=t)
print("Aubry projection:", np.round(A.projection(), 4))
print("Mane columns covered:", check_connectivity(N)["covered"])
print("graph property, Aubry:", check_graph_property(A)["pass"], " Mane:", check_graph_property(N)["pass"])
