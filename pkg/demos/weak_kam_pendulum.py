# %%
# Weak KAM solution of the pendulum at c = 0 by Lax-Oleinik iteration,
# compared with the separatrix action, and one calibrated backward orbit.
import numpy as np

from weakkam import pendulum as exact
from weakkam.lagrangian import OneForm, builtin_model
from weakkam.weak_kam import extract_calibrated_orbit, solve_weak_kam, subsolution_residual

model = builtin_model("pendulum")
form = OneForm(np.zeros(1))
sol = solve_weak_kam(model, form)
print(f"alpha estimate {sol.alpha_estimate:.2e}, residual {sol.residual:.2e}, sweeps {sol.sweeps}")
# %%
x = sol.u.x
err = np.max(np.abs(sol.u.values - [exact.weak_kam_zero_class(y) for y in x]))
print(f"max |u - u_exact| = {err:.2e}")
res, _, kink = subsolution_residual(model, form, sol.u, sol.alpha_estimate)
print(f"subsolution residual off kinks {res:.2e}; kinks at x = {x[kink]}")
# %%
co = extract_calibrated_orbit(model, form, sol, 0.25)
print(f"backward orbit from 0.25 reaches {co.orbit.x[0, 0]:.4f}; calibration defect {co.max_defect_rate:.2e}")
