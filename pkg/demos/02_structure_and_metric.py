# The nonlinear map from a positive 3-form to a Riemannian metric,
# and the linearizations used by the flow solvers.
import numpy as np

from g2lab.forms import KForm
from g2lab.g2 import (
    G2Structure,
    inverse_linearized_psi,
    is_positive,
    linearized_metric,
    linearized_psi,
    metric_from_phi,
    standard_phi,
)

phi0 = standard_phi()
m0 = metric_from_phi(phi0)
print("metric of the standard form (should be the identity):")
print(np.round(m0.g, 12))

# Scaling phi by mu scales the metric by mu^(2/3).
mu = 1.7
m_scaled = metric_from_phi(KForm(3, mu * phi0.comps))
print("scaling defect:", np.abs(m_scaled.g - mu ** (2.0 / 3.0) * m0.g).max())

# Positivity is an open condition; the margin is the smallest eigenvalue
# of the intermediate bilinear form.
flag, margin = is_positive(phi0)
print(f"standard form positive: {flag}, margin {margin:.6f}")
flag, margin = is_positive(KForm(3, -phi0.comps))
print(f"negated form positive: {flag}, margin {margin:.6f}")

# A random nearby positive form and the two linearizations at it.
rng = np.random.default_rng(3)
phi = KForm(3, phi0.comps + rng.uniform(-0.1, 0.1, 35))
struct = G2Structure.from_phi(phi)
eta = KForm(3, rng.standard_normal(35))

dg = linearized_metric(eta, struct)
print("metric derivative is symmetric:", np.abs(dg - dg.T).max())

chi = linearized_psi(eta, struct, method="algebraic")
chi_fd = linearized_psi(eta, struct, method="fd")
print("algebraic vs finite-difference dual derivative:",
      np.abs(chi.comps - chi_fd.comps).max())

back = inverse_linearized_psi(chi, struct)
print("derivative roundtrip defect:", np.abs(back.comps - eta.comps).max())

# Radial directions: D(metric)[phi] = (2/3) id and D(dual)[phi] = (4/3) psi.
print("radial metric derivative defect:",
      np.abs(linearized_metric(phi0, G2Structure.from_phi(phi0)) -
             (2.0 / 3.0) * np.eye(7)).max())
s0 = G2Structure.from_phi(phi0)
print("radial dual derivative defect:",
      np.abs(linearized_psi(phi0, s0, method="algebraic").comps -
             (4.0 / 3.0) * s0.psi.comps).max())
