# Pointwise exterior algebra on a 7-dimensional vector space:
# wedge products, the Hodge star, and interior products.
from math import comb

import numpy as np

from g2lab.forms import KForm, Metric, hodge, inner, interior, volume_form, wedge

rng = np.random.default_rng(0)

alpha = KForm(1, rng.standard_normal(7))
beta = KForm(2, rng.standard_normal(21))

# Graded symmetry: alpha ^ beta = (-1)^{1*2} beta ^ alpha.
left = wedge(alpha, beta)
right = wedge(beta, alpha)
print("wedge graded symmetry defect:", np.abs(left.comps - right.comps).max())

# The Hodge star squares to (-1)^{k(7-k)} on k-forms.
m = Metric.identity()
for k in range(8):
    f = KForm(k, rng.standard_normal(comb(7, k)))
    sign = (-1) ** (k * (7 - k))
    defect = np.abs(hodge(hodge(f, m), m).comps - sign * f.comps).max()
    print(f"star(star) on degree {k}: defect {defect:.3e}")

# Interior product is an antiderivation:
# i_v(alpha ^ beta) = (i_v alpha) beta - alpha ^ (i_v beta) for a 1-form alpha.
v = rng.standard_normal(7)
lhs = interior(v, wedge(alpha, beta))
iva = float(interior(v, alpha).comps[0])
rhs = iva * beta.comps - wedge(alpha, interior(v, beta)).comps
print("interior antiderivation defect:", np.abs(lhs.comps - rhs).max())

# <a, b> vol = a ^ *b ties the inner product to the wedge pairing.
gamma = KForm(2, rng.standard_normal(21))
pairing = wedge(beta, hodge(gamma, m)).comps[0] / volume_form(m).comps[0]
print("inner vs wedge pairing defect:", abs(pairing - inner(beta, gamma, m)))
