"""Pointwise exterior algebra on an oriented 7-dimensional inner-product space.

A :class:`KForm` stores one float per strictly increasing multi-index,
in lexicographic order; a degree-k form therefore has C(7, k)
components.  Vectors and 1-form component arrays are plain numpy arrays
of length 7.  The orientation is fixed by declaring the coordinate
basis positively oriented (epsilon_{1...7} = +1), and the volume form of
a metric g is sqrt(det g) e^{1...7}.

Sign conventions follow from the definitions:

* ``wedge`` is the graded-commutative product on canonical components;
* ``hodge`` satisfies b ^ hodge(a) = inner(b, a) * vol for all b of the
  same degree as a, and is an involution in dimension 7;
* ``interior`` contracts a vector into the first slot.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _kernels as kn
from . import _tables as tb
from .errors import FormDegreeError

DIM = tb.DIM

__all__ = [
    "DIM",
    "KForm",
    "Metric",
    "num_components",
    "wedge",
    "interior",
    "hodge",
    "inner",
    "norm",
    "sharp",
    "flat",
    "volume_form",
]


def num_components(degree: int) -> int:
    """C(7, k), the canonical component count of a degree-k form."""
    if not 0 <= degree <= DIM:
        raise FormDegreeError(f"degree must be 0..7, got {degree}")
    return tb.NCOMP[degree]


class KForm:
    """An alternating k-form with canonical component storage.

    Parameters
    ----------
    degree : int
        Form degree, 0..7.
    comps : array_like, optional
        C(7, degree) canonical components; zeros if omitted.
    """

    __slots__ = ("degree", "comps")

    def __init__(self, degree: int, comps=None):
        n = num_components(degree)
        self.degree = int(degree)
        if comps is None:
            self.comps = np.zeros(n)
        else:
            c = np.asarray(comps, dtype=np.float64)
            if c.shape != (n,):
                raise FormDegreeError(
                    f"degree {degree} needs {n} components, got shape {c.shape}"
                )
            self.comps = c.copy()

    @classmethod
    def from_dict(cls, degree: int, entries: dict) -> "KForm":
        """Build from {multi-index tuple: value} with 0-based indices."""
        out = cls(degree)
        for idx, val in entries.items():
            out = out.with_component(idx, val)
        return out

    def with_component(self, idx, value: float) -> "KForm":
        """Copy with the component at (possibly unsorted) idx set."""
        idx = tuple(idx)
        sign = tb.perm_sign(idx)
        if sign == 0:
            raise FormDegreeError(f"repeated index in {idx}")
        out = KForm(self.degree, self.comps)
        out.comps[tb.POS[self.degree][tuple(sorted(idx))]] = sign * value
        return out

    def component(self, *idx) -> float:
        """Component at an arbitrary index order (sign-resolved); 0 on repeats."""
        if len(idx) != self.degree:
            raise FormDegreeError(
                f"expected {self.degree} indices, got {len(idx)}"
            )
        if self.degree == 0:
            return float(self.comps[0])
        sign = tb.perm_sign(idx)
        if sign == 0:
            return 0.0
        return sign * float(self.comps[tb.POS[self.degree][tuple(sorted(idx))]])

    def copy(self) -> "KForm":
        return KForm(self.degree, self.comps)

    def __add__(self, other: "KForm") -> "KForm":
        if self.degree != other.degree:
            raise FormDegreeError("cannot add forms of different degree")
        return KForm(self.degree, self.comps + other.comps)

    def __sub__(self, other: "KForm") -> "KForm":
        if self.degree != other.degree:
            raise FormDegreeError("cannot subtract forms of different degree")
        return KForm(self.degree, self.comps - other.comps)

    def __mul__(self, scalar: float) -> "KForm":
        return KForm(self.degree, self.comps * float(scalar))

    __rmul__ = __mul__

    def __neg__(self) -> "KForm":
        return KForm(self.degree, -self.comps)

    def __repr__(self) -> str:
        return f"KForm(degree={self.degree}, comps={self.comps!r})"


@dataclass(frozen=True)
class Metric:
    """A positive-definite symmetric bilinear form with cached inverse.

    Construct through :meth:`from_matrix`, which validates symmetry and
    positivity and fills the derived fields.
    """

    g: np.ndarray
    g_inv: np.ndarray = field(repr=False)
    sqrt_det: float

    @classmethod
    def from_matrix(cls, g) -> "Metric":
        g = np.asarray(g, dtype=np.float64)
        if g.shape != (DIM, DIM):
            raise ValueError(f"metric must be 7x7, got {g.shape}")
        if not np.allclose(g, g.T, rtol=0.0, atol=1e-12 * max(1.0, abs(g).max())):
            raise ValueError("metric matrix is not symmetric")
        g = (g + g.T) / 2.0
        eigs = np.linalg.eigvalsh(g)
        if eigs[0] <= 0.0:
            raise ValueError(f"metric is not positive definite (min eig {eigs[0]:g})")
        det = float(np.linalg.det(g))
        return cls(g=g, g_inv=np.linalg.inv(g), sqrt_det=float(np.sqrt(det)))

    @classmethod
    def identity(cls) -> "Metric":
        eye = np.eye(DIM)
        return cls(g=eye, g_inv=eye.copy(), sqrt_det=1.0)


def wedge(a: KForm, b: KForm) -> KForm:
    """Exterior product a ^ b; degrees must sum to at most 7."""
    comps = kn.wedge_comps(a.degree, b.degree, a.comps, b.comps)
    return KForm(a.degree + b.degree, comps)


def interior(v, a: KForm) -> KForm:
    """Contraction iota_v a of a vector into the first slot of a."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (DIM,):
        raise ValueError(f"vector must have 7 components, got {v.shape}")
    return KForm(a.degree - 1, kn.interior_comps(a.degree, v, a.comps))


def hodge(a: KForm, m: Metric) -> KForm:
    """Hodge star of a with respect to m; maps degree k to 7-k."""
    comps = kn.star_comps(a.degree, a.comps, m.g, m.g_inv, m.sqrt_det)
    return KForm(DIM - a.degree, comps)


def inner(a: KForm, b: KForm, m: Metric) -> float:
    """Metric inner product <a, b>_m of two forms of equal degree."""
    if a.degree != b.degree:
        raise FormDegreeError("inner product needs equal degrees")
    return float(kn.inner_comps(a.degree, a.comps, b.comps, m.g, m.g_inv, m.sqrt_det))


def norm(a: KForm, m: Metric) -> float:
    """Metric norm sqrt(<a, a>_m)."""
    return float(np.sqrt(max(inner(a, a, m), 0.0)))


def sharp(alpha: KForm, m: Metric) -> np.ndarray:
    """Vector obtained by raising the index of a 1-form."""
    if alpha.degree != 1:
        raise FormDegreeError("sharp expects a 1-form")
    return kn.sharp_comps(alpha.comps, m.g_inv)


def flat(v, m: Metric) -> KForm:
    """1-form obtained by lowering the index of a vector."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape != (DIM,):
        raise ValueError(f"vector must have 7 components, got {v.shape}")
    return KForm(1, kn.flat_comps(v, m.g))


def volume_form(m: Metric) -> KForm:
    """Volume form sqrt(det g) e^{1...7} of the metric."""
    return KForm(DIM, np.array([m.sqrt_det]))
