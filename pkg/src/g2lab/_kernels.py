"""Vectorized exterior-algebra kernels.

Every function operates on arrays whose *last* axis holds canonical
k-form components (see ``_tables``); any leading axes (grid sites, probe
batches) broadcast through unchanged.  Metrics are passed as matrices of
shape ``(..., 7, 7)``; scalar fields like sqrt(det g) as ``(...,)``.

The Hodge star avoids ever materializing full tensors above degree 3:
for k >= 4 it uses the inverse of the star on the complementary degree,
which only needs index lowering on degree 7-k <= 3.
"""
from __future__ import annotations

import numpy as np

from . import _tables as tb
from .errors import FormDegreeError

DIM = tb.DIM
NCOMP = tb.NCOMP


def wedge_comps(j: int, k: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Components of a ^ b for degrees (j, k); raises past degree 7."""
    if j + k > DIM:
        raise FormDegreeError(f"wedge degree {j}+{k} exceeds 7")
    if j == 0:
        return a[..., 0, None] * b
    if k == 0:
        return a * b[..., 0, None]
    ai, bi, sg = tb.wedge_table(j, k)
    return ((a[..., ai] * sg) * b[..., bi]).sum(axis=-1)


def interior_comps(k: int, v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Components of iota_v a for a of degree k >= 1."""
    if k < 1:
        raise FormDegreeError("interior product needs degree >= 1")
    vi, ai, sg = tb.interior_table(k)
    return ((v[..., vi] * sg) * a[..., ai]).sum(axis=-1)


def raise_comps(k: int, a: np.ndarray, m: np.ndarray) -> np.ndarray:
    """Apply the k-th exterior power of the matrix m to canonical components.

    With m = g^{-1} this raises all k indices of a.  Implemented by
    scattering to the full 7^k tensor and contracting one slot at a time
    with batched matmul; restricted to k <= 3 (higher degrees go through
    the complement in :func:`star_comps`).
    """
    if k == 0:
        return a.copy()
    if k == 1:
        return np.einsum("...ij,...j->...i", m, a)
    if k > 3:
        raise FormDegreeError("raise_comps only supports degrees 0..3")
    flat_pos, src, sgn, sorted_flat = tb.full_tensor_table(k)
    lead = np.broadcast_shapes(a.shape[:-1], m.shape[:-2])
    nlead = len(lead)
    a = np.broadcast_to(a, lead + a.shape[-1:])
    m = np.broadcast_to(m, lead + (DIM, DIM))
    full = np.zeros(lead + (DIM**k,))
    full[..., flat_pos] = a[..., src] * sgn
    t = full.reshape(lead + (DIM,) * k)
    for _ in range(k):
        t = np.matmul(m, t.reshape(lead + (DIM, DIM ** (k - 1))))
        # cycle the freshly contracted slot to the back
        t = np.moveaxis(t.reshape(lead + (DIM,) * k), nlead, nlead + k - 1)
    return np.ascontiguousarray(t.reshape(lead + (DIM**k,))[..., sorted_flat])


def star_comps(
    k: int,
    a: np.ndarray,
    g: np.ndarray,
    ginv: np.ndarray,
    sqrt_det: np.ndarray,
) -> np.ndarray:
    """Hodge star of a k-form, any degree 0..7."""
    sd = np.asarray(sqrt_det)[..., None]
    if k == 0:
        src, sgn = tb.complement_gather(DIM)
        return sd * (a[..., src] * sgn)
    if k <= 3:
        raised = raise_comps(k, a, ginv)
        src, sgn = tb.complement_gather(DIM - k)
        return sd * (raised[..., src] * sgn)
    if k == DIM:
        src, sgn = tb.complement_gather(0)
        return (a[..., src] * sgn) / sd
    if k > DIM:
        raise FormDegreeError(f"bad degree {k}")
    # k in {4, 5, 6}: star is the inverse of the star on degree 7-k,
    # so undo the signed complement and lower indices with g.
    m_deg = DIM - k
    src, sgn = tb.complement_gather(m_deg)
    return raise_comps(m_deg, a[..., src] * sgn, g) / sd


def inner_comps(
    k: int,
    a: np.ndarray,
    b: np.ndarray,
    g: np.ndarray,
    ginv: np.ndarray,
    sqrt_det: np.ndarray,
) -> np.ndarray:
    """Pointwise metric inner product of two k-forms (scalar result)."""
    if k == 0:
        return a[..., 0] * b[..., 0]
    if k <= 3:
        return (raise_comps(k, b, ginv) * a).sum(axis=-1)
    # (a ^ *b) = <a, b> vol;  strip the volume factor.
    sb = star_comps(k, b, g, ginv, sqrt_det)
    top = wedge_comps(k, DIM - k, a, sb)[..., 0]
    return top / np.asarray(sqrt_det)


def sharp_comps(alpha: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """Vector components of a 1-form raised with g^{-1}."""
    return np.einsum("...ij,...j->...i", ginv, alpha)


def flat_comps(v: np.ndarray, g: np.ndarray) -> np.ndarray:
    """1-form components of a vector lowered with g."""
    return np.einsum("...ij,...j->...i", g, v)


def b_matrix_comps(phi: np.ndarray) -> np.ndarray:
    """Bilinear matrix of a 3-form: B_ij = (iota_i phi ^ iota_j phi ^ phi)/6.

    The top-form coefficient convention makes B equal to the
    epsilon-contraction (1/144) phi_iab phi_jcd phi_efg eps^{abcdefg}.
    Returns shape (..., 7, 7); cubic and exactly symmetric in phi.
    """
    iidx, isgn = tb.iota_basis_table()
    Phi = phi[..., iidx] * isgn  # (..., 7, 21)
    csrc, csgn = tb.complement_gather(4)
    phic = phi[..., csrc] * csgn  # (..., 35) top-partner of 4-form comps
    W = tb.wedge22_tensor()  # (35, 21, 21)
    # one large GEMM instead of einsum: this is the hot spot of every
    # metric rebuild during time stepping
    lead = phic.shape[:-1]
    G = (phic.reshape(-1, NCOMP[4]) @ W.reshape(NCOMP[4], -1)).reshape(
        lead + (NCOMP[2], NCOMP[2])
    )
    B = np.matmul(np.matmul(Phi, G), np.swapaxes(Phi, -1, -2)) / 6.0
    return (B + np.swapaxes(B, -1, -2)) / 2.0
