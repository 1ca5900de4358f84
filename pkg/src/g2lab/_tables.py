"""Index tables for exterior algebra on an oriented 7-dimensional space.

Canonical component storage for a k-form: one real number per strictly
increasing multi-index, multi-indices listed in lexicographic order
(``itertools.combinations`` order).  The orientation convention is
epsilon_{1...7} = +1, i.e. the ordered coordinate basis is positively
oriented.

Everything in this module is built once and cached; tables are plain
numpy arrays meant to be consumed by the vectorized kernels.
"""
from __future__ import annotations

import itertools
import math
from functools import lru_cache

import numpy as np

DIM = 7

COMBS = {k: tuple(itertools.combinations(range(DIM), k)) for k in range(DIM + 1)}
POS = {k: {c: i for i, c in enumerate(COMBS[k])} for k in range(DIM + 1)}
NCOMP = {k: math.comb(DIM, k) for k in range(DIM + 1)}


def perm_sign(seq) -> int:
    """Sign of the permutation sorting ``seq``; 0 if an index repeats."""
    seq = tuple(seq)
    if len(set(seq)) != len(seq):
        return 0
    inv = 0
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                inv += 1
    return -1 if inv & 1 else 1


def complement(idx) -> tuple:
    return tuple(i for i in range(DIM) if i not in idx)


@lru_cache(maxsize=None)
def wedge_table(j: int, k: int):
    """Gather tables for the product Lambda^j x Lambda^k -> Lambda^{j+k}.

    Returns ``(ai, bi, sg)`` of shape ``(C(7,j+k), C(j+k,j))`` such that
    component m of a^b equals ``sum_t sg[m,t] * a[ai[m,t]] * b[bi[m,t]]``.
    Every output component has the same number of source pairs, which
    keeps the kernel a single fancy-gather plus a reduction.
    """
    if not (0 <= j <= DIM and 0 <= k <= DIM and j + k <= DIM):
        raise ValueError(f"bad wedge degrees ({j}, {k})")
    n_out = NCOMP[j + k]
    terms = math.comb(j + k, j)
    ai = np.zeros((n_out, terms), dtype=np.intp)
    bi = np.zeros((n_out, terms), dtype=np.intp)
    sg = np.zeros((n_out, terms), dtype=np.float64)
    for mpos, M in enumerate(COMBS[j + k]):
        for t, I in enumerate(itertools.combinations(M, j)):
            J = tuple(x for x in M if x not in I)
            ai[mpos, t] = POS[j][I]
            bi[mpos, t] = POS[k][J]
            sg[mpos, t] = perm_sign(I + J)
    return ai, bi, sg


@lru_cache(maxsize=None)
def dx_wedge_table(k: int):
    """Per-axis scatter tables for dx^a ^ (k-form).

    Entry a is ``(dest, src, sgn)``: component ``dest[i]`` of the output
    (k+1)-form receives ``sgn[i] * b[src[i]]``.  For a fixed axis every
    output component has at most one source, so a plain fancy-index add
    assembles the term (this is the exterior-derivative inner loop).
    """
    ai, bi, sg = wedge_table(1, k)
    out = []
    for a in range(DIM):
        rows, cols = np.nonzero(ai == a)
        out.append(
            (rows.astype(np.intp), bi[rows, cols].copy(), sg[rows, cols].copy())
        )
    return tuple(out)


@lru_cache(maxsize=None)
def interior_table(k: int):
    """Tables for contraction of a k-form with a vector.

    ``(iota_v a)_J = sum_t sg[J,t] * v[vi[J,t]] * a[ai[J,t]]`` with J of
    degree k-1.  Each output component has exactly 8-k source terms.
    """
    if not 1 <= k <= DIM:
        raise ValueError(f"bad interior degree {k}")
    n_out = NCOMP[k - 1]
    terms = DIM - (k - 1)
    vi = np.zeros((n_out, terms), dtype=np.intp)
    ai = np.zeros((n_out, terms), dtype=np.intp)
    sg = np.zeros((n_out, terms), dtype=np.float64)
    for jpos, J in enumerate(COMBS[k - 1]):
        t = 0
        for i in range(DIM):
            if i in J:
                continue
            vi[jpos, t] = i
            ai[jpos, t] = POS[k][tuple(sorted((i,) + J))]
            sg[jpos, t] = perm_sign((i,) + J)
            t += 1
    return vi, ai, sg


@lru_cache(maxsize=None)
def complement_gather(t: int):
    """Signed complement map landing in degree t.

    For output tuple T (degree t): ``src[p] = POS[7-t][T^c]`` and
    ``sgn[p] = perm_sign(T + T^c)``.  Because k(7-k) is even in dimension
    7, perm_sign(T + T^c) == perm_sign(T^c + T), so the same table serves
    the Hodge star in both directions.
    """
    n_out = NCOMP[t]
    src = np.zeros(n_out, dtype=np.intp)
    sgn = np.zeros(n_out, dtype=np.float64)
    for p, T in enumerate(COMBS[t]):
        Tc = complement(T)
        src[p] = POS[DIM - t][Tc]
        sgn[p] = perm_sign(T + Tc)
    return src, sgn


@lru_cache(maxsize=None)
def full_tensor_table(k: int):
    """Scatter/gather between canonical components and the full 7^k tensor.

    Returns ``(flat_pos, src, sgn, sorted_flat)``: the antisymmetric full
    tensor is ``full[flat_pos] = sgn * comps[src]`` over all k!
    orderings of every increasing multi-index, and canonical components
    are recovered as ``full[sorted_flat]``.
    """
    if not 1 <= k <= 3:
        raise ValueError("full tensors only materialized for degrees 1..3")
    flat_pos, src, sgn = [], [], []
    for cpos, I in enumerate(COMBS[k]):
        for p in itertools.permutations(I):
            flat_pos.append(sum(p[t] * DIM ** (k - 1 - t) for t in range(k)))
            src.append(cpos)
            sgn.append(perm_sign(p))
    sorted_flat = [
        sum(I[t] * DIM ** (k - 1 - t) for t in range(k)) for I in COMBS[k]
    ]
    return (
        np.array(flat_pos, dtype=np.intp),
        np.array(src, dtype=np.intp),
        np.array(sgn, dtype=np.float64),
        np.array(sorted_flat, dtype=np.intp),
    )


@lru_cache(maxsize=None)
def iota_basis_table():
    """Gather tables for all seven contractions iota_{e_i} of a 3-form.

    Returns ``(idx, sgn)`` of shape (7, 21): ``(iota_{e_i} a)_J =
    sgn[i, J] * a[idx[i, J]]`` (zero sign when i is contained in J).
    """
    idx = np.zeros((DIM, NCOMP[2]), dtype=np.intp)
    sgn = np.zeros((DIM, NCOMP[2]), dtype=np.float64)
    for i in range(DIM):
        for jpos, J in enumerate(COMBS[2]):
            if i in J:
                continue
            idx[i, jpos] = POS[3][tuple(sorted((i,) + J))]
            sgn[i, jpos] = perm_sign((i,) + J)
    return idx, sgn


@lru_cache(maxsize=None)
def wedge22_tensor():
    """Dense (35, 21, 21) tensor for the 2-wedge-2 product into degree 4."""
    ai, bi, sg = wedge_table(2, 2)
    W = np.zeros((NCOMP[4], NCOMP[2], NCOMP[2]))
    for m in range(NCOMP[4]):
        for t in range(ai.shape[1]):
            W[m, ai[m, t], bi[m, t]] += sg[m, t]
    return W
