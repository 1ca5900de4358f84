"""G2-structures on R^7: the standard 3-form, induced metric, torsion trace,
type decomposition and the linearized dual-form map.

A 3-form phi is *positive* when the bilinear matrix

    B_ij = (1/144) phi_iab phi_jcd phi_efg eps^{abcdefg}

is positive definite; the induced metric is g = B (det B)^{-1/9}, the
normalization that makes the standard form produce the identity.  The
dual 4-form is psi = *_g phi.

Most public functions come in two flavors: a pointwise one working on
:class:`~g2lab.forms.KForm` values, and a vectorized `..._field` one
working on arrays with a trailing component axis (used by the grid and
flow layers).  Both share the same kernels.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels as kn
from . import _tables as tb
from .errors import FormDegreeError, NotPositiveError
from .forms import DIM, KForm, Metric

__all__ = [
    "standard_phi",
    "bilinear_matrix",
    "is_positive",
    "metric_from_phi",
    "G2Structure",
    "tr_torsion",
    "seven_part_basis",
    "Decomposition137",
    "decompose_137",
    "linearized_psi",
    "inverse_linearized_psi",
    "linearized_metric",
    "G2FieldCache",
    "build_field_cache",
    "decompose_137_field",
    "apply_linearized_psi_field",
    "apply_inverse_linearized_psi_field",
]

# components of the standard positive 3-form (0-based index tuples)
_PHI0_ENTRIES = {
    (0, 1, 2): 1.0,
    (0, 3, 4): 1.0,
    (0, 5, 6): 1.0,
    (1, 3, 5): 1.0,
    (1, 4, 6): -1.0,
    (2, 3, 6): -1.0,
    (2, 4, 5): -1.0,
}

POSITIVITY_RTOL = 1e-10  # min eigenvalue threshold relative to ||B||
FD_MARGIN_FLOOR = 1e-8  # reject finite-difference probes below this margin


def standard_phi() -> KForm:
    """The model positive 3-form phi0 = e123 + e145 + e167 + e246 - e257 - e347 - e356."""
    return KForm.from_dict(3, _PHI0_ENTRIES)


def _phi0_comps() -> np.ndarray:
    return standard_phi().comps


def bilinear_matrix(phi: KForm) -> np.ndarray:
    """The symmetric matrix B(phi); positive definite iff phi is positive."""
    if phi.degree != 3:
        raise FormDegreeError("bilinear_matrix expects a 3-form")
    return kn.b_matrix_comps(phi.comps)


def is_positive(phi: KForm) -> tuple[bool, float]:
    """Whether phi is a positive 3-form, plus the positivity margin.

    The margin is the smallest eigenvalue of B(phi); the verdict tests it
    against 1e-10 * ||B||.
    """
    eigs = np.linalg.eigvalsh(bilinear_matrix(phi))
    margin = float(eigs[0])
    scale = float(np.abs(eigs).max())
    return margin > POSITIVITY_RTOL * scale, margin


def _metric_arrays(phi_comps: np.ndarray):
    """g, g_inv, sqrt_det and per-point B margin for (..., 35) input.

    Non-positive points yield NaN metric entries; callers check margins.
    """
    B = kn.b_matrix_comps(phi_comps)
    eigs = np.linalg.eigvalsh(B)
    margin = eigs[..., 0]
    scale = np.abs(eigs).max(axis=-1)
    ok = margin > POSITIVITY_RTOL * scale
    det_b = np.linalg.det(B)
    safe_det = np.where(ok, det_b, 1.0)
    g = B * (safe_det ** (-1.0 / 9.0))[..., None, None]
    g = np.where(ok[..., None, None], g, np.nan)
    g_inv = np.linalg.inv(np.where(ok[..., None, None], g, np.eye(DIM)))
    g_inv = np.where(ok[..., None, None], g_inv, np.nan)
    sqrt_det = np.where(ok, safe_det ** (1.0 / 9.0), np.nan)
    return g, g_inv, sqrt_det, margin, ok


def metric_from_phi(phi: KForm) -> Metric:
    """Metric induced by a positive 3-form; raises NotPositiveError otherwise.

    Satisfies g(mu * phi) = mu^(2/3) g(phi) and maps the standard form to
    the identity.
    """
    if phi.degree != 3:
        raise FormDegreeError("metric_from_phi expects a 3-form")
    g, g_inv, sqrt_det, margin, ok = _metric_arrays(phi.comps)
    if not bool(ok):
        raise NotPositiveError(
            f"3-form is not positive (margin {float(margin):g})",
            margin=float(margin),
        )
    return Metric(g=g, g_inv=g_inv, sqrt_det=float(sqrt_det))


@dataclass(frozen=True)
class G2Structure:
    """A positive 3-form with its induced metric and dual 4-form."""

    phi: KForm
    metric: Metric
    psi: KForm

    @classmethod
    def from_phi(cls, phi: KForm) -> "G2Structure":
        m = metric_from_phi(phi)
        psi = KForm(4, kn.star_comps(3, phi.comps, m.g, m.g_inv, m.sqrt_det))
        return cls(phi=phi, metric=m, psi=psi)


def tr_torsion(struct: G2Structure, dphi: KForm) -> float:
    """Torsion trace Tr T = (1/4) <dphi, psi>_g.

    Takes the already-computed exterior derivative of phi so the same
    convention serves both pointwise checks and grid fields.  Vanishes
    when dphi = 0, in particular for the standard structure.
    """
    if dphi.degree != 4:
        raise FormDegreeError("tr_torsion expects the 4-form dphi")
    val = kn.inner_comps(
        4, dphi.comps, struct.psi.comps,
        struct.metric.g, struct.metric.g_inv, struct.metric.sqrt_det,
    )
    return 0.25 * float(val)


def seven_part_basis(struct: G2Structure) -> list[KForm]:
    """The seven 3-forms *(dx^a ^ phi) spanning the 7-dimensional type component."""
    out = []
    m = struct.metric
    for a in range(DIM):
        e_a = np.zeros(DIM)
        e_a[a] = 1.0
        wedge_comp = kn.wedge_comps(1, 3, e_a, struct.phi.comps)
        out.append(KForm(3, kn.star_comps(4, wedge_comp, m.g, m.g_inv, m.sqrt_det)))
    return out


@dataclass(frozen=True)
class Decomposition137:
    """Orthogonal type components of a 3-form: eta = p1 + p7 + p27."""

    p1: KForm
    p7: KForm
    p27: KForm


def decompose_137(eta: KForm, struct: G2Structure) -> Decomposition137:
    """Split a 3-form into its 1 + 7 + 27 dimensional type components.

    p1 is the multiple of phi, p7 the <.,.>_g-orthogonal projection onto
    span{*(dx^a ^ phi)} via a 7x7 Gram solve, p27 the remainder.
    """
    if eta.degree != 3:
        raise FormDegreeError("decompose_137 expects a 3-form")
    m = struct.metric

    def ip(x: np.ndarray, y: np.ndarray) -> float:
        return float(kn.inner_comps(3, x, y, m.g, m.g_inv, m.sqrt_det))

    phi_c = struct.phi.comps
    p1 = (ip(eta.comps, phi_c) / ip(phi_c, phi_c)) * struct.phi

    basis = seven_part_basis(struct)
    gram = np.array([[ip(a.comps, b.comps) for b in basis] for a in basis])
    rhs = np.array([ip(eta.comps, b.comps) for b in basis])
    coeff = np.linalg.solve(gram, rhs)
    p7 = KForm(3, sum(c * b.comps for c, b in zip(coeff, basis)))
    p27 = eta - p1 - p7
    return Decomposition137(p1=p1, p7=p7, p27=p27)


def _dual_map(phi_comps: np.ndarray) -> np.ndarray:
    """psi(phi) = *_{g(phi)} phi on raw components (positivity assumed checked)."""
    g, g_inv, sqrt_det, _, _ = _metric_arrays(phi_comps)
    return kn.star_comps(3, phi_comps, g, g_inv, sqrt_det)


def _fd_step(phi: KForm, eta: KForm) -> float:
    scale = float(np.linalg.norm(phi.comps))
    eta_norm = float(np.linalg.norm(eta.comps))
    return 1e-5 * scale / eta_norm


def _richardson(fn, phi_comps: np.ndarray, eta_comps: np.ndarray, eps: float):
    """Fourth-order symmetric difference of fn along eta at phi_comps."""
    f_p = fn(phi_comps + eps * eta_comps)
    f_m = fn(phi_comps - eps * eta_comps)
    f_p2 = fn(phi_comps + 2 * eps * eta_comps)
    f_m2 = fn(phi_comps - 2 * eps * eta_comps)
    return (8.0 * (f_p - f_m) - (f_p2 - f_m2)) / (12.0 * eps)


def _safe_eps(phi: KForm, eta: KForm) -> float:
    """Shrink the step until every probe point keeps a healthy margin."""
    eps = _fd_step(phi, eta)
    for _ in range(60):
        margins = [
            is_positive(KForm(3, phi.comps + s * eps * eta.comps))[1]
            for s in (-2.0, -1.0, 1.0, 2.0)
        ]
        if min(margins) >= FD_MARGIN_FLOOR:
            return eps
        eps /= 2.0
    raise NotPositiveError(
        "could not keep positivity margin during finite differencing",
        margin=min(margins),
    )


def linearized_psi(eta: KForm, struct: G2Structure, method: str = "fd") -> KForm:
    """Directional derivative J(phi)[eta] of phi -> *_{g(phi)} phi.

    method="fd" (the definition) uses symmetric finite differences with
    one Richardson step; method="algebraic" uses the closed form
    *( (4/3) p1 + p7 - p27 ) of the type decomposition.  The two agree
    to 1e-8.
    """
    if eta.degree != 3:
        raise FormDegreeError("linearized_psi expects a 3-form perturbation")
    if method == "algebraic":
        d = decompose_137(eta, struct)
        combo = (4.0 / 3.0) * d.p1 + d.p7 + (-1.0) * d.p27
        m = struct.metric
        return KForm(4, kn.star_comps(3, combo.comps, m.g, m.g_inv, m.sqrt_det))
    if method != "fd":
        raise ValueError(f"unknown method {method!r}")
    if not np.any(eta.comps):
        return KForm(4)
    eps = _safe_eps(struct.phi, eta)
    comps = _richardson(_dual_map, struct.phi.comps, eta.comps, eps)
    return KForm(4, comps)


def inverse_linearized_psi(chi: KForm, struct: G2Structure) -> KForm:
    """The unique eta with J(phi)[eta] = chi.

    Computed as (3/4) p1(sigma) + p7(sigma) - p27(sigma) with
    sigma = * chi, inverting the algebraic form of J.
    """
    if chi.degree != 4:
        raise FormDegreeError("inverse_linearized_psi expects a 4-form")
    m = struct.metric
    sigma = KForm(3, kn.star_comps(4, chi.comps, m.g, m.g_inv, m.sqrt_det))
    d = decompose_137(sigma, struct)
    return (3.0 / 4.0) * d.p1 + d.p7 + (-1.0) * d.p27


def linearized_metric(eta: KForm, struct: G2Structure) -> np.ndarray:
    """Directional derivative Dg(phi)[eta] of the induced metric (7x7, symmetric)."""
    if eta.degree != 3:
        raise FormDegreeError("linearized_metric expects a 3-form perturbation")
    if not np.any(eta.comps):
        return np.zeros((DIM, DIM))

    def metric_of(comps: np.ndarray) -> np.ndarray:
        g, _, _, _, ok = _metric_arrays(comps)
        if not bool(ok):
            raise NotPositiveError("finite-difference probe left the positive cone")
        return g

    eps = _safe_eps(struct.phi, eta)
    dg = _richardson(metric_of, struct.phi.comps, eta.comps, eps)
    return (dg + dg.T) / 2.0


# ---------------------------------------------------------------------------
# vectorized field companions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class G2FieldCache:
    """Per-point metric data and dual 4-form for a 3-form component field."""

    phi: np.ndarray  # (..., 35)
    g: np.ndarray  # (..., 7, 7)
    g_inv: np.ndarray  # (..., 7, 7)
    sqrt_det: np.ndarray  # (...,)
    psi: np.ndarray  # (..., 35)
    margin: float  # min over points of min eigenvalue of B
    worst_site: int  # argmin in flattened point order


def build_field_cache(phi_comps: np.ndarray) -> G2FieldCache:
    """Metric, dual form and positivity margin for every point of a field.

    Raises NotPositiveError as soon as any point fails the positivity
    test, reporting the worst point and margin.
    """
    g, g_inv, sqrt_det, margin, ok = _metric_arrays(phi_comps)
    flat_margin = np.atleast_1d(margin).ravel()
    worst = int(np.argmin(flat_margin))
    global_margin = float(flat_margin[worst])
    if not np.all(ok):
        raise NotPositiveError(
            f"3-form field not positive at point {worst} (margin {global_margin:g})",
            margin=global_margin,
            site=worst,
        )
    psi = kn.star_comps(3, phi_comps, g, g_inv, sqrt_det)
    return G2FieldCache(
        phi=phi_comps,
        g=g,
        g_inv=g_inv,
        sqrt_det=sqrt_det,
        psi=psi,
        margin=global_margin,
        worst_site=worst,
    )


def _seven_basis_field(cache: G2FieldCache):
    """Per-point basis b_a = *(dx^a ^ phi) and its star partners dx^a ^ phi.

    Uses *(dx^a ^ phi) = -iota_{(dx^a)#} psi, so no per-point Hodge solve
    is needed.
    """
    eye = np.eye(DIM)
    # basis_w[a] = dx^a ^ phi  (4-form), basis[a] = *(dx^a ^ phi) (3-form)
    basis_w = np.stack(
        [kn.wedge_comps(1, 3, eye[a], cache.phi) for a in range(DIM)], axis=-2
    )  # (..., 7, 35)
    sharp_rows = np.swapaxes(cache.g_inv, -1, -2)  # rows are (dx^a)#
    basis = -np.stack(
        [
            kn.interior_comps(4, sharp_rows[..., a, :], cache.psi)
            for a in range(DIM)
        ],
        axis=-2,
    )  # (..., 7, 35)
    # gram[a, b] = <b_a, b_b> = 4 g^{ab}: with b_a = -iota_{(dx^a)#} psi the
    # contraction identity psi_{iabc} psi_j^{abc} = 24 g_{ij} collapses the
    # Gram matrix (cross-checked against the wedge-to-top route in tests)
    gram = 4.0 * cache.g_inv
    return basis, basis_w, gram


def decompose_137_field(eta: np.ndarray, cache: G2FieldCache):
    """Vectorized type decomposition of a 3-form field; returns (p1, p7, p27)."""
    sd = cache.sqrt_det
    # <eta, phi> = (eta ^ psi)_top / sqrt_det and <phi, phi> = 7
    ip_phi = kn.wedge_comps(3, 4, eta, cache.psi)[..., 0] / sd
    phi_sq = kn.wedge_comps(3, 4, cache.phi, cache.psi)[..., 0] / sd
    p1 = (ip_phi / phi_sq)[..., None] * cache.phi

    basis, basis_w, gram = _seven_basis_field(cache)
    rhs = kn.wedge_comps(3, 4, eta[..., None, :], basis_w)[..., 0] / sd[..., None]
    coeff = np.linalg.solve(gram, rhs[..., None])[..., 0]
    p7 = (coeff[..., None] * basis).sum(axis=-2)
    p27 = eta - p1 - p7
    return p1, p7, p27


def apply_linearized_psi_field(eta: np.ndarray, cache: G2FieldCache) -> np.ndarray:
    """J(phi)[eta] per point via the algebraic form (4-form components)."""
    p1, p7, p27 = decompose_137_field(eta, cache)
    combo = (4.0 / 3.0) * p1 + p7 - p27
    return kn.star_comps(3, combo, cache.g, cache.g_inv, cache.sqrt_det)


def apply_inverse_linearized_psi_field(chi: np.ndarray, cache: G2FieldCache) -> np.ndarray:
    """J(phi)^{-1}[chi] per point (3-form components from a 4-form field)."""
    sigma = kn.star_comps(4, chi, cache.g, cache.g_inv, cache.sqrt_det)
    p1, p7, p27 = decompose_137_field(sigma, cache)
    return 0.75 * p1 + p7 - p27
