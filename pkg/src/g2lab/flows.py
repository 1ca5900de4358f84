"""Geometric evolution equations for 3-form fields on the 7-torus.

Implements the right-hand sides of the Laplacian flow, its DeTurck
gauge-fixed version, the co-flow and the (gauged) modified co-flows, the
gauge vector field V, explicit time integrators with positivity
safeguards, and per-step diagnostics.

The RHS arithmetic is written against a pluggable stencil backend: any
object with a ``partial(arr, axis, trailing=1)`` method providing
centered differences along the seven torus axes.  Full fields use the
grid module's roll-based backend; reduced representations (e.g. a single
Fourier mode for symbol probes) can substitute their own.  Pointwise
stages are chunked to bound peak memory on large grids.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels as kn
from . import g2
from ._tables import DIM, NCOMP
from .errors import (
    DivergenceError,
    FormDegreeError,
    GridError,
    NotPositiveError,
    PositivityLossError,
)
from .grid import (
    FormField,
    MetricField,
    TorusGrid,
    _blocks,
    _d_ops,
    _RollOps,
    dual_field,
    ext_d,
    l2_norm,
    sup_norm,
)

__all__ = [
    "FLOW_KINDS",
    "FlowKind",
    "FlowState",
    "Diagnostics",
    "DIAGNOSTIC_COLUMNS",
    "diagnostics_header",
    "deturck_vector",
    "lie_derivative",
    "tr_torsion_field",
    "rhs_laplacian",
    "rhs_deturck",
    "rhs_coflow",
    "rhs_modified_coflow",
    "evaluate_rhs",
    "phi_velocity",
    "step",
    "default_dt",
    "monitors",
]

FLOW_KINDS = (
    "laplacian",
    "deturck",
    "coflow",
    "modified_coflow",
    "gauged_modified_coflow",
)

_MARGIN_MIN = 1e-6  # smallest positivity margin an accepted step may leave
_MAX_HALVINGS = 10
_DEFAULT_CFL = 0.1
_CSV_VERSION = 1

DIAGNOSTIC_COLUMNS = (
    "t",
    "dphi_l2",
    "dphi_sup",
    "dpsi_l2",
    "dpsi_sup",
    "trt_min",
    "trt_max",
    "metric_eig_min",
    "volume",
    "rhs_l2",
)


@dataclass(frozen=True)
class FlowKind:
    """Selects the evolution equation; a_const is the constant A of the
    modified co-flows (ignored by the other kinds)."""

    name: str
    a_const: float = 0.0

    def __post_init__(self):
        if self.name not in FLOW_KINDS:
            raise ValueError(
                f"unknown flow kind {self.name!r}; expected one of {FLOW_KINDS}"
            )
        if not math.isfinite(self.a_const):
            raise ValueError(f"A must be finite, got {self.a_const}")
        object.__setattr__(self, "a_const", float(self.a_const))

    @property
    def form_degree(self) -> int:
        """Degree of the form the RHS evolves (3 or 4)."""
        return 3 if self.name in ("laplacian", "deturck") else 4


def _as_kind(kind) -> FlowKind:
    return kind if isinstance(kind, FlowKind) else FlowKind(str(kind))


@dataclass(frozen=True)
class FlowState:
    """A positive 3-form field at time t with its derived per-site caches."""

    t: float
    phi: FormField
    metric: MetricField
    psi: FormField

    @classmethod
    def from_phi(cls, phi: FormField, t: float = 0.0) -> "FlowState":
        if phi.degree != 3:
            raise FormDegreeError("FlowState expects a 3-form field")
        metric = MetricField.from_phi(phi)
        return cls(t=float(t), phi=phi, metric=metric, psi=dual_field(phi, metric))

    @property
    def grid(self) -> TorusGrid:
        return self.phi.grid


@dataclass(frozen=True)
class Diagnostics:
    """One monitoring record; every entry is finite by construction."""

    t: float
    dphi_l2: float
    dphi_sup: float
    dpsi_l2: float
    dpsi_sup: float
    trt_min: float
    trt_max: float
    metric_eig_min: float
    volume: float
    rhs_l2: float

    def __post_init__(self):
        for name in DIAGNOSTIC_COLUMNS:
            if not math.isfinite(getattr(self, name)):
                raise ValueError(f"diagnostics entry {name} is not finite")

    def csv_row(self) -> str:
        return ",".join(repr(float(getattr(self, c))) for c in DIAGNOSTIC_COLUMNS)


def diagnostics_header() -> str:
    """Versioned two-line CSV header (comment line plus column names)."""
    return f"# g2lab-diagnostics-v{_CSV_VERSION}\n" + ",".join(DIAGNOSTIC_COLUMNS)


# ---------------------------------------------------------------------------
# pointwise stages (chunked) and backend-generic operators
# ---------------------------------------------------------------------------


def _metric_pt(phi_arr: np.ndarray):
    """(g, g_inv, sqrt_det) for a (..., 35) array of 3-form components.

    Uses a Cholesky factorization as the positivity gate, which is cheaper
    than the eigenvalue margin of MetricField.from_phi; integrator stages
    only need validity, accepted steps recompute the full margin.
    """
    lead = phi_arr.shape[:-1]
    flat = phi_arr.reshape(-1, NCOMP[3])
    npts = flat.shape[0]
    g = np.empty((npts, DIM, DIM))
    ginv = np.empty((npts, DIM, DIM))
    sd = np.empty(npts)
    for sl in _blocks(npts):
        block = flat[sl]
        if not np.all(np.isfinite(block)):
            raise DivergenceError("non-finite 3-form values during RHS evaluation")
        b = kn.b_matrix_comps(block)
        try:
            chol = np.linalg.cholesky(b)
        except np.linalg.LinAlgError as exc:
            raise NotPositiveError(
                "3-form left the positive cone during RHS evaluation"
            ) from exc
        det = np.prod(np.diagonal(chol, axis1=-2, axis2=-1), axis=-1) ** 2
        g[sl] = b * (det ** (-1.0 / 9.0))[:, None, None]
        ginv[sl] = np.linalg.inv(g[sl])
        sd[sl] = det ** (1.0 / 9.0)
    return (
        g.reshape(lead + (DIM, DIM)),
        ginv.reshape(lead + (DIM, DIM)),
        sd.reshape(lead),
    )


def _star_pt(k: int, arr, g, ginv, sd) -> np.ndarray:
    flat = arr.reshape(-1, arr.shape[-1])
    gf = g.reshape(-1, DIM, DIM)
    gif = ginv.reshape(-1, DIM, DIM)
    sdf = sd.reshape(-1)
    out = np.empty((flat.shape[0], NCOMP[DIM - k]))
    for sl in _blocks(flat.shape[0]):
        out[sl] = kn.star_comps(k, flat[sl], gf[sl], gif[sl], sdf[sl])
    return out.reshape(arr.shape[:-1] + (NCOMP[DIM - k],))


def _interior_pt(k: int, v, arr) -> np.ndarray:
    vf = np.broadcast_to(v, arr.shape[:-1] + (DIM,)).reshape(-1, DIM)
    flat = arr.reshape(-1, arr.shape[-1])
    out = np.empty((flat.shape[0], NCOMP[k - 1]))
    for sl in _blocks(flat.shape[0]):
        out[sl] = kn.interior_comps(k, vf[sl], flat[sl])
    return out.reshape(arr.shape[:-1] + (NCOMP[k - 1],))


def _inner_pt(k: int, a, b, g, ginv, sd) -> np.ndarray:
    af = a.reshape(-1, a.shape[-1])
    bf = b.reshape(-1, b.shape[-1])
    gf = g.reshape(-1, DIM, DIM)
    gif = ginv.reshape(-1, DIM, DIM)
    sdf = sd.reshape(-1)
    out = np.empty(af.shape[0])
    for sl in _blocks(af.shape[0]):
        out[sl] = kn.inner_comps(k, af[sl], bf[sl], gf[sl], gif[sl], sdf[sl])
    return out.reshape(a.shape[:-1])


def _codiff_ops(ops, arr, degree: int, g, ginv, sd) -> np.ndarray:
    """Codifferential (-1)^k * d * through a stencil backend."""
    s = _star_pt(degree, arr, g, ginv, sd)
    ds = _d_ops(ops, s, DIM - degree)
    out = _star_pt(DIM - degree + 1, ds, g, ginv, sd)
    return -out if degree % 2 else out


def _laplacian_ops(ops, arr, degree: int, g, ginv, sd) -> np.ndarray:
    out = None
    if degree >= 1:
        out = _d_ops(ops, _codiff_ops(ops, arr, degree, g, ginv, sd), degree - 1)
    if degree <= DIM - 1:
        term = _codiff_ops(ops, _d_ops(ops, arr, degree), degree + 1, g, ginv, sd)
        out = term if out is None else out + term
    return out


def _deturck_vector_ops(ops, g, ginv) -> np.ndarray:
    """V^k = g^{ij} Gamma^k_{ij}(g) against the flat background connection.

    Assembled axis by axis from centered differences of the metric field:
    V^k = g^{kl} (g^{ij} d_i g_{jl} - (1/2) g^{ij} d_l g_{ij}).
    """
    w = np.zeros(g.shape[:-2] + (DIM,))
    for a in range(DIM):
        dga = ops.partial(g, a, trailing=2)
        w += np.einsum("...j,...jl->...l", ginv[..., a, :], dga)
        w[..., a] -= 0.5 * np.einsum("...ij,...ij->...", ginv, dga)
    return np.einsum("...kl,...l->...k", ginv, w)


def _wedge_top_pt(j: int, k: int, a, b) -> np.ndarray:
    """Coefficient of the top-form a ^ b (j + k = 7), chunked."""
    af = a.reshape(-1, a.shape[-1])
    bf = b.reshape(-1, b.shape[-1])
    out = np.empty(af.shape[0])
    for sl in _blocks(af.shape[0]):
        out[sl] = kn.wedge_comps(j, k, af[sl], bf[sl])[..., 0]
    return out.reshape(a.shape[:-1])


def _tr_torsion_ops(ops, phi, sd) -> np.ndarray:
    # (1/4)<d phi, psi> with <a, psi> vol = a ^ *psi = a ^ phi
    dphi = _d_ops(ops, phi, 3)
    return 0.25 * _wedge_top_pt(4, 3, dphi, phi) / sd


def _rhs_core(ops, phi, kind: FlowKind, metric=None):
    """RHS components of the requested flow; returns (array, form degree).

    phi carries canonical 3-form components on the last axis; all other
    axes belong to the backend.  metric, if given, is a precomputed
    (g, g_inv, sqrt_det, psi) tuple aligned with phi.

    Codifferentials of the dual pair go through the pointwise identities
    d*phi = -*d(psi) and d*psi = *d(phi), which reuse the cached psi
    instead of re-starring phi at every stage.
    """
    if metric is None:
        g, ginv, sd = _metric_pt(phi)
        psi = _star_pt(3, phi, g, ginv, sd)
    else:
        g, ginv, sd, psi = metric
    name = kind.name
    if name == "laplacian":
        out = _d_ops(ops, -_star_pt(5, _d_ops(ops, psi, 4), g, ginv, sd), 2)
        out += _codiff_ops(ops, _d_ops(ops, phi, 3), 4, g, ginv, sd)
        return out, 3
    if name == "deturck":
        two = -_star_pt(5, _d_ops(ops, psi, 4), g, ginv, sd)
        two += _interior_pt(3, _deturck_vector_ops(ops, g, ginv), phi)
        return _d_ops(ops, two, 2), 3
    dphi = _d_ops(ops, phi, 3)
    codiff_psi = _star_pt(4, dphi, g, ginv, sd)
    if name == "coflow":
        out = _d_ops(ops, codiff_psi, 3)
        out += _codiff_ops(ops, _d_ops(ops, psi, 4), 5, g, ginv, sd)
        return -out, 4
    # modified co-flows share the 2 d((A - Tr T) phi) torsion term
    trt = 0.25 * _wedge_top_pt(4, 3, dphi, phi) / sd
    scaled = (kind.a_const - trt)[..., None] * phi
    if name == "modified_coflow":
        out = _d_ops(ops, codiff_psi, 3)
        out += _codiff_ops(ops, _d_ops(ops, psi, 4), 5, g, ginv, sd)
        out += 2.0 * _d_ops(ops, scaled, 3)
        return out, 4
    three = codiff_psi + 2.0 * scaled
    three += _interior_pt(4, _deturck_vector_ops(ops, g, ginv), psi)
    return _d_ops(ops, three, 3), 4


# ---------------------------------------------------------------------------
# public RHS wrappers
# ---------------------------------------------------------------------------


def _state_metric_tuple(state: FlowState):
    shp = state.grid.shape
    m = state.metric
    return (
        m.g.reshape(shp + (DIM, DIM)),
        m.g_inv.reshape(shp + (DIM, DIM)),
        m.sqrt_det.reshape(shp),
        state.psi.shaped,
    )


def evaluate_rhs(state: FlowState, kind) -> FormField:
    """RHS field of the requested flow (a 3-form or 4-form field)."""
    kind = _as_kind(kind)
    arr, deg = _rhs_core(
        _RollOps(state.grid), state.phi.shaped, kind, metric=_state_metric_tuple(state)
    )
    return FormField(state.grid, deg, arr.reshape(state.grid.nsites, -1))


def rhs_laplacian(state: FlowState) -> FormField:
    """Hodge Laplacian of phi in the induced metric."""
    return evaluate_rhs(state, "laplacian")


def rhs_deturck(state: FlowState) -> FormField:
    """d(d* phi + iota_V phi); exactly d-closed by construction."""
    return evaluate_rhs(state, "deturck")


def rhs_coflow(state: FlowState) -> FormField:
    """-Delta psi for the dual 4-form field."""
    return evaluate_rhs(state, "coflow")


def rhs_modified_coflow(state: FlowState, a_const: float = 0.0, gauged: bool = False) -> FormField:
    name = "gauged_modified_coflow" if gauged else "modified_coflow"
    return evaluate_rhs(state, FlowKind(name, a_const))


def deturck_vector(source) -> np.ndarray:
    """Per-site gauge vector field, shape (nsites, 7).

    Accepts a FlowState or a bare MetricField (the latter lets synthetic
    metric fields be probed directly).
    """
    m = source.metric if isinstance(source, FlowState) else source
    shp = m.grid.shape
    v = _deturck_vector_ops(
        _RollOps(m.grid),
        m.g.reshape(shp + (DIM, DIM)),
        m.g_inv.reshape(shp + (DIM, DIM)),
    )
    return v.reshape(m.grid.nsites, DIM)


def lie_derivative(v: np.ndarray, f: FormField) -> FormField:
    """Cartan formula d(iota_v f) + iota_v(d f) for a per-site vector field.

    v is (nsites, 7) or a single constant (7,) vector.
    """
    grid = f.grid
    v = np.asarray(v, dtype=float)
    if v.shape == (DIM,):
        v = np.broadcast_to(v, (grid.nsites, DIM))
    if v.shape != (grid.nsites, DIM):
        raise GridError(
            f"vector field shape {v.shape}, expected ({grid.nsites}, {DIM})"
        )
    ops = _RollOps(grid)
    total = np.zeros((grid.nsites, NCOMP[f.degree]))
    if f.degree >= 1:
        ivf = _interior_pt(f.degree, v, f.data)
        shaped = ivf.reshape(grid.shape + (NCOMP[f.degree - 1],))
        total += _d_ops(ops, shaped, f.degree - 1).reshape(grid.nsites, -1)
    if f.degree <= DIM - 1:
        df = _d_ops(ops, f.shaped, f.degree).reshape(grid.nsites, -1)
        total += _interior_pt(f.degree + 1, v, df)
    return FormField(grid, f.degree, total)


def tr_torsion_field(state: FlowState) -> np.ndarray:
    """Torsion trace (1/4)<d phi, psi>_g at every site, shape (nsites,)."""
    sd = state.metric.sqrt_det.reshape(state.grid.shape)
    out = _tr_torsion_ops(_RollOps(state.grid), state.phi.shaped, sd)
    return out.reshape(state.grid.nsites)


# ---------------------------------------------------------------------------
# time stepping
# ---------------------------------------------------------------------------


def _jinv_pt(chi_flat, phi_flat, g, ginv, sd, psi_flat) -> np.ndarray:
    """Per-site J(phi)^{-1} applied to a 4-form component array (chunked)."""
    out = np.empty((chi_flat.shape[0], NCOMP[3]))
    for sl in _blocks(chi_flat.shape[0]):
        cache = g2.G2FieldCache(
            phi=phi_flat[sl],
            g=g[sl],
            g_inv=ginv[sl],
            sqrt_det=sd[sl],
            psi=psi_flat[sl],
            margin=math.inf,
            worst_site=-1,
        )
        out[sl] = g2.apply_inverse_linearized_psi_field(chi_flat[sl], cache)
    return out


def phi_velocity(state: FlowState, kind) -> FormField:
    """d(phi)/dt: the RHS itself for 3-form flows, J(phi)^{-1}[RHS] for
    4-form flows (the state always evolves through phi)."""
    kind = _as_kind(kind)
    rhs = evaluate_rhs(state, kind)
    if rhs.degree == 3:
        return rhs
    m = state.metric
    vel = _jinv_pt(rhs.data, state.phi.data, m.g, m.g_inv, m.sqrt_det, state.psi.data)
    return FormField(state.grid, 3, vel)


def _velocity_arrays(grid: TorusGrid, phi_flat: np.ndarray, kind: FlowKind) -> np.ndarray:
    """phi-velocity components for a bare data array (integrator stages)."""
    shaped = phi_flat.reshape(grid.shape + (NCOMP[3],))
    g, ginv, sd = _metric_pt(shaped)
    psi = _star_pt(3, shaped, g, ginv, sd)
    arr, deg = _rhs_core(_RollOps(grid), shaped, kind, metric=(g, ginv, sd, psi))
    rhs_flat = arr.reshape(grid.nsites, -1)
    if deg == 3:
        return rhs_flat
    return _jinv_pt(
        rhs_flat,
        phi_flat,
        g.reshape(-1, DIM, DIM),
        ginv.reshape(-1, DIM, DIM),
        sd.reshape(-1),
        psi.reshape(-1, NCOMP[4]),
    )


def _advance(grid, phi0, v1, kind, dt, method) -> np.ndarray:
    # overflow is tolerated here: the caller inspects the result for
    # non-finite entries and raises DivergenceError
    with np.errstate(over="ignore", invalid="ignore"):
        if method == "euler":
            return phi0 + dt * v1
        half = 0.5 * dt
        v2 = _velocity_arrays(grid, phi0 + half * v1, kind)
        v3 = _velocity_arrays(grid, phi0 + half * v2, kind)
        v4 = _velocity_arrays(grid, phi0 + dt * v3, kind)
        return phi0 + (dt / 6.0) * (v1 + 2.0 * (v2 + v3) + v4)


def step(state: FlowState, kind, dt: float, method: str = "rk4") -> FlowState:
    """One accepted integrator step.

    If the stepped field loses positivity (or its margin drops below
    1e-6), dt is halved and the step retried, up to 10 times; the first
    velocity is reused across retries.  Non-finite values abort with a
    divergence error.
    """
    kind = _as_kind(kind)
    if method not in ("euler", "rk4"):
        raise ValueError(f"unknown integrator {method!r}; expected euler or rk4")
    if not (isinstance(dt, (int, float)) and math.isfinite(dt) and dt > 0):
        raise ValueError(f"dt must be a positive finite number, got {dt!r}")
    grid = state.grid
    phi0 = state.phi.data
    v1 = phi_velocity(state, kind).data
    dt_try = float(dt)
    last_margin = None
    last_site = None
    for _ in range(_MAX_HALVINGS + 1):
        try:
            new_data = _advance(grid, phi0, v1, kind, dt_try, method)
            if not np.all(np.isfinite(new_data)):
                raise DivergenceError(
                    f"non-finite field after step at t={state.t:g}", t=state.t
                )
            cand = FlowState.from_phi(FormField(grid, 3, new_data), t=state.t + dt_try)
            if cand.metric.margin >= _MARGIN_MIN:
                return cand
            last_margin, last_site = cand.metric.margin, cand.metric.worst_site
        except NotPositiveError as exc:
            last_margin, last_site = exc.margin, exc.site
        dt_try *= 0.5
    raise PositivityLossError(
        f"flow left the positive 3-form cone at t={state.t:g} "
        f"(worst site {last_site}, margin {last_margin}) "
        f"after {_MAX_HALVINGS} dt halvings",
        t=state.t,
        margin=last_margin,
        site=last_site,
    )


def default_dt(state: FlowState, cfl: float = _DEFAULT_CFL) -> float:
    """Diffusive CFL bound cfl * min(h)^2 / max_site lambda_max(g_inv)."""
    lam = 0.0
    gi = state.metric.g_inv
    for sl in _blocks(state.grid.nsites):
        lam = max(lam, float(np.linalg.eigvalsh(gi[sl])[:, -1].max()))
    hmin = min(state.grid.spacings)
    return cfl * hmin * hmin / lam


def monitors(state: FlowState, kind=None) -> Diagnostics:
    """Fill a Diagnostics record; pure read.

    The RHS norm is only computed when a flow kind is supplied (it needs
    one); otherwise that entry is 0.
    """
    m = state.metric
    dphi = ext_d(state.phi)
    dpsi = ext_d(state.psi)
    trt = tr_torsion_field(state)
    rhs_l2 = 0.0
    if kind is not None:
        rhs_l2 = l2_norm(evaluate_rhs(state, _as_kind(kind)), m)
    return Diagnostics(
        t=state.t,
        dphi_l2=l2_norm(dphi, m),
        dphi_sup=sup_norm(dphi),
        dpsi_l2=l2_norm(dpsi, m),
        dpsi_sup=sup_norm(dpsi),
        trt_min=float(trt.min()),
        trt_max=float(trt.max()),
        metric_eig_min=m.min_metric_eig,
        volume=m.total_volume,
        rhs_l2=rhs_l2,
    )
