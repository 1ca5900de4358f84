"""Principal symbols of the linearized flow operators, and the
positivity test of the symbol restricted to the kernel of the gauge
symbol (the parabolicity certificate for the gauge-fixed flows).

Two independent routes produce the 35x35 second-order symbol matrix:

* :func:`assemble_symbol_exact` composes the frozen-coefficient factors
  at the base point: derivatives are replaced by wedge/contraction with
  the covector, the algebraic stages (Hodge star, induced metric, gauge
  vector) by their pointwise linearizations;
* :func:`extract_symbol_planewave` probes the actual nonlinear flow RHS
  with lattice plane waves and fits the second-order coefficient from
  two wavenumbers, eliminating all lower-order terms.

Sign convention is heat-positive: on eta e^{is<xi,x>} the linearized
operator acts as (-s^2 S[eta] + O(s)) e^{is<xi,x>}, so the scalar heat
operator has S = |xi|^2 and "parabolic" means eigenvalues of the
restricted S have positive real part.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import flows as fl
from ._tables import DIM, NCOMP, wedge_table
from .errors import FormDegreeError, GridError
from .forms import KForm, hodge, inner, interior, wedge
from .g2 import (
    G2Structure,
    inverse_linearized_psi,
    is_positive,
    linearized_metric,
    linearized_psi,
    metric_from_phi,
    standard_phi,
)
from .grid import TorusGrid

SYMBOL_KINDS = ("deturck", "gauged_modified_coflow")

_POSITIVITY_RTOL = 1e-8  # min real part must exceed this times ||S||_2
_RANK_TOL = 1e-10
_KERNEL_DIMS = {3: 15, 4: 20}
_PROBE_AMPLITUDE = 1e-4


def _covector(xi) -> np.ndarray:
    if isinstance(xi, KForm):
        if xi.degree != 1:
            raise FormDegreeError("expected a 1-form covector")
        comps = xi.comps
    else:
        comps = np.asarray(xi, dtype=np.float64)
        if comps.shape != (DIM,):
            raise FormDegreeError(f"covector needs {DIM} components")
    if not np.any(comps):
        raise ValueError("covector must be nonzero")
    return comps


@dataclass(frozen=True)
class SymbolProblem:
    """Operator kind, positive base 3-form, and nonzero covector."""

    kind: str
    phi_pt: KForm
    xi: KForm
    a_const: float = 0.0

    def __post_init__(self):
        if self.kind not in SYMBOL_KINDS:
            raise ValueError(
                f"unknown operator kind {self.kind!r}; expected one of {SYMBOL_KINDS}"
            )
        if not math.isfinite(self.a_const):
            raise ValueError(f"A must be finite, got {self.a_const}")
        if self.phi_pt.degree != 3:
            raise FormDegreeError("base point must be a 3-form")
        metric_from_phi(self.phi_pt)  # rejects non-positive base points
        object.__setattr__(self, "xi", KForm(1, _covector(self.xi)))

    @property
    def form_degree(self) -> int:
        """Degree of the forms the operator evolves (3 or 4)."""
        return 3 if self.kind == "deturck" else 4


@dataclass(frozen=True)
class SymbolReport:
    """Outcome of the restricted-symbol positivity check."""

    S: np.ndarray
    kernel_basis: np.ndarray
    restricted_spectrum: np.ndarray
    verdict: bool
    min_real: float
    invariance_defect: float
    threshold: float

    @property
    def kernel_dim(self) -> int:
        return self.kernel_basis.shape[1]

    def to_text(self) -> str:
        def fmt(z) -> str:
            if abs(z.imag) > 1e-14 * max(1.0, abs(z.real)):
                return f"{z.real:.12g}{z.imag:+.12g}j"
            return f"{z.real:.12g}"

        return "\n".join(
            [
                f"verdict: {'pass' if self.verdict else 'fail'}",
                f"min_real_part: {self.min_real!r}",
                f"threshold: {self.threshold!r}",
                f"kernel_dim: {self.kernel_dim}",
                f"invariance_defect: {self.invariance_defect!r}",
                "spectrum: " + ", ".join(fmt(z) for z in self.restricted_spectrum),
            ]
        )


def spectra_csv(reports) -> str:
    """CSV block for a sweep: one row of real parts per report."""
    reports = list(reports)
    if not reports:
        raise ValueError("no reports to serialize")
    m = reports[0].kernel_dim
    if any(r.kernel_dim != m for r in reports):
        raise ValueError("sweep mixes operators with different kernel sizes")
    lines = [
        "# g2lab-spectra-v1",
        "problem,verdict,min_real,max_imag_abs,invariance_defect,"
        + ",".join(f"re_{i}" for i in range(m)),
    ]
    for i, r in enumerate(reports):
        eigs = np.asarray(r.restricted_spectrum)
        lines.append(
            ",".join(
                [str(i), "1" if r.verdict else "0", repr(r.min_real),
                 repr(float(np.abs(eigs.imag).max())), repr(r.invariance_defect)]
                + [repr(float(x)) for x in eigs.real]
            )
        )
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# exact (compositional) route
# ---------------------------------------------------------------------------


def sigma_L(xi, degree: int):
    """Matrix of (xi wedge .) from degree-k to degree-(k+1) components."""
    comps = _covector(xi)
    if not 1 <= degree < DIM:
        raise FormDegreeError(f"degree must be in 1..{DIM - 1}, got {degree}")
    ai, bi, sg = wedge_table(1, degree)
    out = np.zeros((NCOMP[degree + 1], NCOMP[degree]))
    rows = np.repeat(np.arange(NCOMP[degree + 1]), ai.shape[1])
    np.add.at(out, (rows, bi.ravel()), sg.ravel() * comps[ai.ravel()])
    return out


def _sigma_v(xi: np.ndarray, h: np.ndarray, struct: G2Structure) -> np.ndarray:
    """Symbol of the gauge vector on a metric perturbation h,
    sigma_V(xi)[h]^k = (1/2) g^{ij} g^{kl} (xi_i h_jl + xi_j h_il - xi_l h_ij)."""
    gi = struct.metric.g_inv
    t1 = np.einsum("ij,kl,i,jl->k", gi, gi, xi, h)
    t2 = np.einsum("ij,kl,j,il->k", gi, gi, xi, h)
    t3 = np.einsum("ij,kl,l,ij->k", gi, gi, xi, h)
    return 0.5 * (t1 + t2 - t3)


def assemble_symbol_exact(p: SymbolProblem) -> np.ndarray:
    """Second-order symbol with coefficients frozen at the base point.

    Derivatives contribute wedge with xi (and minus contraction with its
    sharp, through the star identities); the nonlinear stages contribute
    their pointwise linearizations.  Constant shifts of the torsion
    trace are zeroth order and drop out.
    """
    struct = G2Structure.from_phi(p.phi_pt)
    m = struct.metric
    xi = KForm(1, _covector(p.xi))
    xv = xi.comps
    ncomp = NCOMP[p.form_degree]
    S = np.empty((ncomp, ncomp))
    for b in range(ncomp):
        unit = np.zeros(ncomp)
        unit[b] = 1.0
        if p.kind == "deturck":
            eta = KForm(3, unit)
            j_eta = linearized_psi(eta, struct, method="algebraic")
            col = -wedge(xi, hodge(wedge(xi, j_eta), m))
            sv = _sigma_v(xv, linearized_metric(eta, struct), struct)
            col = col + wedge(xi, interior(sv, struct.phi))
        else:
            eta = inverse_linearized_psi(KForm(4, unit), struct)
            col = wedge(xi, hodge(wedge(xi, eta), m))
            coef = -0.5 * inner(wedge(xi, eta), struct.psi, m)
            col = col + wedge(xi, struct.phi) * coef
            sv = _sigma_v(xv, linearized_metric(eta, struct), struct)
            col = col + wedge(xi, interior(sv, struct.psi))
        S[:, b] = col.comps
    return S


# ---------------------------------------------------------------------------
# plane-wave (probe) route
# ---------------------------------------------------------------------------


class _RingOps:
    """Stencil backend on the phase ring of one lattice wavevector.

    Fields built from a plane wave with integer mode vector m are
    constant on phase classes v = <m, j> mod n; moving one lattice step
    along torus axis a shifts v by m_a.  Centered differences therefore
    become rolls of a length-n ring, letting the full nonlinear RHS act
    on n values instead of n^7 sites.  Layout: (..., n, components),
    batch axes in front.
    """

    __slots__ = ("mode", "grid")

    def __init__(self, mode, grid: TorusGrid):
        self.mode = tuple(int(x) for x in mode)
        self.grid = grid

    def partial(self, arr: np.ndarray, axis: int, trailing: int = 1):
        ax = -(1 + trailing)
        h = self.grid.spacings[axis]
        s = self.mode[axis]
        f_p = np.roll(arr, -s, axis=ax)
        f_m = np.roll(arr, s, axis=ax)
        if self.grid.fd_order == 2:
            return (f_p - f_m) / (2.0 * h)
        f_p2 = np.roll(arr, -2 * s, axis=ax)
        f_m2 = np.roll(arr, 2 * s, axis=ax)
        return (8.0 * (f_p - f_m) - (f_p2 - f_m2)) / (12.0 * h)


def _mode_vector(xi_comps: np.ndarray, grid: TorusGrid) -> np.ndarray:
    """Integer mode m with xi = 2 pi m / L; rejects incompatible covectors."""
    lengths = np.asarray(grid.lengths)
    m = xi_comps * lengths / (2.0 * np.pi)
    mr = np.rint(m)
    if np.abs(m - mr).max() > 1e-9 * max(1.0, np.abs(m).max()):
        near = 2.0 * np.pi * mr / lengths
        raise GridError(
            "covector is not grid compatible (needs integer multiples of "
            f"2 pi/L per axis); nearest compatible covector is {near.tolist()} "
            f"(mode {mr.astype(int).tolist()})"
        )
    if not np.any(mr.astype(int) % grid.n):
        raise GridError(
            f"covector aliases to the zero mode on an n={grid.n} grid"
        )
    return mr.astype(int)


def _phase_counts(mode: np.ndarray, n: int) -> np.ndarray:
    # class v is populated iff v is a multiple of gcd(m_1..m_7, n), and all
    # populated classes carry the same number of lattice sites
    d = math.gcd(n, *(abs(int(x)) for x in mode))
    counts = np.zeros(n)
    counts[::d] = float(d) * float(n) ** (DIM - 1)
    return counts


def discrete_covector(xi, grid: TorusGrid) -> np.ndarray:
    """Effective covector of the grid stencil for a compatible xi.

    A lattice plane wave feels the centered difference as multiplication
    by sin(k h)/h (order 2) or (8 sin(k h) - sin(2 k h))/(6 h) (order 4)
    instead of k; exact symbols must be evaluated here when compared
    with plane-wave extractions.
    """
    mode = _mode_vector(_covector(xi), grid)
    return _mode_covector(mode, grid, 1)


def _mode_covector(mode: np.ndarray, grid: TorusGrid, mu: int) -> np.ndarray:
    h = np.asarray(grid.spacings)
    kh = 2.0 * np.pi * mu * np.asarray(mode, dtype=np.float64) / grid.n
    if grid.fd_order == 2:
        return np.sin(kh) / h
    return (8.0 * np.sin(kh) - np.sin(2.0 * kh)) / (6.0 * h)


def _ring_rhs(ops: _RingOps, phi_ring: np.ndarray, kind: fl.FlowKind) -> np.ndarray:
    g, ginv, sd = fl._metric_pt(phi_ring)
    psi = fl._star_pt(3, phi_ring, g, ginv, sd)
    arr, _deg = fl._rhs_core(ops, phi_ring, kind, metric=(g, ginv, sd, psi))
    return arr


def _extract_columns(p: SymbolProblem, grid: TorusGrid, etas: np.ndarray) -> np.ndarray:
    """Second-order plane-wave response, one column per probe 3-form.

    For each probe, wavenumber multiple mu in {1, 2} and trig channel,
    the RHS is evaluated at base +/- amplitude * probe * wave and the
    amplitude-symmetric difference is projected back onto the wave
    (site-count weighted).  The mu=1 and mu=2 coefficients are combined
    to cancel the wave-independent zeroth-order term exactly; first
    order terms land in the opposite trig channel and project to zero.
    """
    mode = _mode_vector(_covector(p.xi), grid)
    struct = G2Structure.from_phi(p.phi_pt)
    gi = struct.metric.g_inv
    xid = [_mode_covector(mode, grid, mu) for mu in (1, 2)]
    lam = [float(v @ gi @ v) for v in xid]
    if abs(lam[1] - lam[0]) <= 0.1 * lam[0]:
        raise GridError(
            "wavenumber doubling is degenerate for mode "
            f"{mode.tolist()} on an n={grid.n} grid (|2k| matches |k| after "
            "aliasing); use a different grid size or mode"
        )
    # the mu=2 term cancels exactly when xi_d(2k) is a scalar multiple of
    # xi_d(k), which holds for modes with entries in {-1, 0, 1} on uniform
    # grids (and trivially when xi_d(2k) = 0, e.g. any such mode at n = 4)
    rho = lam[1] / lam[0]
    ops = _RingOps(mode, grid)
    kind = fl.FlowKind(p.kind, a_const=p.a_const)
    n = grid.n
    theta = 2.0 * np.pi * np.arange(n) / n
    counts = _phase_counts(mode, n)
    amp = _PROBE_AMPLITUDE
    base = p.phi_pt.comps

    coofs = {}
    for mu in (1, 2):
        for channel in ("cos", "sin"):
            w = np.cos(mu * theta) if channel == "cos" else np.sin(mu * theta)
            denom = float(counts @ (w * w))
            if denom <= 1e-12 * counts.sum():
                coofs[(mu, channel)] = None  # wave vanishes on populated classes
                continue
            bump = etas[:, None, :] * w[None, :, None]
            d_plus = _ring_rhs(ops, base + amp * bump, kind)
            d_minus = _ring_rhs(ops, base - amp * bump, kind)
            diff = (d_plus - d_minus) / (2.0 * amp)
            coofs[(mu, channel)] = np.einsum("v,v,bvc->cb", counts, w, diff) / denom

    estimates = []
    for channel in ("cos", "sin"):
        m1, m2 = coofs[(1, channel)], coofs[(2, channel)]
        if m1 is None or m2 is None:
            continue
        # coefficient model: M_mu = -S(xi_d(mu)) + Z with S quadratic in the
        # covector, so S(xi_d(1)) = (M_1 - M_2) / (rho - 1)
        estimates.append((m1 - m2) / (rho - 1.0))
    if not estimates:
        raise GridError(
            f"no usable trig channel for mode {mode.tolist()} on an n={grid.n} grid"
        )
    return np.mean(estimates, axis=0)


def extract_symbol_planewave(p: SymbolProblem, grid: TorusGrid) -> np.ndarray:
    """Measure the symbol matrix from plane-wave probes of the flow RHS.

    Independent of :func:`assemble_symbol_exact`: nothing is linearized
    by hand, the actual RHS code is differenced.  The result approximates
    the exact symbol evaluated at ``discrete_covector(xi, grid)``.  For
    the 4-form operator the probes are pushed through the inverse
    linearized dual map so the columns are indexed by 4-form components.
    """
    if p.form_degree == 3:
        etas = np.eye(NCOMP[3])
    else:
        struct = G2Structure.from_phi(p.phi_pt)
        etas = np.stack(
            [
                inverse_linearized_psi(KForm(4, col), struct).comps
                for col in np.eye(NCOMP[4])
            ]
        )
    return _extract_columns(p, grid, etas)


# ---------------------------------------------------------------------------
# the positivity check
# ---------------------------------------------------------------------------


def check_integrability(p: SymbolProblem) -> SymbolReport:
    """Restrict the exact symbol to ker(xi wedge .) and test positivity.

    The kernel basis comes from a singular value decomposition of the
    wedge matrix (orthonormal by construction); the spectrum of K^T S K
    decides the verdict, and the invariance defect ||(I - K K^T) S K||
    is reported rather than assumed zero.
    """
    return _report_for_matrix(assemble_symbol_exact(p), p)


def _report_for_matrix(S: np.ndarray, p: SymbolProblem) -> SymbolReport:
    deg = p.form_degree
    L = sigma_L(p.xi, deg)
    _u, sv, vt = np.linalg.svd(L)
    rank = int((sv > _RANK_TOL * sv[0]).sum())
    kdim = NCOMP[deg] - rank
    if kdim != _KERNEL_DIMS[deg]:
        raise RuntimeError(
            f"gauge-symbol kernel has dimension {kdim} on {deg}-forms, "
            f"expected {_KERNEL_DIMS[deg]}; wedge matrix is inconsistent"
        )
    K = vt[rank:].T
    R = K.T @ S @ K
    eig = np.linalg.eigvals(R)
    eig = eig[np.argsort(eig.real)]
    min_real = float(eig[0].real)
    s_norm = float(np.linalg.norm(S, 2))
    defect = float(np.linalg.norm(S @ K - K @ R))
    threshold = _POSITIVITY_RTOL * s_norm
    return SymbolReport(
        S=S,
        kernel_basis=K,
        restricted_spectrum=eig,
        verdict=bool(min_real > threshold),
        min_real=min_real,
        invariance_defect=defect,
        threshold=threshold,
    )


def random_problem(kind: str, rng, radius: float = 0.1, a_const: float = 0.0,
                   grid: TorusGrid | None = None) -> SymbolProblem:
    """Random positive base point within sup-norm ``radius`` of the
    standard form, with a random covector (unit length, or the lowest
    grid-compatible band when a grid is supplied)."""
    phi0 = standard_phi()
    for _ in range(100):
        phi = KForm(3, phi0.comps + rng.uniform(-radius, radius, size=NCOMP[3]))
        if is_positive(phi)[0]:
            break
    else:
        raise RuntimeError(f"no positive 3-form found within radius {radius}")
    if grid is None:
        vec = rng.standard_normal(DIM)
        vec /= np.linalg.norm(vec)
    else:
        mode = np.zeros(DIM, dtype=int)
        while not mode.any():
            mode = rng.integers(-1, 2, size=DIM)
        vec = 2.0 * np.pi * mode / np.asarray(grid.lengths)
    return SymbolProblem(kind=kind, phi_pt=phi, xi=KForm(1, vec), a_const=a_const)
