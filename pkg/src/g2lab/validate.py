"""Deterministic invariant suite across all modules, at desk scale.

Every check is a named, self-contained predicate with a numeric detail
(usually the worst defect found).  The suite is what the ``validate``
command runs; it uses fixed seeds so repeated runs print identical
tables.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass

import numpy as np

from . import flows as fl
from . import symbol as sy
from ._tables import DIM, NCOMP
from .errors import PositivityLossError
from .forms import KForm, Metric, hodge, interior, wedge
from .g2 import (
    G2Structure,
    inverse_linearized_psi,
    is_positive,
    linearized_metric,
    linearized_psi,
    metric_from_phi,
    standard_phi,
)
from .grid import (
    FormField,
    TorusGrid,
    codiff,
    ext_d,
    hodge_field,
    hodge_laplacian,
    l2_inner,
    load_snapshot,
    make_initial_data,
    save_snapshot,
    sup_norm,
)


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}  ({self.detail})"


def _random_form(rng, degree: int) -> KForm:
    return KForm(degree, rng.standard_normal(NCOMP[degree]))


def _random_metric(rng) -> Metric:
    a = rng.standard_normal((DIM, DIM)) * 0.2
    return Metric.from_matrix(np.eye(DIM) + (a + a.T) / 2.0)


def _random_positive(rng, radius=0.1) -> KForm:
    while True:
        phi = KForm(3, standard_phi().comps + rng.uniform(-radius, radius, NCOMP[3]))
        if is_positive(phi)[0]:
            return phi


def _band_field(grid, degree, seed, nmodes=4) -> FormField:
    rng = np.random.default_rng(seed)
    coords = np.indices(grid.shape).reshape(DIM, grid.nsites)
    data = np.zeros((grid.nsites, NCOMP[degree]))
    for _ in range(nmodes):
        m = rng.integers(-1, 2, size=DIM)
        amp = rng.normal(size=NCOMP[degree])
        phase = rng.uniform(0, 2 * np.pi, size=NCOMP[degree])
        angle = (2 * np.pi / grid.n) * sum(
            int(m[a]) * coords[DIM - 1 - a] for a in range(DIM)
        )
        data += amp * np.cos(angle[:, None] + phase)
    return FormField(grid, degree, data)


def run_checks(n: int = 4, fd_order: int = 2) -> list:
    """Execute the whole suite on an n^7 grid; returns CheckResult list."""
    grid = TorusGrid(n, fd_order=fd_order)
    rng = np.random.default_rng(1234)
    results = []

    def check(name: str, defect, tol: float):
        defect = float(defect)
        results.append(
            CheckResult(name, bool(defect < tol), f"defect {defect:.3e}, tol {tol:g}")
        )

    def check_flag(name: str, flag: bool, detail: str):
        results.append(CheckResult(name, bool(flag), detail))

    # --- pointwise exterior algebra -------------------------------------
    worst = 0.0
    for _ in range(5):
        m = _random_metric(rng)
        for k in range(DIM + 1):
            a = _random_form(rng, k)
            back = hodge(hodge(a, m), m)
            sign = (-1) ** (k * (DIM - k))
            worst = max(worst, np.abs(back.comps - sign * a.comps).max())
    check("hodge_involution_all_degrees", worst, 1e-12)

    worst = 0.0
    for _ in range(5):
        j, k = rng.integers(0, 4, size=2)
        a, b = _random_form(rng, int(j)), _random_form(rng, int(k))
        lhs = wedge(a, b).comps
        rhs = (-1) ** (j * k) * wedge(b, a).comps
        worst = max(worst, np.abs(lhs - rhs).max())
    check("wedge_graded_symmetry", worst, 1e-13)

    worst = 0.0
    for _ in range(5):
        v = rng.standard_normal(DIM)
        a, b = _random_form(rng, 2), _random_form(rng, 3)
        lhs = interior(v, wedge(a, b)).comps
        rhs = (
            wedge(interior(v, a), b).comps + wedge(a, interior(v, b)).comps
        )
        worst = max(worst, np.abs(lhs - rhs).max())
    check("interior_antiderivation", worst, 1e-12)

    # --- induced metric and linearizations ------------------------------
    phi0 = standard_phi()
    m0 = metric_from_phi(phi0)
    check("metric_standard_identity", np.abs(m0.g - np.eye(DIM)).max(), 1e-10)

    worst = 0.0
    for _ in range(5):
        phi = _random_positive(rng)
        mu = float(rng.uniform(0.5, 2.0))
        g1 = metric_from_phi(phi).g
        g2 = metric_from_phi(KForm(3, mu * phi.comps)).g
        worst = max(worst, np.abs(g2 - mu ** (2.0 / 3.0) * g1).max())
    check("metric_conformal_scaling", worst, 1e-10)

    check_flag(
        "positivity_rejects_negated_form",
        not is_positive(KForm(3, -phi0.comps))[0],
        "is_positive(-phi0) is False",
    )

    struct0 = G2Structure.from_phi(phi0)
    dg = linearized_metric(phi0, struct0)
    check("linearized_metric_radial", np.abs(dg - (2.0 / 3.0) * np.eye(DIM)).max(), 1e-8)

    jr = linearized_psi(phi0, struct0, method="algebraic").comps
    check(
        "linearized_dual_radial",
        np.abs(jr - (4.0 / 3.0) * struct0.psi.comps).max(),
        1e-8,
    )

    worst = 0.0
    for _ in range(20):
        phi = _random_positive(rng)
        s = G2Structure.from_phi(phi)
        eta = _random_form(rng, 3)
        back = inverse_linearized_psi(linearized_psi(eta, s, method="algebraic"), s)
        worst = max(worst, np.abs(back.comps - eta.comps).max())
    check("linearized_dual_roundtrip", worst, 1e-8)

    s = G2Structure.from_phi(_random_positive(rng))
    eta = _random_form(rng, 3)
    fd = linearized_psi(eta, s, method="fd")
    alg = linearized_psi(eta, s, method="algebraic")
    check(
        "linearized_dual_fd_vs_algebraic",
        np.abs(fd.comps - alg.comps).max(),
        1e-8,
    )

    # --- grid calculus ---------------------------------------------------
    worst = 0.0
    for deg in range(0, 6):
        f = _band_field(grid, deg, seed=deg + 10)
        worst = max(worst, sup_norm(ext_d(ext_d(f))))
    check("exterior_derivative_squared_zero", worst, 1e-12)

    mfield = fl.FlowState.from_phi(
        make_initial_data(grid, kind="closed_perturbation", eps=0.02, seed=2)
    ).metric
    worst = 0.0
    for deg in (2, 3):
        f = _band_field(grid, deg, seed=deg + 20)
        back = hodge_field(hodge_field(f, mfield), mfield)
        sign = (-1) ** (deg * (DIM - deg))
        worst = max(worst, sup_norm(back - sign * f))
    check("field_hodge_involution", worst, 1e-12)

    a = _band_field(grid, 2, seed=31)
    b = _band_field(grid, 3, seed=32)
    lhs = l2_inner(ext_d(a), b, mfield)
    rhs = l2_inner(a, codiff(b, mfield), mfield)
    check("codifferential_adjoint_to_d", abs(lhs - rhs), 1e-12 * max(1.0, abs(lhs)))

    lhs = l2_inner(hodge_laplacian(a, mfield), a, mfield)
    a2 = _band_field(grid, 2, seed=33)
    sym = l2_inner(hodge_laplacian(a, mfield), a2, mfield) - l2_inner(
        a, hodge_laplacian(a2, mfield), mfield
    )
    check_flag(
        "laplacian_selfadjoint_nonnegative",
        abs(sym) < 1e-12 * max(1.0, abs(lhs)) and lhs >= 0.0,
        f"symmetry defect {abs(sym):.3e}, quadratic form {lhs:.3e}",
    )

    coords = np.indices(grid.shape).reshape(DIM, grid.nsites)
    x1 = coords[DIM - 1] * grid.spacings[0]
    sc = FormField(grid, 0, np.sin(2 * np.pi * x1)[:, None])
    kappa = np.sin(2 * np.pi * grid.spacings[0]) / grid.spacings[0]
    want = kappa * np.cos(2 * np.pi * x1)
    got = ext_d(sc).data[:, 0]
    check("stencil_plane_wave_exact", np.abs(got - want).max(), 1e-12)

    f = make_initial_data(grid, kind="closed_perturbation", eps=0.01, seed=5)
    with tempfile.TemporaryDirectory() as td:
        p1 = os.path.join(td, "a.g2field")
        save_snapshot(f, p1)
        f2 = load_snapshot(p1)
        same = np.array_equal(f.data, f2.data) and f2.grid == grid
    check_flag("snapshot_roundtrip_exact", same, "bytes round-trip")

    check("initial_data_exactly_closed", sup_norm(ext_d(f)), 1e-12)

    # --- flows ------------------------------------------------------------
    state0 = fl.FlowState.from_phi(make_initial_data(grid, kind="standard"))
    worst = max(
        sup_norm(fl.evaluate_rhs(state0, fl.FlowKind(name, a_const=a)))
        for name in fl.FLOW_KINDS
        for a in (0.0, 1.0)
    )
    check("flow_fixed_point_rhs", worst, 1e-12)

    st = fl.step(fl.step(state0, "deturck", 0.01), "gauged_modified_coflow", 0.01)
    check(
        "flow_fixed_point_steps",
        np.abs(st.phi.data - state0.phi.data).max(),
        1e-12,
    )

    bump = fl.FlowState.from_phi(f)
    worst = 0.0
    for kname, aval in (("deturck", 0.0), ("gauged_modified_coflow", 0.7)):
        rhs = fl.evaluate_rhs(bump, fl.FlowKind(kname, a_const=aval))
        worst = max(worst, sup_norm(ext_d(rhs)) / max(1.0, sup_norm(rhs)))
    check("flow_rhs_exact_forms", worst, 1e-12)

    lap = hodge_laplacian(bump.psi, bump.metric)
    check(
        "coflow_rhs_sign",
        sup_norm(fl.rhs_coflow(bump) + lap) / max(1.0, sup_norm(lap)),
        1e-12,
    )

    dphi = ext_d(bump.phi)
    diff = fl.rhs_modified_coflow(bump, a_const=1.5) - fl.rhs_modified_coflow(bump)
    check(
        "modified_coflow_a_linearity",
        sup_norm(diff - 3.0 * dphi) / max(1.0, sup_norm(dphi)),
        1e-12,
    )

    check("deturck_vector_flat_zero", np.abs(fl.deturck_vector(state0)).max(), 1e-13)

    try:
        fl.step(bump, "laplacian", 1e8, method="euler")
        guarded = False
    except PositivityLossError:
        guarded = True
    check_flag("positivity_guard_trips", guarded, "huge step raises")

    check(
        "default_dt_cfl_bound",
        abs(fl.default_dt(state0) - 0.1 * grid.spacings[0] ** 2),
        1e-15,
    )

    # --- symbols ----------------------------------------------------------
    xi = KForm(1, np.eye(DIM)[0])
    dims_ok = (
        np.linalg.matrix_rank(sy.sigma_L(xi, 3)) == 20
        and np.linalg.matrix_rank(sy.sigma_L(xi, 4)) == 15
    )
    check_flag("gauge_symbol_kernel_dims", dims_ok, "dim ker = 15 / 20")

    rep3 = sy.check_integrability(sy.SymbolProblem("deturck", phi0, xi))
    check(
        "deturck_symbol_heat_spectrum",
        np.abs(rep3.restricted_spectrum - 1.0).max(),
        1e-8,
    )

    reps4 = [
        sy.check_integrability(
            sy.SymbolProblem("gauged_modified_coflow", phi0, xi, a_const=a)
        )
        for a in (0.0, 1.0, -3.0)
    ]
    worst = max(np.abs(r.restricted_spectrum - 1.0).max() for r in reps4)
    same_verdicts = len({r.verdict for r in reps4}) == 1
    check_flag(
        "coflow_symbol_a_independent",
        worst < 1e-8 and same_verdicts,
        f"spectrum defect {worst:.3e}",
    )

    S1 = sy.assemble_symbol_exact(sy.SymbolProblem("deturck", phi0, xi))
    S2 = sy.assemble_symbol_exact(
        sy.SymbolProblem("deturck", phi0, KForm(1, 2.0 * xi.comps))
    )
    check("symbol_quadratic_scaling", np.abs(S2 - 4.0 * S1).max(), 1e-12)

    K = rep3.kernel_basis
    worst = max(
        np.abs(K.T @ K - np.eye(K.shape[1])).max(),
        np.abs(sy.sigma_L(xi, 3) @ K).max(),
    )
    check("kernel_basis_orthonormal_annihilated", worst, 1e-12)

    prob = sy.random_problem("deturck", np.random.default_rng(99), grid=grid)
    S_pw = sy.extract_symbol_planewave(prob, grid)
    S_ex = sy.assemble_symbol_exact(
        sy.SymbolProblem(
            prob.kind, prob.phi_pt, KForm(1, sy.discrete_covector(prob.xi, grid))
        )
    )
    check(
        "planewave_extraction_cross_check",
        np.linalg.norm(S_pw - S_ex) / np.linalg.norm(S_ex),
        1e-4,
    )

    srng = np.random.default_rng(7)
    ok = True
    for _ in range(3):
        r = sy.check_integrability(sy.random_problem("deturck", srng))
        ok = ok and r.verdict
    check_flag("deturck_sweep_verdicts", ok, "3 random problems positive")

    return results


def format_table(results) -> str:
    lines = [r.line() for r in results]
    npass = sum(r.passed for r in results)
    lines.append(f"{npass}/{len(results)} checks passed")
    return "\n".join(lines)
