"""G2 structure maps: metric, positivity, decomposition, linearizations."""
import numpy as np
import pytest

from g2lab import KForm, Metric, hodge, inner, volume_form, wedge
from g2lab.errors import NotPositiveError
from g2lab.g2 import (
    G2Structure,
    bilinear_matrix,
    build_field_cache,
    decompose_137,
    decompose_137_field,
    apply_inverse_linearized_psi_field,
    apply_linearized_psi_field,
    inverse_linearized_psi,
    is_positive,
    linearized_metric,
    linearized_psi,
    metric_from_phi,
    seven_part_basis,
    standard_phi,
    tr_torsion,
)

import oracles


def random_positive_phi(rng, radius=0.1):
    phi = KForm(3, standard_phi().comps + rng.uniform(-radius, radius, size=35))
    assert is_positive(phi)[0]
    return phi


def test_bilinear_matrix_matches_epsilon_contraction_oracle():
    rng = np.random.default_rng(21)
    for phi_comps in [standard_phi().comps] + [
        random_positive_phi(rng).comps for _ in range(4)
    ]:
        got = bilinear_matrix(KForm(3, phi_comps))
        want = oracles.b_matrix_eps(phi_comps)
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


def test_standard_phi_gives_identity_metric():
    m = metric_from_phi(standard_phi())
    np.testing.assert_allclose(m.g, np.eye(7), rtol=0, atol=1e-13)
    assert m.sqrt_det == pytest.approx(1.0, abs=1e-13)


def test_metric_defining_identity():
    # (iota_i phi) ^ (iota_j phi) ^ phi = 6 g_ij vol_g
    rng = np.random.default_rng(22)
    phi = random_positive_phi(rng)
    m = metric_from_phi(phi)
    vol = volume_form(m).comps[0]
    eye = np.eye(7)
    for i in range(7):
        for j in range(i, 7):
            from g2lab import interior

            top = wedge(wedge(interior(eye[i], phi), interior(eye[j], phi)), phi)
            np.testing.assert_allclose(
                top.comps[0], 6.0 * m.g[i, j] * vol, rtol=0, atol=1e-10
            )


def test_metric_scaling_homogeneity():
    rng = np.random.default_rng(23)
    phi = random_positive_phi(rng)
    g = metric_from_phi(phi).g
    for mu in [0.5, 2.0, 3.7]:
        g_scaled = metric_from_phi(mu * phi).g
        np.testing.assert_allclose(g_scaled, mu ** (2.0 / 3.0) * g, rtol=0, atol=1e-10)


def test_metric_gl_equivariance():
    # metric_from_phi(pullback(phi, A)) = A^T g A for invertible A
    rng = np.random.default_rng(24)
    phi0 = standard_phi().comps
    for _ in range(20):
        A = np.eye(7) + 0.3 * rng.normal(size=(7, 7))
        if np.linalg.det(A) < 0:  # orientation-reversing maps leave the positive orbit
            A[0] *= -1.0
        assert np.linalg.det(A) > 1e-3
        pulled = oracles.pullback_form(3, phi0, A)
        g_pulled = metric_from_phi(KForm(3, pulled)).g
        g_direct = A.T @ metric_from_phi(standard_phi()).g @ A
        np.testing.assert_allclose(g_pulled, g_direct, rtol=1e-9, atol=1e-10)


def test_is_positive_examples():
    ok, margin = is_positive(standard_phi())
    assert ok and margin == pytest.approx(1.0, abs=1e-12)
    ok_neg, _ = is_positive(-1.0 * standard_phi())
    assert not ok_neg
    degenerate = KForm.from_dict(3, {(0, 1, 2): 1.0, (3, 4, 5): 1.0})
    ok_deg, _ = is_positive(degenerate)
    assert not ok_deg
    with pytest.raises(NotPositiveError):
        metric_from_phi(degenerate)


def test_g2_normalizations():
    # <phi, phi>_g = 7 and phi ^ psi = 7 vol_g for any positive phi
    rng = np.random.default_rng(25)
    for _ in range(5):
        phi = random_positive_phi(rng)
        s = G2Structure.from_phi(phi)
        assert inner(phi, phi, s.metric) == pytest.approx(7.0, abs=1e-10)
        top = wedge(phi, s.psi).comps[0]
        assert top == pytest.approx(7.0 * s.metric.sqrt_det, abs=1e-10)


def test_standard_psi_components():
    s = G2Structure.from_phi(standard_phi())
    want = KForm.from_dict(
        4,
        {
            (3, 4, 5, 6): 1.0,
            (1, 2, 5, 6): 1.0,
            (1, 2, 3, 4): 1.0,
            (0, 2, 4, 6): 1.0,
            (0, 2, 3, 5): -1.0,
            (0, 1, 4, 5): -1.0,
            (0, 1, 3, 6): -1.0,
        },
    )
    np.testing.assert_allclose(s.psi.comps, want.comps, rtol=0, atol=1e-13)


def test_tr_torsion_vanishes_for_standard_structure():
    s = G2Structure.from_phi(standard_phi())
    assert tr_torsion(s, KForm(4)) == 0.0


def test_seven_part_basis_interior_identity():
    # *(dx^a ^ phi) = -iota_{(dx^a)#} psi
    from g2lab import interior, sharp

    rng = np.random.default_rng(26)
    phi = random_positive_phi(rng)
    s = G2Structure.from_phi(phi)
    basis = seven_part_basis(s)
    eye = np.eye(7)
    for a in range(7):
        alpha = KForm(1, eye[a])
        direct = hodge(wedge(alpha, phi), s.metric)
        via_interior = -1.0 * interior(sharp(alpha, s.metric), s.psi)
        np.testing.assert_allclose(direct.comps, basis[a].comps, atol=1e-12)
        np.testing.assert_allclose(direct.comps, via_interior.comps, atol=1e-12)


def test_decompose_reconstruction_and_orthogonality():
    rng = np.random.default_rng(27)
    phi = random_positive_phi(rng)
    s = G2Structure.from_phi(phi)
    eta = KForm(3, rng.normal(size=35))
    d = decompose_137(eta, s)
    recon = d.p1 + d.p7 + d.p27
    np.testing.assert_allclose(recon.comps, eta.comps, rtol=0, atol=1e-11)
    assert inner(d.p1, d.p7, s.metric) == pytest.approx(0.0, abs=1e-10)
    assert inner(d.p1, d.p27, s.metric) == pytest.approx(0.0, abs=1e-10)
    assert inner(d.p7, d.p27, s.metric) == pytest.approx(0.0, abs=1e-10)


def test_decompose_projector_ranks():
    rng = np.random.default_rng(28)
    s = G2Structure.from_phi(random_positive_phi(rng))
    basis = np.eye(35)
    P1 = np.zeros((35, 35))
    P7 = np.zeros((35, 35))
    P27 = np.zeros((35, 35))
    for b in range(35):
        d = decompose_137(KForm(3, basis[b]), s)
        P1[:, b] = d.p1.comps
        P7[:, b] = d.p7.comps
        P27[:, b] = d.p27.comps
    for P, rank in [(P1, 1), (P7, 7), (P27, 27)]:
        np.testing.assert_allclose(P @ P, P, rtol=0, atol=1e-9)
        assert np.linalg.matrix_rank(P, tol=1e-8) == rank


def test_decompose_standard_phi_is_pure_type_one():
    s = G2Structure.from_phi(standard_phi())
    d = decompose_137(standard_phi(), s)
    np.testing.assert_allclose(d.p1.comps, standard_phi().comps, atol=1e-12)
    np.testing.assert_allclose(d.p7.comps, 0.0, atol=1e-12)
    np.testing.assert_allclose(d.p27.comps, 0.0, atol=1e-12)


def test_linearized_psi_fd_matches_algebraic():
    rng = np.random.default_rng(29)
    for _ in range(10):
        s = G2Structure.from_phi(random_positive_phi(rng))
        eta = KForm(3, rng.normal(size=35))
        fd = linearized_psi(eta, s, method="fd")
        alg = linearized_psi(eta, s, method="algebraic")
        np.testing.assert_allclose(fd.comps, alg.comps, rtol=0, atol=1e-8)


def test_linearized_psi_euler_relation():
    s = G2Structure.from_phi(standard_phi())
    got = linearized_psi(standard_phi(), s)
    np.testing.assert_allclose(got.comps, (4.0 / 3.0) * s.psi.comps, atol=1e-8)


def test_linearized_metric_euler_relation():
    s = G2Structure.from_phi(standard_phi())
    dg = linearized_metric(standard_phi(), s)
    np.testing.assert_allclose(dg, (2.0 / 3.0) * np.eye(7), rtol=0, atol=1e-8)


def test_inverse_linearized_psi_roundtrip():
    rng = np.random.default_rng(30)
    for _ in range(10):
        s = G2Structure.from_phi(random_positive_phi(rng))
        eta = KForm(3, rng.normal(size=35))
        chi = linearized_psi(eta, s, method="algebraic")
        back = inverse_linearized_psi(chi, s)
        np.testing.assert_allclose(back.comps, eta.comps, rtol=0, atol=1e-8)
        # and the other composition order, starting from a 4-form
        chi0 = KForm(4, rng.normal(size=35))
        eta0 = inverse_linearized_psi(chi0, s)
        again = linearized_psi(eta0, s, method="algebraic")
        np.testing.assert_allclose(again.comps, chi0.comps, rtol=0, atol=1e-8)


def test_field_cache_matches_pointwise():
    rng = np.random.default_rng(31)
    phis = np.stack([random_positive_phi(rng).comps for _ in range(6)])
    cache = build_field_cache(phis)
    for i in range(6):
        s = G2Structure.from_phi(KForm(3, phis[i]))
        np.testing.assert_allclose(cache.g[i], s.metric.g, atol=1e-13)
        np.testing.assert_allclose(cache.psi[i], s.psi.comps, atol=1e-12)
        np.testing.assert_allclose(cache.sqrt_det[i], s.metric.sqrt_det, atol=1e-13)


def test_field_cache_rejects_nonpositive_point():
    phis = np.stack([standard_phi().comps, -standard_phi().comps])
    with pytest.raises(NotPositiveError) as info:
        build_field_cache(phis)
    assert info.value.site == 1


def test_field_decompose_matches_pointwise():
    rng = np.random.default_rng(32)
    phis = np.stack([random_positive_phi(rng).comps for _ in range(5)])
    etas = rng.normal(size=(5, 35))
    cache = build_field_cache(phis)
    p1, p7, p27 = decompose_137_field(etas, cache)
    for i in range(5):
        s = G2Structure.from_phi(KForm(3, phis[i]))
        d = decompose_137(KForm(3, etas[i]), s)
        np.testing.assert_allclose(p1[i], d.p1.comps, rtol=0, atol=1e-11)
        np.testing.assert_allclose(p7[i], d.p7.comps, rtol=0, atol=1e-11)
        np.testing.assert_allclose(p27[i], d.p27.comps, rtol=0, atol=1e-11)


def test_field_linearized_psi_roundtrip_batched():
    rng = np.random.default_rng(33)
    phis = np.stack([random_positive_phi(rng).comps for _ in range(8)])
    cache = build_field_cache(phis)
    chis = rng.normal(size=(8, 35))
    etas = apply_inverse_linearized_psi_field(chis, cache)
    back = apply_linearized_psi_field(etas, cache)
    np.testing.assert_allclose(back, chis, rtol=0, atol=1e-10)
    for i in range(3):
        s = G2Structure.from_phi(KForm(3, phis[i]))
        want = inverse_linearized_psi(KForm(4, chis[i]), s)
        np.testing.assert_allclose(etas[i], want.comps, rtol=0, atol=1e-11)


def test_seven_basis_gram_is_four_g_inv():
    # the closed-form Gram used by the field decomposition must agree with
    # the direct wedge-to-top inner products of the basis forms
    from g2lab import _kernels as kn
    from g2lab.g2 import _seven_basis_field

    rng = np.random.default_rng(44)
    phis = np.stack([random_positive_phi(rng).comps for _ in range(20)])
    cache = build_field_cache(phis)
    basis, basis_w, gram = _seven_basis_field(cache)
    top = kn.wedge_comps(3, 4, basis[..., :, None, :], basis_w[..., None, :, :])[..., 0]
    direct = top / cache.sqrt_det[..., None, None]
    np.testing.assert_allclose(gram, direct, rtol=0, atol=1e-12)
