"""Null-form algebra: exact tests, sampling oracles, commutation."""

import numpy as np
import pytest
import sympy as sp

from nullwavelab.nullforms import (
    MINKOWSKI,
    AffineVectorField,
    BilinearForm,
    NullFormConsistencyError,
    TrilinearForm,
    bad_derivative_magnitude,
    bilinear_catalogue,
    boost,
    commute_form,
    eval_bilinear,
    eval_trilinear,
    form_from_text,
    form_to_text,
    gamma_set,
    good_derivative_magnitude,
    is_null_form,
    killing_set,
    killing_set_r,
    named_form,
    null_directions,
    nullframe_bound_witness,
    nullframe_constant,
    omega_set_r,
    rotation,
    rotation_generator_commutes,
    sampled_null_residual,
    scaling,
    translation,
    translations,
)

RNG = np.random.default_rng(20240811)


def dense_null_residual(form, n=10_000):
    """Dense sampling oracle over n random null vectors."""
    rng = np.random.default_rng(7)
    omega = rng.normal(size=(n, 3))
    omega /= np.linalg.norm(omega, axis=1, keepdims=True)
    xi = np.concatenate([np.ones((n, 1)), omega], axis=1)
    if form.rank == 2:
        vals = np.einsum("ab,na,nb->n", form.coeffs, xi, xi)
    else:
        vals = np.einsum("abc,na,nb,nc->n", form.coeffs, xi, xi, xi)
    return float(np.max(np.abs(vals)))


class TestIsNullForm:
    def test_minkowski_is_null(self):
        assert is_null_form(BilinearForm(MINKOWSKI))

    def test_dtdt_rejected_with_witness(self):
        g = named_form("dt-dt")
        assert not is_null_form(g)
        xi = np.array([1.0, 1.0, 0.0, 0.0])
        assert abs(xi @ g.coeffs @ xi) == pytest.approx(1.0)

    def test_q_forms_null(self):
        for a in range(4):
            for b in range(a + 1, 4):
                coeffs = np.zeros((4, 4))
                coeffs[a, b], coeffs[b, a] = 1.0, -1.0
                assert is_null_form(BilinearForm(coeffs))

    @pytest.mark.parametrize("seed", range(5))
    def test_symmetrized_metric_tensor_null(self, seed):
        # F with symmetric part m_(ab v_c): null by construction, confirmed
        # against the dense sampling oracle.
        rng = np.random.default_rng(seed)
        v = rng.normal(size=4)
        t = np.einsum("ab,c->abc", MINKOWSKI, v)
        sym = sum(t.transpose(p) for p in
                  [(0, 1, 2), (0, 2, 1), (1, 0, 2), (1, 2, 0), (2, 0, 1), (2, 1, 0)]) / 6.0
        f = TrilinearForm(sym)
        assert is_null_form(f)
        assert dense_null_residual(f) < 1e-12

    def test_exact_vs_sampled_agreement_large_ensemble(self):
        # the exact algebraic bilinear test and the 256-point sampling test
        # must agree on 1e5 random forms, null and non-null mixed in
        n = 100_000
        rng = np.random.default_rng(1234)
        forms = rng.normal(size=(n, 4, 4))
        # make a third of them exactly null: lam*m + antisymmetric part
        k = n // 3
        anti = rng.normal(size=(k, 4, 4))
        anti = anti - anti.transpose(0, 2, 1)
        lam = rng.normal(size=(k, 1, 1))
        forms[:k] = lam * MINKOWSKI + anti

        sym = 0.5 * (forms + forms.transpose(0, 2, 1))
        m_up = np.diag([-1.0, 1, 1, 1])
        lam_fit = 0.25 * np.einsum("ab,nab->n", m_up, sym)
        resid_exact = np.max(np.abs(sym - lam_fit[:, None, None] * MINKOWSKI), axis=(1, 2))
        scale = np.maximum(np.max(np.abs(forms), axis=(1, 2)), 1.0)
        exact_null = resid_exact <= 1e-12 * scale

        xi = null_directions(256)
        vals = np.einsum("nab,ka,kb->nk", forms, xi, xi)
        sampled_null = np.max(np.abs(vals), axis=1) <= 1e-12 * scale

        assert np.array_equal(exact_null, sampled_null)
        assert exact_null[:k].all()
        assert not exact_null[k:].any()


class TestEvaluation:
    def test_null_plane_wave_diagonal_vanishes(self):
        # G = m on a plane wave moving along a null direction
        omega = np.array([3.0, 4.0, 12.0]) / 13.0
        grad = np.array([1.0, *(-omega)]).reshape(4, 1)  # d(t - omega.x) phase gradient
        out = eval_bilinear(BilinearForm(MINKOWSKI), grad, grad)
        assert abs(out[0]) < 1e-14

    def test_time_gradient_gives_minus_one(self):
        grad = np.array([1.0, 0.0, 0.0, 0.0]).reshape(4, 1)
        out = eval_bilinear(BilinearForm(MINKOWSKI), grad, grad)
        assert out[0] == pytest.approx(-1.0, abs=1e-15)

    def test_against_naive_sixteen_term_sum(self):
        g = BilinearForm(RNG.normal(size=(4, 4)))
        d_eta = RNG.normal(size=(4, 7))
        d_zeta = RNG.normal(size=(4, 7))
        out = eval_bilinear(g, d_eta, d_zeta)
        signs = np.array([-1.0, 1, 1, 1])
        naive = np.zeros(7)
        for a in range(4):
            for b in range(4):
                naive += g.coeffs[a, b] * signs[a] * d_eta[a] * signs[b] * d_zeta[b]
        assert np.max(np.abs(out - naive)) < 1e-14

    def test_trilinear_zero_form(self):
        f = TrilinearForm(np.zeros((4, 4, 4)))
        out = eval_trilinear(f, RNG.normal(size=(4, 5)), RNG.normal(size=(4, 4, 5)))
        assert np.all(out == 0.0)

    def test_trilinear_polynomial_hand_contraction(self):
        # eta = 2t + 3x, zeta = x*y: constant gradient and Hessian, compare
        # against a symbolic contraction
        t, x, y, z = sp.symbols("t x y z")
        eta = 2 * t + 3 * x
        zeta = x * y
        coords = (t, x, y, z)
        signs = (-1, 1, 1, 1)
        coeffs = RNG.normal(size=(4, 4, 4))
        f = TrilinearForm(coeffs)
        expected = sum(
            f.coeffs[a, b, c] * signs[a] * signs[b] * signs[c]
            * sp.diff(eta, coords[a]) * sp.diff(zeta, coords[b], coords[c])
            for a in range(4) for b in range(4) for c in range(4)
        )
        d_eta = np.array([2.0, 3.0, 0.0, 0.0]).reshape(4, 1)
        hess = np.zeros((4, 4, 1))
        hess[1, 2, 0] = hess[2, 1, 0] = 1.0
        out = eval_trilinear(f, d_eta, hess)
        assert out[0] == pytest.approx(float(expected), rel=1e-13)

    def test_null_trilinear_on_null_plane_waves(self):
        f = named_form("dt-m")
        omega = np.array([1.0, 0.0, 0.0])
        grad = np.array([1.0, *(-omega)]).reshape(4, 1)
        hess = np.einsum("a,b->ab", grad[:, 0], grad[:, 0]).reshape(4, 4, 1)
        out = eval_trilinear(f, grad, hess)
        assert abs(out[0]) < 1e-14

    def test_bilinearity(self):
        g = BilinearForm(RNG.normal(size=(4, 4)))
        d1 = RNG.normal(size=(4, 11))
        d2 = RNG.normal(size=(4, 11))
        dz = RNG.normal(size=(4, 11))
        a = 1.7
        lhs = eval_bilinear(g, a * d1 + d2, dz)
        rhs = a * eval_bilinear(g, d1, dz) + eval_bilinear(g, d2, dz)
        assert np.max(np.abs(lhs - rhs)) < 1e-12

    def test_grid_mismatch_raises(self):
        g = BilinearForm(MINKOWSKI)
        with pytest.raises(ValueError):
            eval_bilinear(g, np.zeros((4, 3)), np.zeros((4, 5)))


def _symbolic_commutation_defect(form, vf, seed=0):
    """Finite-difference-free Lie oracle: the commutation defect
    V(G(d eta, d zeta)) - G(dV eta, d zeta) - G(d eta, dV zeta) evaluated
    exactly on random quadratic polynomials at random points."""
    t, x, y, z = sp.symbols("t x y z")
    coords = (t, x, y, z)
    rng = np.random.default_rng(seed)
    signs = (-1, 1, 1, 1)

    def rand_poly():
        c1 = rng.normal(size=4)
        c2 = rng.normal(size=(4, 4))
        p = sum(sp.Rational(1) * c1[i] * coords[i] for i in range(4))
        p += sum(c2[i, j] * coords[i] * coords[j] for i in range(4) for j in range(4))
        return p

    eta, zeta = rand_poly(), rand_poly()
    v_expr = [
        sum(vf.linear[mu, nu] * coords[nu] for nu in range(4)) + vf.const[mu]
        for mu in range(4)
    ]

    def vfield(expr):
        return sum(v_expr[mu] * sp.diff(expr, coords[mu]) for mu in range(4))

    def contract(p, q):
        if form.rank == 2:
            return sum(
                form.coeffs[a, b] * signs[a] * signs[b]
                * sp.diff(p, coords[a]) * sp.diff(q, coords[b])
                for a in range(4) for b in range(4)
            )
        return sum(
            form.coeffs[a, b, c] * signs[a] * signs[b] * signs[c]
            * sp.diff(p, coords[a]) * sp.diff(q, coords[b], coords[c])
            for a in range(4) for b in range(4) for c in range(4)
        )

    defect = sp.expand(
        vfield(contract(eta, zeta)) - contract(vfield(eta), zeta) - contract(eta, vfield(zeta))
    )
    pts = rng.normal(size=(4, 4))
    return eta, zeta, defect, coords, pts


class TestCommutation:
    def test_translation_zero_correction(self):
        g = BilinearForm(MINKOWSKI)
        for vf in translations():
            corr = commute_form(g, vf)
            assert corr.scale() == 0.0

    def test_boost_on_metric_is_killing(self):
        corr = commute_form(BilinearForm(MINKOWSKI), boost(2))
        assert corr.scale() < 1e-15

    def test_scaling_correction_proportional_to_metric(self):
        corr = commute_form(BilinearForm(MINKOWSKI), scaling())
        assert np.allclose(corr.coeffs, -2.0 * MINKOWSKI)

    @pytest.mark.parametrize("rank", [2, 3])
    def test_correction_matches_symbolic_lie_oracle(self, rank):
        rng = np.random.default_rng(42)
        if rank == 2:
            lam = 0.7
            anti = rng.normal(size=(4, 4))
            form = BilinearForm(lam * MINKOWSKI + anti - anti.T)
        else:
            form = named_form("dt-m")
        vf = boost(1, center=(5.0, 0.0, 0.0))
        eta, zeta, defect, coords, pts = _symbolic_commutation_defect(form, vf)
        corr = commute_form(form, vf)
        signs = (-1, 1, 1, 1)
        for p in pts:
            subs = dict(zip(coords, [float(v) for v in p]))
            if rank == 2:
                expected = sum(
                    corr.coeffs[a, b] * signs[a] * signs[b]
                    * float(sp.diff(eta, coords[a]).subs(subs))
                    * float(sp.diff(zeta, coords[b]).subs(subs))
                    for a in range(4) for b in range(4)
                )
            else:
                expected = sum(
                    corr.coeffs[a, b, c] * signs[a] * signs[b] * signs[c]
                    * float(sp.diff(eta, coords[a]).subs(subs))
                    * float(sp.diff(zeta, coords[b], coords[c]).subs(subs))
                    for a in range(4) for b in range(4) for c in range(4)
                )
            assert float(defect.subs(subs)) == pytest.approx(expected, rel=1e-9, abs=1e-9)

    def test_r_weighted_rotation_correction_scales_like_inverse_r(self):
        g = BilinearForm(RNG.normal(size=(4, 4)))
        base = commute_form(g, rotation(1, 2, center=(3.0, 0, 0)))
        for r_scale in (8.0, 16.0, 32.0):
            weighted = commute_form(g, rotation(1, 2, center=(3.0, 0, 0)).scaled(1.0 / r_scale))
            assert np.allclose(weighted.coeffs, base.coeffs / r_scale, atol=1e-15)

    def test_full_catalogue_product_stays_null(self):
        # every catalogue null form x every catalogue vector field
        forms = [f for f in bilinear_catalogue().values() if f.is_null]
        forms += [f for f in __import__("nullwavelab.nullforms", fromlist=["trilinear_catalogue"]).trilinear_catalogue().values() if f.is_null]
        r = 16.0
        centers = [(-r, 0.0, 0.0), (r, 0.0, 0.0)]
        fields = killing_set() + killing_set_r(r)
        for w in centers:
            fields += killing_set(w) + killing_set_r(r, w) + gamma_set(r, w) + omega_set_r(r, w)
        for form in forms:
            for vf in fields:
                corr = commute_form(form, vf)  # raises on consistency failure
                assert corr.is_null or corr.scale() == 0.0

    def test_nonnull_commutation_does_not_assert(self):
        corr = commute_form(named_form("dt-dt"), boost(1))
        assert corr.scale() > 0


class TestWitness:
    def test_zero_gradient_gives_zero_sides(self):
        lhs, rhs = nullframe_bound_witness(
            BilinearForm(MINKOWSKI), np.array([5.0, 2.0, 1.0, 0.5]),
            (0.0, 0.0, 0.0), np.zeros(4), RNG.normal(size=4))
        assert lhs == 0.0 and rhs == 0.0

    def test_du_aligned_diagonal_vanishes(self):
        point = np.array([5.0, 2.0, 1.0, 0.5])
        center = (0.0, 0.0, 0.0)
        rel = point[1:]
        rad = rel / np.linalg.norm(rel)
        du = np.array([1.0, *(-rad)])
        lhs, rhs = nullframe_bound_witness(BilinearForm(MINKOWSKI), point, center, du, du)
        assert abs(lhs) < 1e-14
        assert bad_derivative_magnitude(du) > 0

    def test_radial_outgoing_bound(self):
        # zeta = eta outgoing radial: ratio below the pointwise constant
        g = BilinearForm(MINKOWSKI)
        center = (0.0, 0.0, 0.0)
        rng = np.random.default_rng(3)
        worst = 0.0
        for _ in range(200):
            p = np.array([10.0, *rng.normal(size=3) * 4])
            rel = p[1:]
            r = np.linalg.norm(rel)
            if r < 0.5:
                continue
            rad = rel / r
            grad = np.array([1.0, *(-rad)]) * rng.normal() + 0.05 * rng.normal(size=4)
            lhs, rhs = nullframe_bound_witness(g, p, center, grad, grad)
            c = nullframe_constant(g, p, center)
            if rhs > 0:
                assert lhs <= c * rhs * (1 + 1e-12)
                worst = max(worst, lhs / rhs)
        assert np.isfinite(worst)

    def test_random_gradients_respect_constant(self):
        rng = np.random.default_rng(11)
        for nm in ("m", "q-tx", "q-yz"):
            form = named_form(nm)
            for _ in range(100):
                p = np.array([8.0, *rng.normal(size=3) * 5])
                if np.linalg.norm(p[1:]) < 0.3:
                    continue
                gz, ge = rng.normal(size=4), rng.normal(size=4)
                lhs, rhs = nullframe_bound_witness(form, p, (0, 0, 0), gz, ge)
                c = nullframe_constant(form, p, (0, 0, 0))
                assert lhs <= c * rhs + 1e-14


class TestSerialization:
    def test_roundtrip_bilinear(self):
        g = BilinearForm(RNG.normal(size=(4, 4)))
        back = form_from_text(form_to_text(g))
        assert np.array_equal(back.coeffs, g.coeffs)

    def test_roundtrip_trilinear(self):
        f = TrilinearForm(RNG.normal(size=(4, 4, 4)))
        back = form_from_text(form_to_text(f))
        assert np.array_equal(back.coeffs, f.coeffs)

    def test_bad_header(self):
        with pytest.raises(ValueError):
            form_from_text("quadrilinear\n" + " ".join(["0"] * 16))

    def test_wrong_count(self):
        with pytest.raises(ValueError):
            form_from_text("bilinear\n1 2 3")


class TestCatalogueProperties:
    def test_trilinear_symmetrized_on_construction(self):
        f = TrilinearForm(RNG.normal(size=(4, 4, 4)))
        assert np.array_equal(f.coeffs, f.coeffs.swapaxes(1, 2))

    def test_vector_field_components(self):
        vf = rotation(1, 2, center=(2.0, 0.0, 0.0))
        # (x - 2) d_y - y d_x at (t, x, y, z) = (0, 3, 4, 0)
        comps = vf.components_at(np.array([0.0, 3.0, 4.0, 0.0]))
        assert np.allclose(comps, [0.0, -4.0, 1.0, 0.0])

    def test_gamma_set_reproduces_weighted_generators(self):
        r = 8.0
        fields = gamma_set(r, (-r, 0, 0))
        names = [f.name for f in fields]
        assert "rot_yz" in names and "d_t" in names
        weighted = [f for f in fields if f.name.endswith("/R")]
        assert len(weighted) == 7  # 6 Lorentz + scaling

    def test_axisym_invariance_detector(self):
        assert rotation_generator_commutes(named_form("m"))
        assert rotation_generator_commutes(named_form("dt-m"))
        assert not rotation_generator_commutes(named_form("q-ty"))
