import itertools
import math
from fractions import Fraction

import numpy as np
import pytest

from npbe_uq import smolyak
from npbe_uq.errors import DomainError, IncompleteStoreError


def brute_force_knots(rule, w, N):
    """Union of admissible tensor grids with float dedup, for cross-checking."""
    pts = set()
    for i in smolyak.index_set(rule, w, N):
        grids = [smolyak.cc_nodes(smolyak.growth(ik)) for ik in i]
        for combo in itertools.product(*grids):
            pts.add(tuple(round(c, 12) for c in combo))
    return pts


class TestGrowthAndDegrees:
    def test_growth_values(self):
        assert [smolyak.growth(i) for i in range(6)] == [0, 1, 3, 5, 9, 17]

    def test_growth_negative_rejected(self):
        with pytest.raises(DomainError):
            smolyak.growth(-1)

    def test_f_degree_table(self):
        assert [smolyak.f_degree(p) for p in range(6)] == [0, 1, 1, 2, 2, 3]


class TestNodes:
    def test_m1_is_origin(self):
        assert np.array_equal(smolyak.cc_nodes(1), [0.0])

    def test_m3(self):
        assert np.allclose(smolyak.cc_nodes(3), [-1.0, 0.0, 1.0], atol=0)

    def test_m5(self):
        s = math.sqrt(2.0) / 2.0
        assert np.allclose(smolyak.cc_nodes(5), [-1.0, -s, 0.0, s, 1.0], atol=1e-15)

    def test_even_m_rejected(self):
        with pytest.raises(DomainError):
            smolyak.cc_nodes(4)

    def test_keys_are_exactly_nested(self):
        for m_small, m_big in ((1, 3), (3, 5), (5, 9), (9, 17)):
            assert set(smolyak.node_keys(m_small)) <= set(smolyak.node_keys(m_big))


class TestIndexSets:
    def test_1d_w2(self):
        assert smolyak.index_set("SM", 2, 1) == [(1,), (2,), (3,)]
        degs = smolyak.polynomial_index_set("SM", 2, 1)
        assert max(p[0] for p in degs) == smolyak.growth(3) - 1 == 4

    def test_2d_w0_single(self):
        assert smolyak.index_set("SM", 0, 2) == [(1, 1)]

    def test_poly_set_matches_f_table(self):
        for N in (1, 2, 3):
            for w in range(5):
                got = smolyak.polynomial_index_set("SM", w, N)
                expect = {p for p in itertools.product(range(17), repeat=N)
                          if sum(smolyak.f_degree(pn) for pn in p) <= w}
                assert got == expect

    def test_td_and_hc_sets(self):
        # exactness sets are unions of tensor degree boxes over admissible levels
        td = smolyak.polynomial_index_set("TD", 2, 2)
        assert (2, 0) in td and (0, 2) in td and (1, 1) not in td
        hc = smolyak.polynomial_index_set("HC", 4, 2)
        assert (4, 0) in hc and (1, 1) not in hc and (2, 2) not in hc

    def test_unknown_rule(self):
        with pytest.raises(DomainError):
            smolyak.index_set("XX", 1, 1)


class TestPlans:
    def test_2d_w1_cross(self):
        plan = smolyak.build_plan("SM", 1, 2)
        got = {tuple(v) for v in np.round(plan.knot_values, 12)}
        assert got == {(0.0, 0.0), (1.0, 0.0), (-1.0, 0.0), (0.0, 1.0), (0.0, -1.0)}

    def test_1d_collapse_to_cc(self):
        plan = smolyak.build_plan("SM", 2, 1)
        assert np.allclose(plan.knot_values.ravel(), smolyak.cc_nodes(5), atol=0)

    def test_3d_w0_origin(self):
        plan = smolyak.build_plan("SM", 0, 3)
        assert plan.n_knots == 1
        assert np.array_equal(plan.knot_values, [[0.0, 0.0, 0.0]])

    def test_knot_counts_2d(self):
        counts = [smolyak.build_plan("SM", w, 2).n_knots for w in range(7)]
        assert counts == [1, 5, 13, 29, 65, 145, 321]

    def test_counts_match_brute_force(self):
        for rule in smolyak.RULES:
            for N in (1, 2, 3):
                for w in range(5):
                    plan = smolyak.build_plan(rule, w, N)
                    assert plan.n_knots == len(brute_force_knots(rule, w, N))

    def test_nesting_exact(self):
        for N in (1, 2, 3):
            for w in range(4):
                lo = set(smolyak.build_plan("SM", w, N).knots)
                hi = set(smolyak.build_plan("SM", w + 1, N).knots)
                assert lo <= hi

    def test_combination_coefficients_sum_to_one(self):
        for rule in smolyak.RULES:
            for N in (1, 2, 3):
                for w in range(5):
                    plan = smolyak.build_plan(rule, w, N)
                    assert sum(c for _, c in plan.terms) == 1


class TestInterpolation:
    def test_collocation_property(self):
        rng = np.random.default_rng(0)
        for N, w in ((1, 3), (2, 2), (3, 1)):
            plan = smolyak.build_plan("SM", w, N)
            store = smolyak.SurplusStore()
            vals = rng.standard_normal(plan.n_knots)
            for key, v in zip(plan.knots, vals):
                store.set(key, float(v))
            got = smolyak.interpolate(plan, store, plan.knot_values)
            assert np.max(np.abs(got - vals) / np.maximum(1e-30, np.abs(vals))) <= 1e-12

    def test_missing_knot_raises(self):
        plan = smolyak.build_plan("SM", 1, 2)
        store = smolyak.SurplusStore()
        store.set(plan.knots[0], 1.0)
        with pytest.raises(IncompleteStoreError):
            smolyak.interpolate(plan, store, np.array([0.3, 0.3]))

    def test_td_exactness_for_y1sq_y2sq(self):
        plan = smolyak.build_plan("TD", 4, 2)
        store = smolyak.evaluate_plan(plan, lambda y: y[0] ** 2 * y[1] ** 2)
        rng = np.random.default_rng(1)
        pts = rng.uniform(-1, 1, size=(30, 2))
        got = smolyak.interpolate(plan, store, pts)
        assert np.max(np.abs(got - pts[:, 0] ** 2 * pts[:, 1] ** 2)) <= 1e-10

    def test_1d_matches_full_lagrange(self):
        w = 3
        m = smolyak.growth(w + 1)
        plan = smolyak.build_plan("SM", w, 1)
        fn = lambda y: math.sin(2.5 * y[0])
        store = smolyak.evaluate_plan(plan, fn)
        rng = np.random.default_rng(2)
        pts = rng.uniform(-1, 1, size=20)
        nodes = smolyak.cc_nodes(m)
        fvals = np.array([fn([x]) for x in nodes])
        L = smolyak.lagrange_eval_matrix(m, pts)
        expect = L @ fvals
        got = smolyak.interpolate(plan, store, pts[:, None])
        assert np.max(np.abs(got - expect)) <= 1e-12

    def test_monomial_exactness_suite(self):
        rng = np.random.default_rng(3)
        for N in (1, 2, 3):
            pts = rng.uniform(-1, 1, size=(20, N))
            for w in range(5):
                plan = smolyak.build_plan("SM", w, N)
                for p in sorted(smolyak.polynomial_index_set("SM", w, N)):
                    store = smolyak.evaluate_plan(
                        plan, lambda y, p=p: float(np.prod(np.asarray(y) ** p)))
                    got = smolyak.interpolate(plan, store, pts)
                    expect = np.prod(pts**p, axis=-1)
                    assert np.max(np.abs(got - expect)) <= 1e-10, (N, w, p)

    def test_complex_points(self):
        plan = smolyak.build_plan("SM", 3, 1)
        store = smolyak.evaluate_plan(plan, lambda y: y[0] ** 3)
        z = np.array([[0.2 + 0.1j]])
        got = smolyak.interpolate(plan, store, z)
        assert abs(got[0] - (0.2 + 0.1j) ** 3) <= 1e-12

    def test_dimension_mismatch(self):
        plan = smolyak.build_plan("SM", 1, 2)
        store = smolyak.evaluate_plan(plan, lambda y: 0.0)
        with pytest.raises(DomainError):
            smolyak.interpolate(plan, store, np.zeros(3))


class TestQuadrature:
    def test_constant_integrates_to_itself(self):
        for rule in smolyak.RULES:
            for N, w in ((1, 4), (2, 2), (3, 1)):
                plan = smolyak.build_plan(rule, w, N)
                store = smolyak.evaluate_plan(plan, lambda y: 2.75)
                assert abs(smolyak.integrate(plan, store) - 2.75) <= 1e-13

    def test_second_moment_one_third(self):
        for rule in smolyak.RULES:
            for N, w in ((1, 2), (1, 4), (2, 2), (2, 4), (3, 3)):
                plan = smolyak.build_plan(rule, w, N)
                if max(smolyak.growth(i[0]) for i, _ in plan.terms) < 3:
                    continue
                store = smolyak.evaluate_plan(plan, lambda y: y[0] ** 2)
                assert abs(smolyak.integrate(plan, store) - 1.0 / 3.0) <= 1e-12

    def test_odd_function_integrates_to_zero(self):
        plan = smolyak.build_plan("SM", 3, 2)
        store = smolyak.evaluate_plan(plan, lambda y: y[0] * y[1])
        assert abs(smolyak.integrate(plan, store)) <= 1e-13

    def test_quadrature_equals_integral_of_interpolant(self):
        # Gauss-Legendre of the interpolant, exact for its polynomial degree
        gx, gw = np.polynomial.legendre.leggauss(48)
        gw = gw / 2.0  # uniform probability density on [-1, 1]
        for w in range(4):
            plan = smolyak.build_plan("SM", w, 2)
            store = smolyak.evaluate_plan(
                plan, lambda y: math.exp(0.4 * y[0] - 0.3 * y[1]))
            pts = np.array(list(itertools.product(gx, gx)))
            vals = smolyak.interpolate(plan, store, pts).reshape(48, 48)
            dense = float(gw @ vals @ gw)
            assert abs(smolyak.integrate(plan, store) - dense) <= 1e-8

    def test_unsupported_density(self):
        with pytest.raises(DomainError):
            smolyak._quadrature_weights(3, density="gauss")


class TestAnalyticDecay:
    def test_sup_error_monotone_in_w(self):
        N = 2

        def nu(y):
            return 1.0 / (2.0 + 0.5 * np.sum(np.asarray(y), axis=-1) / N)

        rng = np.random.default_rng(4)
        pts = rng.uniform(-1, 1, size=(500, N))
        exact = nu(pts)
        errs = []
        for w in range(1, 5):
            plan = smolyak.build_plan("SM", w, N)
            store = smolyak.evaluate_plan(plan, lambda y: float(nu(y)))
            errs.append(float(np.max(np.abs(smolyak.interpolate(plan, store, pts) - exact))))
        assert all(errs[i] > errs[i + 1] for i in range(len(errs) - 1))


class TestManifest:
    def test_round_trip(self):
        plan = smolyak.build_plan("SM", 2, 2)
        text = smolyak.export_manifest(plan)
        back = smolyak.import_manifest(text)
        assert back.knots == plan.knots
        assert back.terms == plan.terms

    def test_tampered_manifest_rejected(self):
        plan = smolyak.build_plan("SM", 1, 2)
        text = smolyak.export_manifest(plan)
        lines = text.splitlines()
        lines[4] = lines[4].replace("1/2", "1/3", 1)
        with pytest.raises(DomainError):
            smolyak.import_manifest("\n".join(lines))

    def test_store_reuse_across_plans(self):
        # nested knots keep their canonical keys, so values carry over
        small = smolyak.build_plan("SM", 1, 2)
        big = smolyak.build_plan("SM", 3, 2)
        calls = []

        def fn(y):
            calls.append(tuple(y))
            return float(np.sum(y))

        store = smolyak.evaluate_plan(small, fn)
        n_small = len(calls)
        smolyak.evaluate_plan(big, fn, store)
        assert n_small == small.n_knots
        assert len(calls) == big.n_knots
