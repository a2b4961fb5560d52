from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import binary_entropy, brute_force_lagrangian, lagrangian_of

from rdstats.dataset import Site, uniform_distribution
from rdstats.geodesy import GREAT_CIRCLE, RHUMB, GeoPoint
from rdstats.rd_engine import (Codebook, blahut_arimoto, build_distortion_matrix, evaluate_fixed)


def one_site(ori=90.0):
    return uniform_distribution([Site("s", "", GeoPoint(0, 0), ori)])


class TestDistortionMatrix:
    @pytest.mark.parametrize("model", [GREAT_CIRCLE, RHUMB])
    def test_examples(self, model):
        cb = Codebook((GeoPoint(0, 10), GeoPoint(10, 0), GeoPoint(0, 0)))
        d = build_distortion_matrix(one_site(), cb, model).entries
        assert d[0, 0] == pytest.approx(0.0, abs=1e-15)
        assert d[0, 1] == pytest.approx(1.0, abs=1e-12)
        assert d[0, 2] == 2.0

    def test_codebook_invariants(self):
        with pytest.raises(Exception):
            Codebook(())
        with pytest.raises(ValueError):
            Codebook((GeoPoint(1, 1), GeoPoint(1, 1)))

    def test_pole_site_rhumb(self):
        src = uniform_distribution([Site("p", "", GeoPoint(90, 0), 0.0)])
        d = build_distortion_matrix(src, Codebook((GeoPoint(10, 10),)), RHUMB).entries
        assert d[0, 0] == 2.0


class TestBlahutArimoto:
    def test_symmetric_binary(self):
        s = -math.log(3.0)
        c = blahut_arimoto([0.5, 0.5], np.array([[0.0, 1.0], [1.0, 0.0]]), s, tol=1e-14)
        assert c.mean_distortion == pytest.approx(0.25, abs=1e-9)
        assert c.rate_nats == pytest.approx(math.log(2) - binary_entropy(0.25), abs=1e-9)
        assert c.rate_nats == pytest.approx(0.13081, abs=1e-5)

    def test_zero_slope(self):
        d = np.array([[0.1, 0.5], [0.3, 0.2], [0.4, 0.1]])
        p = np.array([0.5, 0.3, 0.2])
        c = blahut_arimoto(p, d, 0.0)
        assert c.rate_nats == 0.0
        assert np.allclose(c.conditional, c.marginal[None, :])
        assert c.mean_distortion == pytest.approx(min(p @ d))

    def test_single_point(self):
        p = np.array([0.2, 0.8])
        d = np.array([[0.3], [0.1]])
        c = blahut_arimoto(p, d, -50.0)
        assert c.rate_nats == pytest.approx(0.0, abs=1e-15)
        assert c.mean_distortion == pytest.approx(0.2 * 0.3 + 0.8 * 0.1)

    def test_rejects_positive_slope(self):
        with pytest.raises(ValueError):
            blahut_arimoto([1.0], np.zeros((1, 1)), 0.5)

    def test_large_slope_no_underflow(self):
        rng = np.random.default_rng(0)
        d = rng.uniform(1.5, 2.0, size=(5, 3))
        c = blahut_arimoto(np.full(5, 0.2), d, -2000.0)
        assert np.all(np.isfinite(c.conditional))
        assert np.allclose(c.conditional.sum(axis=1), 1.0, atol=1e-10)

    def test_dense_conditional_grid_two_by_two(self):
        p = np.array([0.3, 0.7])
        d = np.array([[0.2, 1.1], [0.9, 0.05]])
        s = -2.5
        c = blahut_arimoto(p, d, s, tol=1e-14)
        grid = np.linspace(0, 1, 401)
        best = math.inf
        for a in grid:
            for b in grid:
                cond = np.array([[a, 1 - a], [b, 1 - b]])
                best = min(best, lagrangian_of(p, cond, d, s))
        assert c.lagrangian <= best + 1e-12
        assert c.lagrangian == pytest.approx(best, abs=1e-3)

    def test_matches_brute_force(self):
        rng = np.random.default_rng(20240101)
        for _ in range(20):
            n, m = rng.integers(1, 5), rng.integers(1, 4)
            p = rng.dirichlet(np.ones(n))
            d = rng.uniform(0, 2, size=(n, m))
            s = -rng.uniform(0.0, 50.0)
            c = blahut_arimoto(p, d, s, tol=1e-13)
            assert c.lagrangian == pytest.approx(brute_force_lagrangian(p, d, s), abs=1e-3)


instances = st.tuples(st.integers(1, 6), st.integers(1, 4), st.integers(0, 2**32 - 1),
                      st.floats(-100, -0.01))


@settings(max_examples=60, deadline=None)
@given(instances)
def test_coupling_invariants(inst):
    n, m, seed, s = inst
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(n))
    d = rng.uniform(0, 2, size=(n, m))
    c = blahut_arimoto(p, d, s, tol=1e-10)
    assert np.allclose(c.conditional.sum(axis=1), 1.0, atol=1e-10)
    assert np.allclose(c.marginal, p @ c.conditional, atol=1e-10)
    assert c.rate_nats >= 0
    assert 0 <= c.mean_distortion <= 2
    assert c.mean_distortion == pytest.approx(float(p @ np.sum(c.conditional * d, axis=1)))
    assert c.rate_nats == pytest.approx(lagrangian_of(p, c.conditional, d, 0.0), abs=1e-12)
    hist = np.array(c.history)
    assert np.all(np.diff(hist) <= 1e-12)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-60, -0.1), st.floats(-60, -0.1))
def test_monotone_in_slope(seed, s1, s2):
    s1, s2 = min(s1, s2), max(s1, s2)
    rng = np.random.default_rng(seed)
    p = rng.dirichlet(np.ones(4))
    d = rng.uniform(0, 2, size=(4, 3))
    c1 = blahut_arimoto(p, d, s1, tol=1e-13)
    c2 = blahut_arimoto(p, d, s2, tol=1e-13)
    assert c1.mean_distortion <= c2.mean_distortion + 1e-6
    assert c1.rate_nats >= c2.rate_nats - 1e-6


class TestEvaluateFixed:
    def test_one_point(self):
        p = np.array([0.25, 0.75])
        d = np.array([[0.4], [0.2]])
        h = evaluate_fixed(p, d)
        assert h.mean_distortion == pytest.approx(0.25)
        assert h.rate_nats == 0.0

    def test_strict_assignment(self):
        p = np.array([0.1, 0.2, 0.7])
        d = np.array([[0.1, 0.5], [0.6, 0.2], [0.0, 0.3]])
        h = evaluate_fixed(p, d)
        assert h.assignment.tolist() == [0, 1, 0]
        assert h.weights.tolist() == pytest.approx([0.8, 0.2])

    def test_tie_goes_to_lower_index(self):
        h = evaluate_fixed([1.0], np.array([[0.3, 0.3]]))
        assert h.assignment.tolist() == [0]
        assert h.weights.tolist() == [1.0, 0.0]
