import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

import gaquant.asymptotics as asy
from gaquant.asymptotics import (
    a_v_constant,
    asymptotic_report,
    bahadur_residual,
    bias_constant,
    optimal_h,
    optimal_h_g,
    partial_q,
    q0_density,
    q0_range,
    sigma_u_squared,
)
from gaquant.core import Box, ConfigError, EstimationError, QuantileLevel, multi_index_set
from gaquant.dgp import (
    Component,
    ErrorLaw,
    Link,
    TrueModel,
    identify_normalize,
    simulate,
)
from gaquant.marginals import WeightFn

from conftest import fit_config, linear_model, sine_bump_model

BASIS = multi_index_set(2, 2)
BOX = Box([0.1, 0.1], [0.9, 0.9])


def _design(entry):
    d = entry["design"]
    model = TrueModel.from_dict(d["model"])
    box = Box(d["box"]["lower"], d["box"]["upper"])
    ident = identify_normalize(model, WeightFn(box.lower[0], box.upper[0]), d["anchors"])
    return d, ident, box


class TestBandwidthRules:
    def test_optimal_h(self):
        assert optimal_h(1024, 2) == pytest.approx(0.25, rel=1e-14)
        assert optimal_h(32, 1) == pytest.approx(32 ** (-1 / 3))
        assert optimal_h(500, 2, 2.0) == pytest.approx(2 * optimal_h(500, 2))
        with pytest.raises(ConfigError):
            optimal_h(1, 2)

    def test_optimal_h_g(self):
        lvl = QuantileLevel.from_alpha(0.5)
        assert optimal_h_g(100, 1.0, 1.0, lvl) == pytest.approx(0.25**0.2 * 100**-0.2)
        assert optimal_h_g(3200, 1.3, 0.7, lvl) == pytest.approx(
            optimal_h_g(100, 1.3, 0.7, lvl) / 2, rel=1e-12)
        assert optimal_h_g(50, 2.0, 0.3, 0.2) == pytest.approx(optimal_h_g(50, 2.0, 0.3, 0.8))
        with pytest.raises(EstimationError, match="bias-free"):
            optimal_h_g(100, 0.0, 1.0, lvl)

    @given(st.integers(2, 10**6), st.integers(2, 3))
    def test_power_law(self, n, p):
        assert np.log(optimal_h(n, p)) == pytest.approx(-np.log(n) / (2 * p + 1), abs=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.integers(0, 2), min_size=2, max_size=2).filter(lambda v: 0 < sum(v) <= 2),
       st.floats(0.15, 0.85), st.floats(0.15, 0.85))
def test_partial_q_matches_differences(lam, a, b):
    m = TrueModel(Link("exp", pre_scale=0.5),
                  (Component("sine_bump", {"b": 0.4}), Component("cubic", {"c": 0.3})))
    x, eps = np.array([[a, b]]), 1e-4
    k = 0 if lam[0] else 1
    lower = list(lam)
    lower[k] -= 1
    up, down = x.copy(), x.copy()
    up[0, k] += eps
    down[0, k] -= eps
    fd = (partial_q(m, up, lower) - partial_q(m, down, lower)) / (2 * eps)
    assert partial_q(m, x, lam)[0] == pytest.approx(fd[0], rel=1e-6, abs=1e-8)


class TestVariance:
    def test_matches_independent_quadrature(self, frozen):
        entry = frozen["variance_linear"]
        d, ident, box = _design(entry)
        value = sigma_u_squared(ident, d["u"], d["x_u"], BASIS, box, d["anchors"])
        assert value == pytest.approx(entry["value"], rel=1e-8)

    def test_level_enters_only_through_prefactor(self):
        vals = []
        for tau in (0.25, 0.75):
            m = sine_bump_model(rho=0.3)
            m = TrueModel(m.link, m.components, m.error, m.phi, m.rho, tau)
            ident = identify_normalize(m, WeightFn(0.1, 0.9), (0.3, 0.3))
            g0 = m.error.pdf(0.0, tau)
            vals.append(sigma_u_squared(ident, 2, 0.6, BASIS, BOX, (0.3, 0.3))
                        * g0**2 / (tau * (1 - tau)))
        assert vals[0] == pytest.approx(vals[1], rel=1e-10)

    def test_noiseless_model_has_no_variance(self):
        ident = identify_normalize(linear_model(), WeightFn(0.1, 0.9), (0.5, 0.5))
        assert sigma_u_squared(ident, 2, 0.7, BASIS, BOX, (0.5, 0.5)) == 0.0

    def test_doubling_the_density_halves_the_variance(self, monkeypatch):
        ident = identify_normalize(sine_bump_model(rho=0.3), WeightFn(0.1, 0.9), (0.3, 0.3))
        base = [sigma_u_squared(ident, u, 0.6, BASIS, BOX, (0.3, 0.3)) for u in (1, 2)]
        orig = asy.copula_density
        monkeypatch.setattr(asy, "copula_density", lambda *a, **k: 2.0 * orig(*a, **k))
        doubled = [sigma_u_squared(ident, u, 0.6, BASIS, BOX, (0.3, 0.3)) for u in (1, 2)]
        assert np.allclose(doubled, np.array(base) / 2.0, rtol=1e-12)

    def test_symmetric_design_gives_equal_components(self):
        ident = identify_normalize(sine_bump_model(), WeightFn(0.1, 0.9), (0.3, 0.3))
        s1 = sigma_u_squared(ident, 1, 0.5, BASIS, BOX, (0.3, 0.3))
        s2 = sigma_u_squared(ident, 2, 0.5, BASIS, BOX, (0.3, 0.3))
        assert s1 == pytest.approx(s2, rel=1e-10)

    def test_anchor_term_keeps_variance_positive_at_anchor(self):
        ident = identify_normalize(sine_bump_model(), WeightFn(0.1, 0.9), (0.3, 0.3))
        assert sigma_u_squared(ident, 2, 0.3, BASIS, BOX, (0.3, 0.3)) > 0


class TestBias:
    def test_matches_independent_oracle(self, frozen):
        entry = frozen["bias_sine_bump"]
        d, ident, box = _design(entry)
        est, se = bias_constant(ident, d["u"], BASIS, box, d["anchors"], x_u=d["x_u"])
        assert se == 0.0
        assert est == pytest.approx(entry["value"], rel=1e-8)

    def test_linear_model_is_bias_free(self):
        ident = identify_normalize(linear_model(ErrorLaw("gaussian", 0.1), rho=0.4),
                                   WeightFn(0.1, 0.9), (0.5, 0.5))
        for u in (1, 2):
            assert bias_constant(ident, u, BASIS, BOX, (0.5, 0.5)) == (0.0, 0.0)

    def test_flat_density_is_bias_free(self):
        ident = identify_normalize(sine_bump_model(rho=0.0), WeightFn(0.1, 0.9), (0.3, 0.3))
        est, _ = bias_constant(ident, 2, BASIS, BOX, (0.3, 0.3))
        assert est == pytest.approx(0.0, abs=1e-14)

    def test_d3_uses_monte_carlo(self):
        m = TrueModel(Link(), tuple(Component("sine_bump", {"b": 0.5}) for _ in range(3)),
                      ErrorLaw("gaussian", 0.1), rho=0.3)
        box = Box([0.1] * 3, [0.9] * 3)
        ident = identify_normalize(m, WeightFn(0.1, 0.9), (0.3, 0.3, 0.3))
        est, se = bias_constant(ident, 2, multi_index_set(3, 2), box, (0.3, 0.3, 0.3),
                                draws=400, nodes=8)
        assert se > 0 and np.isfinite(est)


class TestLinkBias:
    def test_density_matches_oracle(self, frozen):
        entry = frozen["link_bias_exp"]
        m = TrueModel.from_dict(entry["design"]["model"])
        assert q0_density(m, entry["design"]["v"]) == pytest.approx(entry["f_q0"], rel=1e-10)

    def test_matches_independent_differences(self, frozen):
        entry = frozen["link_bias_exp"]
        m = TrueModel.from_dict(entry["design"]["model"])
        assert a_v_constant(m, entry["design"]["v"]) == pytest.approx(entry["value"], rel=1e-6)

    def test_density_integrates_to_one(self):
        m = sine_bump_model(rho=0.3)
        lo, hi = q0_range(m)
        total, _ = integrate.quad(lambda v: q0_density(m, v), lo, hi, limit=200)
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_flat_index_density_gives_zero(self):
        # X1 + 0.2 X2 has a flat density on [0.2, 1] under independence
        m = TrueModel(Link(), (Component("linear"), Component("linear", scale=0.2)),
                      ErrorLaw("gaussian", 0.1), rho=0.0)
        assert a_v_constant(m, 0.6) == pytest.approx(0.0, abs=1e-6)

    def test_outside_support(self):
        m = sine_bump_model()
        with pytest.raises(EstimationError):
            a_v_constant(m, 5.0)


class TestBahadur:
    def test_noiseless_linear(self):
        m = linear_model()
        data = simulate(m, 500, 3)
        cfg = fit_config(500)
        probes = [[0.3, 0.4], [0.5, 0.5], [0.7, 0.6]]
        out = bahadur_residual(data, cfg, probes, m)
        assert out.max_abs_residual < 1e-8
        assert out.max_abs_leading == 0.0

    def test_deterministic(self):
        m = sine_bump_model()
        data = simulate(m, 400, 8)
        cfg = fit_config(400, anchors=(0.3, 0.3))
        a = bahadur_residual(data, cfg, [[0.5, 0.5]], m)
        b = bahadur_residual(data, cfg, [[0.5, 0.5]], m)
        assert a.probes[0]["leading"] == b.probes[0]["leading"]

    def test_remainder_shrinks_relative_to_leading_term(self):
        m = linear_model(ErrorLaw("gaussian", 0.1))
        probes = [[a, b] for a in (0.3, 0.5, 0.7) for b in (0.3, 0.5, 0.7)]
        medians = []
        for n in (500, 1000, 2000, 4000):
            ratios = []
            for r in range(30):
                out = bahadur_residual(simulate(m, n, [r, n]), fit_config(n), probes, m)
                ratios += [p["max_abs_residual"] / p["max_abs_leading"] for p in out.probes]
            medians.append(np.median(ratios))
        assert all(b < a for a, b in zip(medians, medians[1:])), medians


def test_report_fields(tmp_path):
    ident = identify_normalize(sine_bump_model(rho=0.3), WeightFn(0.1, 0.9), (0.3, 0.3))
    rep = asymptotic_report(ident, 2, 0.6, fit_config(1000, anchors=(0.3, 0.3)), 1000)
    assert rep.variance > 0 and np.isfinite(rep.bias_const)
    assert rep.h_opt == pytest.approx(optimal_h(1000, 2))
    rep.to_json(tmp_path / "r.json")
    assert json.loads((tmp_path / "r.json").read_text())["u"] == 2
