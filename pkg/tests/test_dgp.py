import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from gaquant.core import ConfigError, EstimationError
from gaquant.dgp import (
    Component,
    ErrorLaw,
    Link,
    TrueModel,
    copula_density,
    covariate_draws,
    grad_log_density,
    identify_normalize,
    multiplicative_model,
    multiplicative_value,
    simulate,
    true_quantile,
)
from gaquant.marginals import WeightFn

from conftest import sine_bump_model

W1 = WeightFn(0.1, 0.9)
GRID = np.linspace(0.0, 1.0, 41)


def test_simulation_is_seeded():
    m = sine_bump_model(rho=0.2)
    a, b = simulate(m, 300, [4, 300]), simulate(m, 300, [4, 300])
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert not np.array_equal(a.x, simulate(m, 300, [5, 300]).x)


@pytest.mark.parametrize("kwargs", [{"n": 0}, {"n": 10, "burn_in": 50}])
def test_simulation_arguments_checked(kwargs):
    with pytest.raises(ConfigError):
        simulate(sine_bump_model(), seed=0, **kwargs)


def test_nonstationary_phi_rejected():
    m = TrueModel(Link(), (Component(), Component()), phi=(1.0,))
    with pytest.raises(ConfigError):
        simulate(m, 10, 0)


def test_independent_uniform_covariates():
    m = TrueModel(Link(), (Component(), Component()), phi=(0.0,), rho=0.0)
    data = simulate(m, 2000, 1)
    assert stats.kstest(data.x[:, 0], "uniform").statistic < 0.05


def test_autocorrelation_follows_phi():
    m = TrueModel(Link(), (Component(), Component()), phi=(0.7,), rho=0.0)
    z = stats.norm.ppf(simulate(m, 5000, 2).x[:, 0])
    assert np.corrcoef(z[:-1], z[1:])[0, 1] == pytest.approx(0.7, abs=0.05)


@pytest.mark.parametrize("family", ["gaussian", "t3"])
@pytest.mark.parametrize("tau", [0.2, 0.5, 0.9])
def test_error_tau_quantile_is_zero(family, tau):
    law = ErrorLaw(family, 0.5)
    assert law.cdf(0.0, tau) == pytest.approx(tau, abs=1e-12)
    draws = law.draw(np.random.default_rng(0), 20000, tau)
    assert np.mean(draws <= 0) == pytest.approx(tau, abs=0.015)


def test_noiseless_errors():
    law = ErrorLaw("none")
    assert np.all(law.draw(np.random.default_rng(0), 5, 0.3) == 0)
    with pytest.raises(EstimationError):
        law.pdf(0.0, 0.5)


def test_copula_density_integrates_to_one():
    m = sine_bump_model(rho=0.4)
    s, w = np.polynomial.legendre.leggauss(60)
    t, w = 0.5 + 0.5 * s, 0.5 * w
    g1, g2 = np.meshgrid(t, t, indexing="ij")
    dens = copula_density(m, np.column_stack([g1.ravel(), g2.ravel()]))
    assert np.sum(np.outer(w, w).ravel() * dens) == pytest.approx(1.0, abs=5e-3)
    assert np.all(copula_density(m, np.array([[0.5, 1.2]])) == 0.0)


def test_grad_log_density_matches_differences():
    m = sine_bump_model(rho=0.3)
    x, eps = np.array([[0.3, 0.6]]), 1e-6
    g = grad_log_density(m, x)[0]
    for k in range(2):
        up, down = x.copy(), x.copy()
        up[0, k] += eps
        down[0, k] -= eps
        fd = (np.log(copula_density(m, up)) - np.log(copula_density(m, down))) / (2 * eps)
        assert g[k] == pytest.approx(fd[0], rel=1e-5)


def test_rho_zero_gives_flat_density():
    m = sine_bump_model(rho=0.0)
    pts = covariate_draws(m, 10, np.random.default_rng(0))
    assert np.allclose(copula_density(m, pts), 1.0)
    assert np.allclose(grad_log_density(m, pts), 0.0)


@settings(max_examples=30, deadline=None)
@given(st.sampled_from(["linear", "sine_bump", "cubic"]), st.floats(0.5, 3.0),
       st.floats(-1, 1), st.integers(0, 2))
def test_component_derivatives(family, scale, shift, order):
    params = {"b": 0.6} if family == "sine_bump" else ({"c": 0.4, "a": 0.3}
                                                       if family == "cubic" else {})
    comp = Component(family, params, scale, shift)
    x, eps = np.linspace(0.1, 0.9, 9), 1e-5
    fd = (comp.derivative(x + eps, order) - comp.derivative(x - eps, order)) / (2 * eps)
    assert np.allclose(comp.derivative(x, order + 1), fd, atol=1e-5 * max(1, scale * 40))


@pytest.mark.parametrize("link", [Link("exp", pre_scale=0.7, pre_shift=0.2),
                                  Link("logistic", {"L": 2.0, "s": 0.5}),
                                  Link("compose_exp", inner=Link("exp"))])
def test_link_derivatives(link):
    v, eps = np.linspace(-0.5, 0.5, 7), 1e-5
    for order in range(3):
        fd = (link.derivative(v + eps, order) - link.derivative(v - eps, order)) / (2 * eps)
        assert np.allclose(link.derivative(v, order + 1), fd, rtol=1e-5, atol=1e-7)


def test_identification_constraints():
    m = sine_bump_model()
    ident = identify_normalize(m, W1, (0.3, 0.6))
    assert ident.components[0](0.3) == pytest.approx(0.0, abs=1e-15)
    assert ident.components[1](0.6) == pytest.approx(0.0, abs=1e-15)
    s, w = np.polynomial.legendre.leggauss(64)
    t = 0.5 + 0.4 * s
    integral = np.sum(0.4 * w * W1(t) / ident.components[0].derivative(t, 1))
    assert integral == pytest.approx(1.0, abs=1e-12)
    x = np.column_stack([GRID, GRID[::-1]])
    assert np.allclose(true_quantile(ident, x), true_quantile(m, x), atol=1e-12)


def test_equivalent_models_have_equal_identified_truth():
    m = sine_bump_model()
    comps = tuple(Component(c.family, c.params, 2.5 * c.scale, c.shift + 0.7)
                  for c in m.components)
    twin = TrueModel(Link(pre_scale=0.4, pre_shift=-0.56), comps, m.error, m.phi, m.rho, m.tau)
    x = np.column_stack([GRID, GRID[::-1]])
    assert np.allclose(true_quantile(twin, x), true_quantile(m, x), atol=1e-12)
    a, b = identify_normalize(m, W1, (0.5, 0.5)), identify_normalize(twin, W1, (0.5, 0.5))
    for ca, cb in zip(a.components, b.components):
        assert np.max(np.abs(ca(GRID) - cb(GRID))) < 1e-10
    v = np.linspace(-1, 1, 21)
    assert np.max(np.abs(a.link(v) - b.link(v))) < 1e-10


def test_exp_link_at_anchors():
    m = TrueModel(Link("exp"), (Component("linear", shift=-0.5), Component("linear", shift=-0.5)))
    ident = identify_normalize(m, W1, (0.5, 0.5))
    assert ident.link(0.0) == pytest.approx(1.0, abs=1e-15)


def test_non_monotone_first_component_rejected():
    m = TrueModel(Link(), (Component("cubic", {"c": 0.5, "a": -0.1}), Component()))
    with pytest.raises(EstimationError):
        identify_normalize(m, W1, (0.5, 0.5))


def test_multiplicative_rewrite():
    factors = [Component("linear", shift=1.0), Component("sine_bump", {"b": 0.3}, shift=0.5)]
    g_tilde = Link("logistic", {"L": 1.0, "s": 2.0})
    m = multiplicative_model(g_tilde, factors)
    x = np.column_stack([GRID, GRID[::-1]])
    assert np.max(np.abs(true_quantile(m, x) - multiplicative_value(g_tilde, factors, x))) < 1e-10


def test_model_json_round_trip(tmp_path):
    m = multiplicative_model(Link("exp"), [Component("linear", shift=1.0),
                                           Component("cubic", {"c": 0.2}, shift=2.0)],
                             error=ErrorLaw("t3", 0.2), phi=(0.1, 0.4), rho=0.2, tau=0.3)
    path = tmp_path / "m.json"
    import json
    path.write_text(json.dumps(m.to_dict()))
    back = TrueModel.from_json(path)
    assert back.to_dict() == m.to_dict()


def test_bad_model_config():
    with pytest.raises(ConfigError):
        TrueModel.from_dict({"components": [{"family": "spline"}, {}]})
    with pytest.raises(ConfigError):
        TrueModel(Link(), (Component(),))
    with pytest.raises(ConfigError):
        TrueModel(Link(), (Component(), Component(), Component()), rho=-0.6)
