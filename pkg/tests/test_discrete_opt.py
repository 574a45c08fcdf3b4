import dataclasses

import numpy as np
import pytest

from heatoc import (
    ConfigError, OcProblem, OptimizerConfig, PeerScheme, control_quadrature_weights,
    discrete_gradient, discrete_objective, exact_objective, gauss2, get_method,
    integrate_forward, optimize, peer_toy2,
)
from heatoc.oracles import fd_gradient_check
from conftest import make_instance

METHODS = ("gauss2", "lobatto3", "peer_toy2")


def test_quadrature_weights():
    assert np.array_equal(control_quadrature_weights(gauss2()), [0.5, 0.5])
    assert np.array_equal(control_quadrature_weights(get_method("lobatto3")),
                          [1 / 6, 2 / 3, 1 / 6])
    assert np.allclose(control_quadrature_weights(peer_toy2()), [0.75, 0.25])


def test_nonpositive_weights_rejected():
    # nodes (3/4, 1) induce the weights (2, -1): not usable for the penalty
    scheme = PeerScheme(name="badquad", c=np.array([0.75, 1.0]),
                        B=np.array([[0.0, 1.0], [0.0, 1.0]]),
                        A=np.zeros((2, 2)),
                        R=np.array([[0.25, 0.0], [0.5, 0.25]]))
    with pytest.raises(ConfigError):
        control_quadrature_weights(scheme)


@pytest.mark.parametrize("name", METHODS)
def test_gradient_matches_finite_differences(name, rng):
    prob, _ = make_instance(8)
    method = get_method(name)
    values = rng.standard_normal((16, method.forward.s)) * 0.3
    assert fd_gradient_check(method, prob, values, 16, rng=rng) <= 1e-5


@pytest.mark.parametrize("name", METHODS)
def test_gradient_with_decoupled_control(name, rng):
    # gamma = 0 removes the state coupling: gradient is the pure penalty term
    prob, _ = make_instance(6)
    sys0 = dataclasses.replace(prob.sys, gamma=0.0)
    prob0 = OcProblem(sys=sys0, dec=prob.dec, T=prob.T, alpha=prob.alpha,
                      y_hat=prob.y_hat)
    method = get_method(name)
    N = 8
    h = prob.T / N
    values = rng.standard_normal((N, method.forward.s))
    grad = discrete_gradient(method, prob0, values, N)
    w = control_quadrature_weights(method)
    assert np.array_equal(grad, prob0.alpha * h * w[None, :] * values)


def test_objective_zero_control(instance8):
    prob, _ = instance8
    N = 8
    u0 = np.zeros((N, 2))
    y_T = integrate_forward(gauss2(), prob.sys, None, N, prob.T).final
    expected = 0.5 * np.sum((y_T - prob.y_hat) ** 2)
    assert discrete_objective(gauss2(), prob, u0, N) == pytest.approx(expected, rel=1e-14)


def test_objective_penalty_scales_with_alpha(rng):
    prob, _ = make_instance(6)
    prob2 = OcProblem(sys=prob.sys, dec=prob.dec, T=prob.T, alpha=2 * prob.alpha,
                      y_hat=prob.y_hat)
    N = 8
    u = rng.standard_normal((N, 2))
    u0 = np.zeros((N, 2))
    c1 = discrete_objective(gauss2(), prob, u, N)
    c2 = discrete_objective(gauss2(), prob2, u, N)
    # doubling alpha exactly doubles the control term (tracking part differs
    # only through the same forward map, which ignores alpha)
    h = prob.T / N
    penalty = 0.5 * prob.alpha * h * np.sum(control_quadrature_weights(gauss2()) * u**2)
    assert c2 - c1 == pytest.approx(penalty, rel=1e-12)
    assert discrete_objective(gauss2(), prob, u0, N) == \
        pytest.approx(discrete_objective(gauss2(), prob2, u0, N), rel=1e-15)


def test_objective_approaches_exact_value_quadratically():
    prob, sol = make_instance(8)
    c_star = exact_objective(prob, sol)
    errs = []
    for N in (64, 128, 256):
        times = (np.arange(N)[:, None] + gauss2().c[None, :]) * (prob.T / N)
        u = sol.control.value(times.ravel()).reshape(N, 2)
        errs.append(abs(discrete_objective(gauss2(), prob, u, N) - c_star))
    assert errs[0] / errs[1] >= 3.0
    assert errs[1] / errs[2] >= 3.0


def test_objective_grid_mismatch(instance8):
    prob, _ = instance8
    with pytest.raises(ValueError):
        discrete_objective(gauss2(), prob, np.zeros((8, 3)), 8)


def test_stationary_start_converges_immediately():
    prob, _ = make_instance(4)
    N = 8
    y_free = integrate_forward(gauss2(), prob.sys, None, N, prob.T).final
    prob_stationary = OcProblem(sys=prob.sys, dec=prob.dec, T=prob.T,
                                alpha=prob.alpha, y_hat=y_free)
    result = optimize(gauss2(), prob_stationary, OptimizerConfig(), N)
    assert result.converged
    assert result.iterations <= 1
    assert np.abs(result.control.values).max() == 0.0


def test_gd_descends_and_converges():
    # penalty-dominated instance: well conditioned, so plain descent converges;
    # the tolerance stays above the floating-point floor of objective decrements
    prob, _ = make_instance(4, alpha=100.0)
    cfg = OptimizerConfig(algorithm="gd", grad_tol=1e-8, max_iterations=300)
    result = optimize(gauss2(), prob, cfg, 8)
    assert result.converged
    obj = result.objective_history
    assert all(b < a for a, b in zip(obj, obj[1:]))
    assert result.gradient_norm_history[-1] <= 1e-8


def test_cg_matches_gd_minimizer():
    prob, _ = make_instance(4, alpha=100.0)
    r_gd = optimize(gauss2(), prob, OptimizerConfig(algorithm="gd", grad_tol=1e-8,
                                                    max_iterations=300), 8)
    r_cg = optimize(gauss2(), prob, OptimizerConfig(algorithm="cg", grad_tol=1e-11), 8)
    assert r_gd.converged and r_cg.converged
    assert np.abs(r_gd.control.values - r_cg.control.values).max() < 1e-8


def test_unique_minimizer_from_different_starts(rng):
    # large alpha keeps the Hessian well conditioned, so the gradient bound
    # transfers to the control values
    prob, _ = make_instance(4, alpha=100.0)
    tol = 1e-12
    cfg0 = OptimizerConfig(algorithm="cg", grad_tol=tol)
    cfg1 = OptimizerConfig(algorithm="cg", grad_tol=tol,
                           initial_control=rng.standard_normal((8, 2)))
    a = optimize(gauss2(), prob, cfg0, 8)
    b = optimize(gauss2(), prob, cfg1, 8)
    assert a.converged and b.converged
    assert np.abs(a.control.values - b.control.values).max() <= 10 * tol


def test_optimum_matches_brute_force_normal_equations():
    prob, _ = make_instance(4)
    N, s = 8, 2
    dim = N * s

    def obj_flat(u):
        return discrete_objective(gauss2(), prob, u.reshape(N, s), N)

    e = np.eye(dim)
    c0 = obj_flat(np.zeros(dim))
    lin = np.array([(obj_flat(e[i]) - obj_flat(-e[i])) / 2 for i in range(dim)])
    H = np.empty((dim, dim))
    for i in range(dim):
        for j in range(dim):
            H[i, j] = obj_flat(e[i] + e[j]) - obj_flat(e[i]) - obj_flat(e[j]) + c0
    u_direct = np.linalg.solve(H, -lin).reshape(N, s)
    result = optimize(gauss2(), prob, OptimizerConfig(algorithm="cg", grad_tol=1e-13), N)
    assert np.abs(result.control.values - u_direct).max() <= 1e-8


def test_iteration_cap_marks_nonconverged():
    prob, _ = make_instance(6)
    cfg = OptimizerConfig(algorithm="gd", grad_tol=1e-14, max_iterations=2)
    result = optimize(gauss2(), prob, cfg, 8)
    assert not result.converged
    assert result.iterations == 2


def test_benchmark_control_error_decreases_with_refinement():
    # m=250 cell of the coupled study: error finite and smaller when N doubles
    prob, sol = make_instance(250)
    cfg = OptimizerConfig(algorithm="cg", grad_tol=1e-10, max_iterations=3000)
    errs = [optimize(get_method("gauss2"), prob, cfg, N,
                     exact_control=sol.control).control_error
            for N in (64, 128)]
    assert np.isfinite(errs[0]) and np.isfinite(errs[1])
    assert errs[1] < errs[0]


def test_optimize_records_control_error():
    prob, sol = make_instance(8)
    cfg = OptimizerConfig(algorithm="cg", grad_tol=1e-11)
    result = optimize(gauss2(), prob, cfg, 16, exact_control=sol.control)
    assert result.control_error is not None
    assert 0 < result.control_error < 0.2
    assert result.state.states.shape == (17, 8)
    assert result.control.node_times().shape == (16, 2)


def test_bad_initial_control_shape():
    prob, _ = make_instance(4)
    cfg = OptimizerConfig(initial_control=np.zeros((4, 3)))
    with pytest.raises(ValueError):
        optimize(gauss2(), prob, cfg, 4)


def test_config_validation():
    with pytest.raises(ConfigError):
        OptimizerConfig(grad_tol=0.0)
    with pytest.raises(ConfigError):
        OptimizerConfig(armijo_shrink=1.5)
    with pytest.raises(ConfigError):
        OptimizerConfig(algorithm="newton")
