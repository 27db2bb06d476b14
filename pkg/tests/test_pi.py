"""Policy evaluation, improvement, and the full iteration loop."""

import numpy as np
import pytest
import scipy.linalg

from observer_pi import (
    ActivationCoeffs,
    ConditioningError,
    CostConfig,
    ExcitationConfig,
    LuenbergerPolicy,
    MeasuredDataPolicy,
    PiConfig,
    PolicyRolloutError,
    QnnTrainingProblem,
    ValueMatrix,
    Window,
    assemble_labels,
    bellman_residual,
    evaluate_policy,
    extract_mapping,
    extract_windows,
    improve_policy,
    load_pi_config,
    policy_consistent_windows,
    run_policy_iteration,
    sample_stabilizing_policy,
    save_pi_config,
    simulate_linear,
    train_quadratic,
)


def _optimal_policy(H_star, cost):
    return improve_policy(H_star, cost)


def _lyapunov_policy_value(model, cost, L):
    """Closed-form H for a fixed output-injection policy: solve the
    discounted Lyapunov equation in the error state and lift it onto
    histories."""
    from observer_pi import build_reconstruction, closed_form_value_matrix

    Acl = model.A - L @ model.C
    W = (model.C.T @ cost.Q @ model.C
         + model.C.T @ L.T @ cost.R @ L @ model.C)
    P = scipy.linalg.solve_discrete_lyapunov(
        np.sqrt(cost.gamma) * Acl.T, W
    )
    rec = build_reconstruction(model)
    return closed_form_value_matrix(P, rec)


# -- config ---------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        PiConfig(gamma=1.0)
    with pytest.raises(ValueError):
        PiConfig(epsilon_inner=0.0)
    with pytest.raises(ValueError):
        PiConfig(H0_mode="diagonal")
    with pytest.raises(ValueError):
        PiConfig(label_mode="oracle")


def test_config_round_trip(tmp_path):
    cfg = PiConfig(gamma=0.5, N=100, burn_in=25, beta=0.2,
                   H0_mode="random_symmetric", label_mode="applied")
    path = tmp_path / "pi.json"
    save_pi_config(cfg, path)
    assert load_pi_config(path) == cfg


def test_sample_count_guard(pendulum_model):
    cfg = PiConfig(N=20)  # below the 21 free entries
    with pytest.raises(ValueError, match="free entries"):
        cfg.validate_sample_count(2, 1)


def test_initial_H_modes():
    zero = PiConfig(H0_mode="zero").initial_H(2, 1)
    np.testing.assert_array_equal(zero.H, np.zeros((6, 6)))
    r1 = PiConfig(H0_mode="random_symmetric", H0_seed=1).initial_H(2, 1)
    r2 = PiConfig(H0_mode="random_symmetric", H0_seed=1).initial_H(2, 1)
    np.testing.assert_array_equal(r1.H, r2.H)
    assert np.abs(r1.H).max() > 0


# -- labels ---------------------------------------------------------------

def test_labels_zero_for_zero_data(pendulum_cost):
    wins = [Window(k=2, X=np.zeros(6), X_next=np.zeros(6),
                   ytilde=np.zeros(1), w=np.zeros(2))]
    H0 = ValueMatrix(np.zeros((6, 6)), n_x=2, n_y=1)
    _, Y = assemble_labels(wins, H0, pendulum_cost)
    np.testing.assert_array_equal(Y, [0.0])


def test_labels_stage_cost_only(pendulum_cost):
    wins = [Window(k=2, X=np.zeros(6), X_next=np.zeros(6),
                   ytilde=np.array([1.0]), w=np.zeros(2))]
    H0 = ValueMatrix(np.zeros((6, 6)), n_x=2, n_y=1)
    _, Y = assemble_labels(wins, H0, pendulum_cost)
    assert Y[0] == pytest.approx(10.0)  # ytilde' Q ytilde with Q = 10


def test_labels_dimension_check(pendulum_cost):
    wins = [Window(k=2, X=np.zeros(4), X_next=np.zeros(4),
                   ytilde=np.zeros(1), w=np.zeros(2))]
    H0 = ValueMatrix(np.zeros((6, 6)), n_x=2, n_y=1)
    with pytest.raises(ValueError, match="dimension"):
        assemble_labels(wins, H0, pendulum_cost)


def test_optimal_value_satisfies_bellman_identity(
    pendulum_model, pendulum_cost, pendulum_H_star, quiet_excitation
):
    pol = _optimal_policy(pendulum_H_star, pendulum_cost)
    traj = simulate_linear(pendulum_model, pol, quiet_excitation,
                           [3.0, 0.0], [0.0, 0.0], 60)
    wins = extract_windows(traj, 2)
    X, Y = assemble_labels(wins, pendulum_H_star, pendulum_cost)
    pred = np.einsum("ki,ij,kj->k", X, pendulum_H_star.H, X)
    assert np.abs(pred - Y).max() < 1e-10 * max(1.0, pred.max())


def test_policy_consistent_windows_strip_pivot_noise(pendulum_model):
    L = np.array([[0.05], [0.9]])
    pol = LuenbergerPolicy(L=L)
    exc = ExcitationConfig(noise_amplitude=0.1, seed=3)
    traj = simulate_linear(pendulum_model, pol, exc, [3.0, 0.0],
                           [0.0, 0.0], 30)
    wins = policy_consistent_windows(extract_windows(traj, 2), pol, 2, 1)
    for win in wins:
        np.testing.assert_allclose(win.w, L @ win.ytilde, atol=1e-12)
        np.testing.assert_array_equal(win.X_next[:2], win.w)
        # history tail of X_next comes straight from X
        np.testing.assert_array_equal(win.X_next[2:4], win.X[:2])
        np.testing.assert_array_equal(win.X_next[4:5], win.ytilde)
        np.testing.assert_array_equal(win.X_next[5:6], win.X[4:5])


# -- policy evaluation ----------------------------------------------------

def test_inner_loop_contracts_at_discount_rate(
    pendulum_model, pendulum_cost
):
    # manual inner iteration against the closed-form policy value: the
    # error must shrink by about the discount factor per step
    L = np.array([[0.05], [0.9]])
    pol = LuenbergerPolicy(L=L)
    H_pol = _lyapunov_policy_value(pendulum_model, pendulum_cost, L)
    exc = ExcitationConfig(noise_amplitude=0.1, seed=1)
    traj = simulate_linear(pendulum_model, pol, exc, [3.0, 0.0],
                           [0.0, 0.0], 303)
    wins = policy_consistent_windows(extract_windows(traj, 2), pol, 2, 1)
    H_i = PiConfig().initial_H(2, 1)
    errors = [H_i.frobenius_distance(H_pol)]
    for _ in range(30):
        X, Y = assemble_labels(wins, H_i, pendulum_cost)
        model = train_quadratic(QnnTrainingProblem(inputs=X, labels=Y))
        H_i = extract_mapping(model, n_x=2, n_y=1)
        errors.append(H_i.frobenius_distance(H_pol))
    ratios = [b / a for a, b in zip(errors, errors[1:]) if a > 1e-9]
    assert all(r <= pendulum_cost.gamma + 0.05 for r in ratios[1:])
    assert errors[-1] < 1e-5 * errors[0]


def test_evaluate_optimal_policy_recovers_closed_form(
    pendulum_model, pendulum_cost, pendulum_H_star
):
    pol = _optimal_policy(pendulum_H_star, pendulum_cost)
    exc = ExcitationConfig(noise_amplitude=0.1, seed=1)
    traj = simulate_linear(pendulum_model, pol, exc, [3.0, 0.0],
                           [0.0, 0.0], 303)
    res = evaluate_policy(traj, pol, pendulum_cost, PiConfig())
    rel = res.H.frobenius_distance(pendulum_H_star) / np.linalg.norm(
        pendulum_H_star.H, "fro"
    )
    assert rel < 0.02


def test_evaluate_luenberger_matches_lyapunov_value(
    pendulum_model, pendulum_cost
):
    L = np.array([[0.05], [0.9]])
    pol = LuenbergerPolicy(L=L)
    H_pol = _lyapunov_policy_value(pendulum_model, pendulum_cost, L)
    exc = ExcitationConfig(noise_amplitude=0.1, seed=2)
    traj = simulate_linear(pendulum_model, pol, exc, [3.0, 0.0],
                           [0.0, 0.0], 303)
    res = evaluate_policy(traj, pol, pendulum_cost, PiConfig())
    rel = res.H.frobenius_distance(H_pol) / np.linalg.norm(H_pol.H, "fro")
    assert rel < 1e-6


def test_degenerate_cost_evaluates_to_zero(pendulum_model):
    # Q = 0 and R ~ 0 make every label zero: H = 0 after one iteration
    cost = CostConfig(Q=[[0.0]], R=1e-9 * np.eye(2), gamma=0.6)
    pol = sample_stabilizing_policy(pendulum_model, 0)
    exc = ExcitationConfig(noise_amplitude=0.1, seed=0)
    traj = simulate_linear(pendulum_model, pol, exc, [1.0, 0.0],
                           [0.0, 0.0], 303)
    res = evaluate_policy(traj, pol, cost, PiConfig())
    assert np.abs(res.H.H).max() < 1e-8
    assert res.inner_iterations <= 2


def test_held_out_bellman_residual(pendulum_model, pendulum_cost):
    # 80/20 split: the converged H generalizes to held-out windows
    pol = sample_stabilizing_policy(pendulum_model, 5)
    exc = ExcitationConfig(noise_amplitude=0.1, seed=5)
    traj = simulate_linear(pendulum_model, pol, exc, [3.0, 0.0],
                           [0.0, 0.0], 380)
    wins = policy_consistent_windows(extract_windows(traj, 2), pol, 2, 1)
    train, held = wins[:300], wins[300:]
    res = evaluate_policy(traj, pol, pendulum_cost, PiConfig(),
                          windows=train)
    r_train = bellman_residual(train, res.H, pendulum_cost)
    r_held = bellman_residual(held, res.H, pendulum_cost)
    assert r_held <= 10.0 * max(r_train, 1e-18)


def test_burn_in_requires_enough_windows(pendulum_model, pendulum_cost):
    pol = sample_stabilizing_policy(pendulum_model, 0)
    exc = ExcitationConfig(noise_amplitude=0.1, seed=0)
    traj = simulate_linear(pendulum_model, pol, exc, [1.0, 0.0],
                           [0.0, 0.0], 303)
    with pytest.raises(ValueError, match="burn-in"):
        evaluate_policy(traj, pol, pendulum_cost, PiConfig(burn_in=100))


# -- policy improvement ---------------------------------------------------

def test_zero_value_improves_to_zero_policy(pendulum_cost):
    H = ValueMatrix(np.zeros((6, 6)), n_x=2, n_y=1)
    pol = improve_policy(H, pendulum_cost)
    np.testing.assert_array_equal(pol.Fw, np.zeros((2, 2)))
    np.testing.assert_array_equal(pol.Fy, np.zeros((2, 2)))


def test_zero_discount_improves_to_zero_policy():
    rng = np.random.default_rng(0)
    S = rng.standard_normal((6, 6))
    H = ValueMatrix(S @ S.T, n_x=2, n_y=1)
    cost = CostConfig(Q=[[10.0]], R=np.eye(2), gamma=0.0)
    pol = improve_policy(H, cost)
    np.testing.assert_array_equal(pol.Fw, np.zeros((2, 2)))
    np.testing.assert_array_equal(pol.Fy, np.zeros((2, 2)))


def test_singular_curvature_raises(pendulum_cost):
    H = np.zeros((6, 6))
    H[:2, :2] = -pendulum_cost.R / pendulum_cost.gamma  # cancels R exactly
    with pytest.raises(ConditioningError):
        improve_policy(ValueMatrix(H, n_x=2, n_y=1), pendulum_cost)


def test_improvement_beats_random_search(pendulum_H_star, pendulum_cost):
    # the analytic minimizer of the one-step value must not lose to any
    # random candidate correction
    rng = np.random.default_rng(12)
    g = pendulum_cost.gamma
    H = pendulum_H_star
    pol = improve_policy(H, pendulum_cost)
    for _ in range(5):
        w_hist = rng.standard_normal(2)
        y_hist = rng.standard_normal(2)  # [ytilde_k; ytilde_{k-1}]
        w_star = pol.apply(w_hist, y_hist)

        def objective(w):
            Xn = np.concatenate([w, w_hist, y_hist])
            return w @ pendulum_cost.R @ w + g * (Xn @ H.H @ Xn)

        f_star = objective(w_star)
        cands = w_star + rng.standard_normal((2000, 2))
        for cand in cands:
            assert f_star <= objective(cand) + 1e-9


# -- stabilizing-policy sampler -------------------------------------------

def test_sampler_postcondition_and_determinism(pendulum_model):
    from observer_pi import spectral_radius

    gains = []
    for seed in range(20):
        pol = sample_stabilizing_policy(pendulum_model, seed)
        rho = spectral_radius(pendulum_model.A - pol.L @ pendulum_model.C)
        assert rho < 0.95
        gains.append(pol.L)
    again = sample_stabilizing_policy(pendulum_model, 7)
    np.testing.assert_array_equal(again.L, gains[7])


def test_sampler_exhaustion():
    # an always-failing acceptance bound must raise after max_tries
    model_args = dict(A=[[0.95, 0.1], [-0.98, 0.94]], B=[[0.0], [0.0]],
                      C=[[0.0, 1.0]])
    from observer_pi import SystemModel

    with pytest.raises(RuntimeError, match="draws"):
        sample_stabilizing_policy(SystemModel(**model_args), seed=0,
                                  max_tries=3, radius_bound=1e-6)


# -- outer loop -----------------------------------------------------------

def test_optimal_start_is_fixed_point(
    pendulum_model, pendulum_cost, pendulum_H_star
):
    pol = _optimal_policy(pendulum_H_star, pendulum_cost)
    exc = ExcitationConfig(noise_amplitude=0.1, seed=1)
    run = run_policy_iteration(
        pendulum_model, pendulum_model, pol, pendulum_cost, PiConfig(),
        exc, x0=np.array([3.0, 0.0]), reference_H=pendulum_H_star,
    )
    assert run.converged
    assert len(run.records) == 2
    final = run.final_policy
    scale = max(np.abs(pol.Fw).max(), np.abs(pol.Fy).max())
    assert np.abs(final.Fw - pol.Fw).max() < 1e-3 * scale
    assert np.abs(final.Fy - pol.Fy).max() < 1e-3 * scale


def test_linear_runs_converge_to_optimum(
    pendulum_model, pendulum_cost, pendulum_H_star
):
    H_norm = np.linalg.norm(pendulum_H_star.H, "fro")
    for seed in (1, 2):
        exc = ExcitationConfig(noise_amplitude=0.1, seed=seed)
        init = sample_stabilizing_policy(pendulum_model, seed)
        run = run_policy_iteration(
            pendulum_model, pendulum_model, init, pendulum_cost, PiConfig(),
            exc, x0=np.array([3.0, 0.0]), reference_H=pendulum_H_star,
        )
        assert run.converged
        assert run.records[-1].distance_to_reference / H_norm < 1e-6


def test_cost_to_go_is_monotone(pendulum_model, pendulum_cost,
                                pendulum_H_star):
    exc = ExcitationConfig(noise_amplitude=0.1, seed=4)
    init = sample_stabilizing_policy(pendulum_model, 4)
    run = run_policy_iteration(
        pendulum_model, pendulum_model, init, pendulum_cost, PiConfig(),
        exc, x0=np.array([3.0, 0.0]), reference_H=pendulum_H_star,
    )
    costs = [rec.cost_to_go for rec in run.records]
    for a, b in zip(costs, costs[1:]):
        assert b <= a * 1.01 + 1e-12


def test_unstable_initial_gain_rejected(pendulum_model, pendulum_cost):
    bad = LuenbergerPolicy(L=[[0.0], [100.0]])
    exc = ExcitationConfig(noise_amplitude=0.1, seed=0)
    with pytest.raises(ValueError, match="stabilize"):
        run_policy_iteration(pendulum_model, pendulum_model, bad,
                             pendulum_cost, PiConfig(), exc)


def test_divergent_measured_policy_halts_run(pendulum_model, pendulum_cost):
    unstable = MeasuredDataPolicy(Fw=2.0 * np.eye(2), Fy=np.ones((2, 2)))
    exc = ExcitationConfig(noise_amplitude=0.1, seed=0)
    with pytest.raises(PolicyRolloutError) as err:
        run_policy_iteration(pendulum_model, pendulum_model, unstable,
                             pendulum_cost, PiConfig(), exc,
                             x0=np.array([3.0, 0.0]))
    assert err.value.outer_iteration == 0


def test_applied_label_mode_still_converges_somewhere(
    pendulum_model, pendulum_cost, pendulum_H_star
):
    # keeping the probing noise in the labels biases the fixed point but
    # the loop must still settle (the paper's discount argument)
    cfg = PiConfig(label_mode="applied")
    exc = ExcitationConfig(noise_amplitude=0.1, seed=1)
    init = sample_stabilizing_policy(pendulum_model, 1)
    run = run_policy_iteration(
        pendulum_model, pendulum_model, init, pendulum_cost, cfg, exc,
        x0=np.array([3.0, 0.0]), reference_H=pendulum_H_star,
    )
    assert run.converged
    # biased, but in the right neighborhood
    H_norm = np.linalg.norm(pendulum_H_star.H, "fro")
    assert run.records[-1].distance_to_reference / H_norm < 0.5


def test_run_artifacts(tmp_path, pendulum_model, pendulum_cost,
                       pendulum_H_star):
    import json

    exc = ExcitationConfig(noise_amplitude=0.1, seed=1)
    init = sample_stabilizing_policy(pendulum_model, 1)
    run = run_policy_iteration(
        pendulum_model, pendulum_model, init, pendulum_cost, PiConfig(),
        exc, x0=np.array([3.0, 0.0]), reference_H=pendulum_H_star,
    )
    csv = tmp_path / "iterations.csv"
    run.to_csv(csv)
    lines = csv.read_text().splitlines()
    assert lines[0] == "j,inner_iters,frob_Hj_minus_Hstar,cost_to_go"
    assert len(lines) == len(run.records) + 1
    run.dump_iterations(tmp_path)
    doc = json.loads((tmp_path / "iter_0.json").read_text())
    assert np.asarray(doc["H"]).shape == (6, 6)
    assert doc["policy"]["kind"] == "luenberger"
