import dataclasses
import math

import numpy as np
import pytest

from modwave import model
from modwave.atomic import build_toeplitz
from modwave.model import (
    GroundTruth, Subspace, apply_B, generate_subspace_rademacher,
    generate_waveforms, make_instance, split_seed,
)
from modwave.solver import (
    AdmmConfig, DenoiseProblem, SdpSolution, check_optimality, oracle_lsq,
    read_solution_json, reference_solver, regularization_lambda, solve_admm,
    write_solution_json,
)

SEED = 20260816

TIGHT = AdmmConfig(eps_abs=1e-7, eps_rel=1e-7)


def fourtone_truth(seed=SEED):
    H = generate_waveforms(3, 4, split_seed(seed, model.STREAM_WAVEFORM))
    return GroundTruth(freqs=np.array([0.1, 0.15, 0.5]),
                       amps=np.array([1.0, 2.0, 3.0]),
                       waveform_coeffs=H)


def standard_problem(sigma=0.1, seed=SEED, eta=0.5):
    truth = fourtone_truth(seed)
    inst = make_instance(20, truth, sigma, seed)
    lam = regularization_lambda(sigma, inst.subspace, eta)
    return DenoiseProblem(y=inst.noisy, subspace=inst.subspace, lam=lam), inst


def small_problem(M, K, sigma, seed):
    sub = generate_subspace_rademacher(M, K, split_seed(seed, model.STREAM_SUBSPACE))
    H = generate_waveforms(1, K, split_seed(seed, model.STREAM_WAVEFORM))
    truth = GroundTruth(freqs=np.array([0.3]), amps=np.array([1.0]),
                        waveform_coeffs=H)
    inst = make_instance(M, truth, sigma, seed)
    lam = regularization_lambda(sigma, sub, 0.5)
    return DenoiseProblem(y=inst.noisy, subspace=inst.subspace, lam=lam), inst


class TestRegularizationLambda:
    def test_zero_sigma(self):
        sub = generate_subspace_rademacher(20, 4, SEED)
        assert regularization_lambda(0.0, sub, 0.5) == 0.0

    def test_standard_value(self):
        # 2 * 0.5 * 0.1 * 18 * sqrt(ln 81), evaluated independently
        sub = generate_subspace_rademacher(20, 4, SEED)
        assert sub.frob_norm == 18.0
        lam = regularization_lambda(0.1, sub, 0.5)
        assert lam == pytest.approx(3.773329466285538, rel=1e-12)

    def test_linear_in_sigma(self):
        sub = generate_subspace_rademacher(10, 3, SEED)
        assert regularization_lambda(0.2, sub, 0.7) == 2 * regularization_lambda(0.1, sub, 0.7)

    def test_rejects_bad_eta(self):
        sub = generate_subspace_rademacher(5, 2, SEED)
        with pytest.raises(ValueError):
            regularization_lambda(0.1, sub, 0.0)
        with pytest.raises(ValueError):
            regularization_lambda(0.1, sub, -1.0)

    def test_rejects_negative_sigma(self):
        sub = generate_subspace_rademacher(5, 2, SEED)
        with pytest.raises(ValueError):
            regularization_lambda(-0.1, sub, 0.5)


class TestProblemValidation:
    def test_length_mismatch(self):
        sub = generate_subspace_rademacher(5, 2, SEED)
        with pytest.raises(ValueError):
            DenoiseProblem(y=np.zeros(7, complex), subspace=sub, lam=1.0)

    def test_nonpositive_lambda(self):
        sub = generate_subspace_rademacher(5, 2, SEED)
        y = np.zeros(21, complex)
        with pytest.raises(ValueError):
            DenoiseProblem(y=y, subspace=sub, lam=0.0)

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdmmConfig(rho=-1.0)
        with pytest.raises(ValueError):
            AdmmConfig(max_iters=0)
        with pytest.raises(ValueError):
            AdmmConfig(eps_abs=0.0)


class TestSolveAdmm:
    def test_zero_data(self):
        sub = generate_subspace_rademacher(3, 2, SEED)
        prob = DenoiseProblem(y=np.zeros(13, complex), subspace=sub, lam=1.0)
        sol = solve_admm(prob)
        assert np.linalg.norm(sol.X_hat) <= 1e-6
        assert np.linalg.norm(sol.x_hat) <= 1e-6
        assert sol.objective <= 1e-6
        assert sol.converged

    @pytest.mark.parametrize("M,K", [(1, 1), (2, 2)])
    def test_matches_reference_solver(self, M, K):
        prob, _ = small_problem(M, K, 0.1, SEED + M + K)
        sol = solve_admm(prob, TIGHT)
        ref_obj, _ = reference_solver(prob, 64)
        # grid restriction means the reference sits slightly above
        assert sol.objective == pytest.approx(ref_obj, rel=1e-3)
        assert abs(sol.objective - ref_obj) / ref_obj <= 1e-4 or sol.objective <= ref_obj

    def test_noiseless_recovery(self):
        truth = fourtone_truth()
        inst = make_instance(20, truth, 0.0, SEED)
        lam = 1e-6 * inst.subspace.frob_norm
        prob = DenoiseProblem(y=inst.noisy, subspace=inst.subspace, lam=lam)
        sol = solve_admm(prob)
        mse = np.mean(np.abs(sol.x_hat - inst.clean) ** 2)
        assert mse <= 1e-6

    def test_deterministic(self):
        prob, _ = small_problem(2, 2, 0.1, SEED)
        a = solve_admm(prob)
        b = solve_admm(prob)
        np.testing.assert_array_equal(a.X_hat, b.X_hat)
        assert a.objective == b.objective
        assert a.iterations == b.iterations

    def test_nonconvergence_is_flagged(self):
        prob, _ = standard_problem()
        sol = solve_admm(prob, AdmmConfig(max_iters=5))
        assert not sol.converged
        assert sol.iterations == 5
        assert sol.primal_residual > 0

    def test_x_hat_consistent_with_X_hat(self):
        prob, _ = small_problem(3, 2, 0.1, SEED + 5)
        sol = solve_admm(prob)
        np.testing.assert_allclose(sol.x_hat, apply_B(sol.X_hat, prob.subspace),
                                   atol=1e-12)

    def test_objective_identity(self):
        # reported objective is evaluated at the returned block point
        prob, _ = standard_problem(seed=SEED + 1)
        sol = solve_admm(prob)
        recomputed = (0.5 * np.sum(np.abs(prob.y - sol.x_hat) ** 2)
                      + prob.lam * sol.atomic_norm_surrogate)
        assert sol.objective == pytest.approx(recomputed, abs=1e-10)

    @pytest.mark.parametrize("seed", [SEED, SEED + 2, SEED + 3])
    def test_psd_block_invariant(self, seed):
        prob, _ = standard_problem(seed=seed)
        sol = solve_admm(prob)
        u = sol.u_hat.u
        block = np.zeros((85, 85), dtype=complex)
        block[:81, :81] = build_toeplitz(u)
        block[81:, :81] = sol.X_hat
        block[:81, 81:] = sol.X_hat.conj().T
        block[81:, 81:] = sol.T_hat
        min_eig = np.linalg.eigvalsh(block)[0]
        assert min_eig >= -1e-6 * (1 + np.linalg.norm(u))
        assert min_eig >= -1e-6 * (1 + np.trace(block).real / 81)

    @pytest.mark.parametrize("seed", [SEED, SEED + 7])
    def test_objective_monotone_after_burn_in(self, seed):
        prob, _ = small_problem(8, 2, 0.1, seed)
        sol = solve_admm(prob)
        hist = sol.objective_history
        assert sol.iterations > 20
        increases = np.diff(hist[9:])
        assert increases.max() <= 1e-8

    @pytest.mark.parametrize("sigma", [0.025, 0.1, 0.25])
    def test_objective_monotone_standard_config(self, sigma):
        prob, _ = standard_problem(sigma=sigma)
        sol = solve_admm(prob)
        increases = np.diff(sol.objective_history[9:])
        assert increases.max() <= 1e-8

    def test_objective_stable_in_y(self):
        # coarse sanity: objective map is Lipschitz at the data scale
        rng = np.random.default_rng(SEED)
        sub = generate_subspace_rademacher(4, 2, SEED)
        N = sub.n_samples
        for _ in range(3):
            y1 = rng.standard_normal(N) + 1j * rng.standard_normal(N)
            y2 = y1 + 0.1 * (rng.standard_normal(N) + 1j * rng.standard_normal(N))
            o1 = solve_admm(DenoiseProblem(y=y1, subspace=sub, lam=1.0), TIGHT).objective
            o2 = solve_admm(DenoiseProblem(y=y2, subspace=sub, lam=1.0), TIGHT).objective
            bound = np.linalg.norm(y1 - y2) * (np.linalg.norm(y1) + np.linalg.norm(y2)) / 2
            assert abs(o1 - o2) <= bound

    def test_scalar_row_reduction(self):
        # K=1 with an all-ones subspace degenerates to the classic
        # line-spectral denoiser; the engine must agree with the
        # independent grid solver there
        M = 5
        N = 4 * M + 1
        sub = Subspace(rows=np.ones((N, 1), dtype=complex))
        rng = np.random.default_rng(SEED)
        H = rng.standard_normal((2, 1)) + 1j * rng.standard_normal((2, 1))
        H /= np.linalg.norm(H, axis=1, keepdims=True)
        truth = GroundTruth(freqs=np.array([0.2, 0.6]), amps=np.array([1.0, 1.5]),
                            waveform_coeffs=H)
        clean = model.generate_signal(sub, truth)
        noise = 0.1 * (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / math.sqrt(2)
        lam = regularization_lambda(0.1, sub, 0.5)
        prob = DenoiseProblem(y=clean + noise, subspace=sub, lam=lam)
        sol_a = solve_admm(prob, TIGHT)
        sol_b = solve_admm(prob, TIGHT)
        np.testing.assert_array_equal(sol_a.X_hat, sol_b.X_hat)
        ref_obj, _ = reference_solver(prob, 64)
        assert sol_a.objective == pytest.approx(ref_obj, rel=1e-3)


class TestReferenceSolver:
    def test_zero_data(self):
        sub = generate_subspace_rademacher(2, 1, SEED)
        prob = DenoiseProblem(y=np.zeros(9, complex), subspace=sub, lam=1.0)
        obj, x_hat = reference_solver(prob)
        assert obj == 0.0
        np.testing.assert_array_equal(x_hat, np.zeros(9))

    def test_grid_convergence(self):
        prob, _ = small_problem(3, 2, 0.1, SEED + 11)
        obj64, _ = reference_solver(prob, 64)
        obj128, _ = reference_solver(prob, 128)
        assert abs(obj64 - obj128) / obj128 <= 0.005

    def test_recovers_on_grid_atom(self):
        # tau = 1/4 lies on every grid whose size is a multiple of 4
        M = 3
        N = 4 * M + 1
        sub = generate_subspace_rademacher(M, 2, SEED)
        H = generate_waveforms(1, 2, SEED)
        truth = GroundTruth(freqs=np.array([0.25]), amps=np.array([1.0]),
                            waveform_coeffs=H)
        clean = model.generate_signal(sub, truth)
        prob = DenoiseProblem(y=clean, subspace=sub, lam=1e-8)
        _, x_hat = reference_solver(prob, 64)
        assert np.mean(np.abs(x_hat - clean) ** 2) <= 1e-6

    def test_size_guard(self):
        sub = generate_subspace_rademacher(11, 1, SEED)  # N = 45
        prob = DenoiseProblem(y=np.zeros(45, complex), subspace=sub, lam=1.0)
        with pytest.raises(ValueError):
            reference_solver(prob)

    def test_coarse_grid_warns(self):
        prob, _ = small_problem(1, 1, 0.1, SEED)
        with pytest.warns(RuntimeWarning):
            reference_solver(prob, 4)


class TestCheckOptimality:
    def test_zero_data_slacks(self):
        sub = generate_subspace_rademacher(3, 2, SEED)
        prob = DenoiseProblem(y=np.zeros(13, complex), subspace=sub, lam=2.5)
        sol = solve_admm(prob)
        cond1, cond2 = check_optimality(prob, sol)
        assert cond1 == pytest.approx(2.5, abs=2.5e-3)
        assert cond2 <= 1e-6

    def test_converged_instance_passes(self):
        prob, _ = standard_problem()
        sol = solve_admm(prob, TIGHT)
        cond1, cond2 = check_optimality(prob, sol)
        assert cond1 >= -prob.lam * 1e-3
        assert cond2 <= 1e-3

    def test_perturbation_breaks_conditions(self):
        prob, _ = small_problem(2, 2, 0.1, SEED + 13)
        sol = solve_admm(prob, TIGHT)
        rng = np.random.default_rng(SEED)
        Xp = sol.X_hat + 0.1 * (rng.standard_normal(sol.X_hat.shape)
                                + 1j * rng.standard_normal(sol.X_hat.shape))
        perturbed = dataclasses.replace(sol, X_hat=Xp,
                                        x_hat=apply_B(Xp, prob.subspace))
        cond1, cond2 = check_optimality(prob, perturbed)
        assert cond1 < -prob.lam * 1e-3 or cond2 > 1e-3


class TestOracleLsq:
    def test_noiseless_exact(self):
        truth = fourtone_truth()
        inst = make_instance(20, truth, 0.0, SEED)
        _, mse = oracle_lsq(inst.clean, inst.subspace, truth.freqs, inst.clean)
        assert mse <= 1e-20

    def test_rate_matches_theory(self):
        # mean MSE over 200 draws tracks sigma^2 * K * J / N
        truth = fourtone_truth()
        sigma, K, J, N = 0.1, 4, 3, 81
        theory = sigma ** 2 * K * J / N
        total = 0.0
        for t in range(200):
            inst = make_instance(20, truth, sigma, split_seed(SEED, 17, t))
            _, mse = oracle_lsq(inst.noisy, inst.subspace, truth.freqs, inst.clean)
            total += mse
        mean = total / 200
        assert abs(mean - theory) / theory <= 0.2

    def test_single_coefficient_projection(self):
        M, N, tau = 5, 21, 0.3
        sub = Subspace(rows=np.ones((N, 1), dtype=complex))
        rng = np.random.default_rng(SEED)
        y = rng.standard_normal(N) + 1j * rng.standard_normal(N)
        x_hat, _ = oracle_lsq(y, sub, [tau], np.zeros(N, complex))
        col = np.exp(-2j * np.pi * sub.sample_indices * tau)
        direct = col * (np.vdot(col, y) / N)
        np.testing.assert_allclose(x_hat, direct, atol=1e-10)

    def test_single_coefficient_rate(self):
        M, N, sigma = 5, 21, 0.1
        sub = Subspace(rows=np.ones((N, 1), dtype=complex))
        rng = np.random.default_rng(SEED)
        total = 0.0
        trials = 500
        for _ in range(trials):
            noise = sigma * (rng.standard_normal(N) + 1j * rng.standard_normal(N)) / math.sqrt(2)
            _, mse = oracle_lsq(noise, sub, [0.3], np.zeros(N, complex))
            total += mse
        assert abs(total / trials - sigma ** 2 / N) / (sigma ** 2 / N) <= 0.3

    def test_rank_deficient_design(self):
        # modulated rows built so the (tau=0.3, k=1) column collides
        # with the (tau=0.1, k=0) column exactly
        m = np.arange(-10, 11)
        rows = np.stack([np.ones(21), np.exp(-2j * np.pi * m * 0.2)], axis=1)
        sub = Subspace(rows=rows)
        y = np.zeros(21, complex)
        with pytest.raises(ValueError):
            oracle_lsq(y, sub, [0.3, 0.1], y)

    def test_duplicate_freqs_rejected(self):
        sub = generate_subspace_rademacher(5, 2, SEED)
        y = np.zeros(21, complex)
        with pytest.raises(ValueError):
            oracle_lsq(y, sub, [0.3, 0.3], y)

    def test_requires_enough_samples(self):
        sub = generate_subspace_rademacher(1, 2, SEED)  # N = 5
        y = np.zeros(5, complex)
        with pytest.raises(ValueError):
            oracle_lsq(y, sub, [0.1, 0.3, 0.5], y)


class TestSolutionJson:
    def test_round_trip(self, tmp_path):
        prob, _ = small_problem(2, 1, 0.1, SEED + 21)
        sol = solve_admm(prob)
        path = tmp_path / "solution.json"
        write_solution_json(path, sol, prob.lam)
        data = read_solution_json(path)
        assert data["objective"] == sol.objective
        assert data["atomic_norm_surrogate"] == sol.atomic_norm_surrogate
        assert data["iterations"] == sol.iterations
        assert data["converged"] is sol.converged
        assert data["lambda"] == prob.lam
        np.testing.assert_array_equal(data["x_hat"], sol.x_hat)
