import numpy as np
import pytest
from numpy.testing import assert_allclose

from conftest import random_weight
from linverse.bounds import (
    BoundReport,
    ErrorPair,
    ProblemInstance,
    compute_errors,
    conditioning,
    squared_deterministic_rhs,
    squared_exact_rhs,
    squared_uniform_rhs,
    transformed_bound,
    unsquared_deterministic_rhs,
    unsquared_exact_rhs,
    unsquared_uniform_rhs,
    verify_bound,
)
from linverse.concentration import calibrate_tails
from linverse.errors import NonpositiveTau
from linverse.geometry import PenaltyNorm, WeightMatrix, loss, penalty_norm, psd_sqrt
from linverse.solvers import SolveConfig, oracle_infimum, select_rho, solve_unsquared

CFG = SolveConfig(objective_tolerance=1e-11)


def make_instance(rng, m=4, d=3, noise=0.3, pen=PenaltyNorm.L1, trial=1):
    A = rng.standard_normal((m, d))
    b = rng.standard_normal(m)
    M = random_weight(rng, m, identity_every=3, trial=trial)
    return ProblemInstance(A, b, A + noise * rng.standard_normal((m, d)),
                           b + noise * rng.standard_normal(m), M, pen)


def make_tails(rng, n=60):
    return calibrate_tails(rng.uniform(0.01, 1.0, n), rng.uniform(0.01, 1.0, n), 100)


class TestComputeErrors:
    def test_no_noise(self):
        rng = np.random.default_rng(0)
        inst = make_instance(rng, noise=0.0)
        errs = compute_errors(inst)
        assert errs.delta_a == 0.0 and errs.delta_b == 0.0

    def test_diagonal_l1(self):
        A = np.diag([2.0, 5.0])
        inst = ProblemInstance(A, np.zeros(2), A - np.diag([1.0, 3.0]), np.zeros(2),
                               WeightMatrix.identity(2), PenaltyNorm.L1)
        assert compute_errors(inst).delta_a == pytest.approx(3.0)

    def test_random_direction_lower_bound(self):
        rng = np.random.default_rng(1)
        inst = make_instance(rng)
        errs = compute_errors(inst)
        E = inst.M.sqrt_cache @ (inst.A - inst.A_obs)
        for _ in range(1000):
            v = rng.standard_normal(3)
            v /= np.abs(v).sum()
            assert np.linalg.norm(E @ v) <= errs.delta_a + 1e-10

    def test_homogeneous_in_noise(self):
        rng = np.random.default_rng(2)
        A = rng.standard_normal((4, 3))
        N = rng.standard_normal((4, 3))
        M = WeightMatrix.identity(4)
        b = rng.standard_normal(4)
        base = compute_errors(ProblemInstance(A, b, A + N, b, M, PenaltyNorm.L2)).delta_a
        for alpha in (0.0, 0.5, 2.0, 7.5):
            scaled = compute_errors(ProblemInstance(A, b, A + alpha * N, b, M, PenaltyNorm.L2)).delta_a
            assert scaled == pytest.approx(alpha * base, rel=1e-12, abs=1e-12)


class TestDeterministicRhs:
    def test_noiseless_collapse_unsquared(self):
        rng = np.random.default_rng(3)
        inst = make_instance(rng, noise=0.0)
        lam = 0.4
        rhs = unsquared_deterministic_rhs(inst, lam, ErrorPair(0.0, 0.0), CFG)
        inf_val = oracle_infimum(inst.A, inst.b, inst.M, lam, inst.penalty, CFG)
        assert rhs == pytest.approx(inf_val, rel=1e-12)

    def test_scalar_consistent(self):
        inst = ProblemInstance([[1.0]], [1.0], [[1.0]], [1.0],
                               WeightMatrix.identity(1), PenaltyNorm.L1)
        rhs = unsquared_deterministic_rhs(inst, 0.5, ErrorPair(0.0, 0.0), CFG)
        assert rhs == pytest.approx(0.5, abs=1e-9)

    def test_lam_equals_delta_a(self):
        rng = np.random.default_rng(4)
        inst = make_instance(rng)
        errs = compute_errors(inst)
        lam = errs.delta_a
        rhs = unsquared_deterministic_rhs(inst, lam, errs, CFG)
        expect = oracle_infimum(inst.A, inst.b, inst.M, 2 * errs.delta_a, inst.penalty, CFG) \
            + 2 * errs.delta_b
        assert rhs == pytest.approx(expect, rel=1e-9)

    def test_noiseless_collapse_squared(self):
        rng = np.random.default_rng(5)
        inst = make_instance(rng, noise=0.0)
        lam, c = 0.3, 0.17
        rhs = squared_deterministic_rhs(inst, lam, c, ErrorPair(0.0, 0.0), CFG)
        inf_val = oracle_infimum(inst.A, inst.b, inst.M, 2 * lam, inst.penalty, CFG)
        assert rhs == pytest.approx(inf_val + c, rel=1e-9)

    def test_ideal_choice_squared(self):
        # lam = delta_a, c = delta_b collapses the factors to 3-and-3
        rng = np.random.default_rng(6)
        inst = make_instance(rng)
        errs = compute_errors(inst)
        rhs = squared_deterministic_rhs(inst, errs.delta_a, errs.delta_b, errs, CFG)
        expect = oracle_infimum(inst.A, inst.b, inst.M, 3 * errs.delta_a, inst.penalty, CFG) \
            + 3 * errs.delta_b
        assert rhs == pytest.approx(expect, rel=1e-9)

    def test_monotone_in_errors(self):
        rng = np.random.default_rng(7)
        inst = make_instance(rng)
        lam, c = 0.25, 0.1
        base = ErrorPair(0.3, 0.2)
        for bump_a, bump_b in ((0.1, 0.0), (0.0, 0.1), (0.5, 0.5)):
            bumped = ErrorPair(base.delta_a + bump_a, base.delta_b + bump_b)
            assert unsquared_deterministic_rhs(inst, lam, bumped, CFG) >= \
                unsquared_deterministic_rhs(inst, lam, base, CFG) - 1e-9
            assert squared_deterministic_rhs(inst, lam, c, bumped, CFG) >= \
                squared_deterministic_rhs(inst, lam, c, base, CFG) - 1e-9


class TestHighProbabilityRhs:
    def test_unsquared_uniform_at_base_confidence(self):
        rng = np.random.default_rng(8)
        inst = make_instance(rng)
        tails = make_tails(rng)
        delta = 1.0 / np.e
        rhs = unsquared_uniform_rhs(inst, tails, delta, CFG)
        inf_val = oracle_infimum(inst.A, inst.b, inst.M, 2 * tails.s_a, inst.penalty, CFG)
        assert rhs == pytest.approx(inf_val + 2 * tails.s_b, rel=1e-9)

    def test_unsquared_uniform_feasible_point_bound(self):
        rng = np.random.default_rng(9)
        A = rng.standard_normal((4, 2))
        theta0 = rng.standard_normal(2)
        inst = ProblemInstance(A, A @ theta0, A, A @ theta0,
                               WeightMatrix.identity(4), PenaltyNorm.L1)
        tails = make_tails(rng)
        for delta in (0.5, 0.25, 0.05):
            za, zb = tails.z_a(delta), tails.z_b(delta)
            rhs = unsquared_uniform_rhs(inst, tails, delta, CFG)
            cap = max(1.0, za) * tails.s_a * (1 + za) * penalty_norm(theta0, PenaltyNorm.L1) \
                + tails.s_b * (1 + za) * zb
            assert rhs <= cap + 1e-9

    def test_uniform_independent_rearithmetic(self):
        rng = np.random.default_rng(10)
        inst = make_instance(rng)
        tails = make_tails(rng)
        delta = 0.2
        za, zb = tails.z_a(delta), tails.z_b(delta)
        inf_u = oracle_infimum(inst.A, inst.b, inst.M, tails.s_a * (1 + za), inst.penalty, CFG)
        expect = max(1.0, za) * inf_u + tails.s_b * (1 + za) * zb
        assert unsquared_uniform_rhs(inst, tails, delta, CFG) == pytest.approx(expect, rel=1e-12)
        inf_s = oracle_infimum(inst.A, inst.b, inst.M, tails.s_a * (za + 2), inst.penalty, CFG)
        expect_s = max(1.0, za) * inf_s + max(2.0, 1 + za) * tails.s_b * zb + max(1.0, za) * tails.s_b
        assert squared_uniform_rhs(inst, tails, delta, CFG) == pytest.approx(expect_s, rel=1e-12)

    def test_squared_uniform_hand_arithmetic(self):
        # z_a = 3, s_a = 0.1, s_b = 0.05, z_b = 2, infimum 0.7 -> 3*0.7 + 4*0.1 + 3*0.05
        za, sa, sb, zb, inf_val = 3.0, 0.1, 0.05, 2.0, 0.7
        out = max(1.0, za) * inf_val + max(2.0, 1 + za) * sb * zb + max(1.0, za) * sb
        assert out == pytest.approx(2.65)

    def test_exact_rhs_matches_deterministic_substitution(self):
        rng = np.random.default_rng(11)
        for trial in range(5):
            pen = PenaltyNorm.L1 if trial % 2 == 0 else PenaltyNorm.L2
            inst = make_instance(rng, pen=pen, trial=trial)
            tails = make_tails(rng)
            for delta in (0.7, 1.0 / np.e, 0.12):
                level_a = tails.s_a * tails.z_a(delta)
                level_b = tails.s_b * tails.z_b(delta)
                got = unsquared_exact_rhs(inst, tails, delta, CFG)
                want = unsquared_deterministic_rhs(inst, level_a, ErrorPair(level_a, level_b), CFG)
                assert got == want
                inf_val = oracle_infimum(inst.A, inst.b, inst.M, 2 * level_a, pen, CFG)
                assert got == pytest.approx(inf_val + 2 * level_b, rel=1e-12)
                got_s = squared_exact_rhs(inst, tails, delta, CFG)
                want_s = squared_deterministic_rhs(inst, level_a, level_b, ErrorPair(level_a, level_b), CFG)
                assert got_s == want_s
                inf_s = oracle_infimum(inst.A, inst.b, inst.M, 3 * level_a, pen, CFG)
                assert got_s == pytest.approx(inf_s + 3 * level_b, rel=1e-12)

    def test_exact_equals_uniform_at_base_confidence(self):
        rng = np.random.default_rng(12)
        inst = make_instance(rng)
        tails = make_tails(rng)
        delta = 1.0 / np.e
        assert unsquared_exact_rhs(inst, tails, delta, CFG) == \
            pytest.approx(unsquared_uniform_rhs(inst, tails, delta, CFG), rel=1e-11)
        assert squared_exact_rhs(inst, tails, delta, CFG) == \
            pytest.approx(squared_uniform_rhs(inst, tails, delta, CFG), rel=1e-11)

    def test_monotone_in_tail_levels(self):
        rng = np.random.default_rng(13)
        inst = make_instance(rng)
        tails = make_tails(rng)
        deltas = (0.8, 0.5, 0.2, 0.05)
        vals = [unsquared_exact_rhs(inst, tails, d, CFG) for d in deltas]
        for small, big in zip(vals, vals[1:]):
            assert big >= small - 1e-9


class TestVerifyBound:
    def test_zero_loss_holds(self):
        inst = ProblemInstance(np.eye(2), [1.0, 2.0], np.eye(2), [1.0, 2.0],
                               WeightMatrix.identity(2), PenaltyNorm.L1)
        rep = verify_bound("check", [1.0, 2.0], inst, 0.5)
        assert rep.holds and rep.lhs == 0.0

    def test_boundary(self):
        inst = ProblemInstance(np.eye(2), [1.0, 0.0], np.eye(2), [1.0, 0.0],
                               WeightMatrix.identity(2), PenaltyNorm.L1)
        lhs = loss([0.0, 0.0], inst.A, inst.b, inst.M)
        rep = verify_bound("check", [0.0, 0.0], inst, lhs)
        assert rep.slack == 0.0 and rep.holds

    def test_deterministic_sweep(self):
        # module-level sweep; the acceptance suite runs the full thousand
        rng = np.random.default_rng(14)
        eps = 1e-6 + 2 * CFG.objective_tolerance
        for trial in range(25):
            m = int(rng.integers(1, 9))
            d = int(rng.integers(1, 9))
            pen = PenaltyNorm.L1 if trial % 2 == 0 else PenaltyNorm.L2
            noise = 10 ** rng.uniform(-3, 0)
            inst = make_instance(rng, m=m, d=d, noise=noise, pen=pen, trial=trial)
            lam = 10 ** rng.uniform(-3, 1)
            c = 10 ** rng.uniform(-3, 1)
            errs = compute_errors(inst)
            res = solve_unsquared(inst.A_obs, inst.b_obs, inst.M, lam, pen, CFG)
            rep = verify_bound("unsquared_deterministic", res.theta, inst,
                               unsquared_deterministic_rhs(inst, lam, errs, CFG), eps)
            assert rep.holds, (trial, rep)
            sel = select_rho(inst.A_obs, inst.b_obs, inst.M, lam, c, pen, CFG)
            rep2 = verify_bound("squared_deterministic", sel.result.theta, inst,
                                squared_deterministic_rhs(inst, lam, c, errs, CFG), eps)
            assert rep2.holds, (trial, rep2)


class TestConditioning:
    def test_inverse_weight_gives_unit_pair(self):
        rng = np.random.default_rng(15)
        G = rng.standard_normal((3, 3))
        C = G @ G.T + 0.5 * np.eye(3)
        M = WeightMatrix.from_inverse(C)
        kappa, tau = conditioning(M, C)
        assert kappa == pytest.approx(1.0, abs=1e-10)
        assert tau == pytest.approx(1.0, abs=1e-10)

    def test_diagonal(self):
        kappa, tau = conditioning(WeightMatrix.identity(2), np.diag([4.0, 1.0]))
        assert kappa == pytest.approx(4.0) and tau == pytest.approx(1.0)

    def test_matches_eigendecomposition(self):
        rng = np.random.default_rng(16)
        for _ in range(20):
            G1 = rng.standard_normal((3, 3))
            G2 = rng.standard_normal((3, 3))
            Mmat = G1 @ G1.T + 0.1 * np.eye(3)
            C = G2 @ G2.T + 0.1 * np.eye(3)
            M = WeightMatrix.from_matrix(Mmat)
            kappa, tau = conditioning(M, C)
            S = psd_sqrt(Mmat)
            ev = np.linalg.eigvalsh(S @ C @ S)
            assert tau == pytest.approx(ev.min(), abs=1e-8 * max(1, ev.max()))
            assert kappa == pytest.approx(ev.max() / ev.min(), rel=1e-7)
            assert kappa >= 1.0 - 1e-10
            assert tau > 0


class TestTransformedBound:
    def test_unit_pair_is_identity(self):
        assert transformed_bound((1.3, 0.7), 1.0, 1.0) == pytest.approx(2.0)

    def test_hand_arithmetic(self):
        assert transformed_bound((1.0, 1.0), 4.0, 0.25) == pytest.approx(4.0)

    def test_nonpositive_tau(self):
        with pytest.raises(NonpositiveTau):
            transformed_bound((1.0, 1.0), 2.0, 0.0)

    def test_norm_transfer_inequality(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            G1 = rng.standard_normal((3, 3))
            G2 = rng.standard_normal((3, 3))
            Mmat = G1 @ G1.T + 0.2 * np.eye(3)
            C = G2 @ G2.T + 0.2 * np.eye(3)
            M = WeightMatrix.from_matrix(Mmat)
            Cinv_w = WeightMatrix.from_inverse(C)
            S = psd_sqrt(Mmat)
            factor = np.sqrt(np.linalg.eigvalsh(
                np.linalg.inv(S) @ np.linalg.inv(C) @ np.linalg.inv(S)).max())
            for _ in range(100):
                x = rng.standard_normal(3)
                lhs = np.sqrt(x @ Cinv_w.entries @ x)
                rhs = factor * np.sqrt(x @ Mmat @ x)
                assert lhs <= rhs * (1 + 1e-9) + 1e-12
