import numpy as np
import pytest

from stiefelscf.alignment import (
    BlockOverlapError,
    BlockPolarAlignment,
    IdentityAlignment,
    PolarOfDAlignment,
    ScriptDPolarAlignment,
    align_rotation,
)
from stiefelscf.kernels import polar_factor, random_stiefel, sym_part, trace_norm
from stiefelscf.npdo import (
    NpdoConfig,
    kkt_residuals,
    npdo_locg,
    npdo_scf,
    npdo_scf_step,
    reduced_objective,
)
from stiefelscf.objective import AtomicTerm, ComposedObjective, outer_sum
from stiefelscf.problems import ProblemSpec, build


def make_psd(n, seed, shift=0.0):
    rng = np.random.default_rng(seed)
    G = rng.standard_normal((n, n))
    return G @ G.T / n + shift * np.eye(n)


def linear_objective(D):
    n, k = D.shape
    return ComposedObjective(n, k, (AtomicTerm.linear(D),), outer_sum(1),
                             field_recipe="composition",
                             alignment=ScriptDPolarAlignment(),
                             npdo_monotone=True, nepv_monotone=True)


class TestKktResiduals:
    def test_zero_at_eigenbasis(self):
        A = np.diag([5.0, 3.0, 1.0])
        obj = build(ProblemSpec("sep", 3, 2, {"A": A}))
        e1, e2 = kkt_residuals(obj, np.eye(3)[:, :2])
        assert e1 == pytest.approx(0.0, abs=1e-14)
        assert e2 == pytest.approx(0.0, abs=1e-14)

    def test_zero_at_polar_factor_of_d(self):
        D = np.random.default_rng(1).standard_normal((6, 2))
        obj = linear_objective(D)
        P = polar_factor(D).orthogonal_factor
        e1, e2 = kkt_residuals(obj, P)
        assert e1 <= 1e-12 and e2 <= 1e-12

    def test_positive_generically(self):
        obj = build(ProblemSpec("mbsub", 6, 2, {
            "A": make_psd(6, 0), "D": np.random.default_rng(2).standard_normal((6, 2))}))
        for seed in range(5):
            e1, e2 = kkt_residuals(obj, random_stiefel(6, 2, seed))
            assert e1 > 1e-6 and e2 > 1e-8


class TestAlignRotation:
    def test_identity(self):
        P_hat = random_stiefel(5, 2, 0)
        Q, P = align_rotation(IdentityAlignment(), P_hat, None, None)
        assert np.allclose(Q, np.eye(2))
        assert P is P_hat or np.allclose(P, P_hat)

    def test_sign_flip_k1(self):
        D = np.array([[1.0], [0.0]])
        P_hat = np.array([[-0.5], [np.sqrt(3) / 2]])
        Q, P = align_rotation(PolarOfDAlignment(D), P_hat, None, None)
        assert Q[0, 0] == pytest.approx(-1.0)
        assert (P.T @ D).item() == pytest.approx(0.5)

    def test_script_d_psd_after_rotation(self):
        # Swap-structured P_hat'D is cured by the polar rotation.
        D = np.array([[0.0, 1.0], [1.0, 0.0], [0.0, 0.0]])
        P_hat = np.eye(3)[:, :2]
        obj = linear_objective(D)
        Q, P = align_rotation(ScriptDPolarAlignment(), P_hat, obj, P_hat)
        assert np.allclose(Q, [[0.0, 1.0], [1.0, 0.0]])
        S = P.T @ D
        assert np.allclose(S, np.eye(2))
        assert np.linalg.eigvalsh(sym_part(S))[0] >= -1e-12

    def test_per_block_rotation(self):
        n, k = 6, 3
        rng = np.random.default_rng(3)
        blocks = ((0, 1), (2,))
        A_list = [make_psd(n, 10), make_psd(n, 11)]
        D_list = [rng.standard_normal((n, 2)), rng.standard_normal((n, 1))]
        obj = build(ProblemSpec("sumct", n, k, {"A_list": A_list, "D_list": D_list},
                                blocks=blocks))
        P_hat = random_stiefel(n, k, 5)
        Q, P = align_rotation(obj.alignment, P_hat, obj, P_hat)
        assert np.allclose(Q.T @ Q, np.eye(k), atol=1e-12)
        for cols, D_j in zip(blocks, D_list):
            S = sym_part(P[:, list(cols)].T @ D_j)
            assert np.linalg.eigvalsh(S)[0] >= -1e-12
        # Off-block entries of Q stay zero, unselected columns identity.
        assert Q[2, 0] == 0.0 and Q[0, 2] == 0.0

    def test_block_overlap_rejected(self):
        n, k = 4, 2
        D = np.ones((n, 2))
        terms = (AtomicTerm.linear(D[:, :1], cols=(0,)),
                 AtomicTerm.linear(D[:, :1], cols=(0,)))
        obj = ComposedObjective(n, k, terms, outer_sum(2),
                                alignment=BlockPolarAlignment((0, 1)))
        with pytest.raises(BlockOverlapError):
            align_rotation(obj.alignment, random_stiefel(n, k, 0), obj,
                           random_stiefel(n, k, 0))


class TestNpdoScfStep:
    def test_linear_one_step(self):
        rng = np.random.default_rng(4)
        D = rng.standard_normal((7, 2))
        obj = linear_objective(D)
        P0 = random_stiefel(7, 2, 1)
        P1, rec = npdo_scf_step(obj, P0)
        assert obj.value(P1) == pytest.approx(trace_norm(D), rel=1e-12)
        assert rec.eta >= -1e-12

    def test_sep_k1_power_iteration(self):
        A = np.diag([5.0, 3.0, 1.0])
        obj = build(ProblemSpec("sep", 3, 1, {"A": A}))
        P = np.full((3, 1), 1.0 / np.sqrt(3.0))
        for _ in range(200):
            P, _ = npdo_scf_step(obj, P)
        assert abs(P[0, 0]) == pytest.approx(1.0, abs=1e-10)
        assert obj.value(P) == pytest.approx(5.0, abs=1e-9)

    def test_monotone_and_certified_on_quad_lin2(self):
        # f = tr(P'AP) + tr((P'D)^2) on the circle, against a dense sweep.
        A = np.diag([2.0, 1.0])
        D = np.array([[0.0], [1.0]])
        obj = build(ProblemSpec("quad_lin2", 2, 1, {"A": A, "D": D}))
        rep = npdo_scf(obj, random_stiefel(2, 1, 0))
        fs = [rep.f_initial] + [r.f for r in rep.iterations]
        assert all(b >= a - 1e-12 * max(1, abs(a)) for a, b in zip(fs, fs[1:]))
        angles = np.linspace(0, 2 * np.pi, 62832, endpoint=False)
        best = max(obj.value(np.array([[np.cos(t)], [np.sin(t)]])) for t in angles)
        assert rep.f_final == pytest.approx(best, abs=1e-6)
        certs = rep.certificates
        assert certs["lambda_min_of_multiplier"] >= -1e-8 * certs["multiplier_norm"]


class TestNpdoScf:
    def test_linear_converges_in_one_iteration(self):
        rng = np.random.default_rng(6)
        D = rng.standard_normal((8, 3))
        obj = linear_objective(D)
        rep = npdo_scf(obj, random_stiefel(8, 3, 2))
        assert rep.converged
        assert rep.num_iterations == 1
        assert rep.f_final == pytest.approx(trace_norm(D), abs=1e-10)

    def test_mbsub_converges_with_certificates(self):
        n, k = 30, 3
        rng = np.random.default_rng(7)
        obj = build(ProblemSpec("mbsub", n, k, {
            "A": make_psd(n, 70), "D": rng.standard_normal((n, k))}))
        rep = npdo_scf(obj, random_stiefel(n, k, 3))
        assert rep.converged and rep.num_iterations <= 5000
        c = rep.certificates
        assert c["lambda_min_of_multiplier"] >= -1e-8 * c["multiplier_norm"]
        assert c["eps_sym"] <= 1e-8

    def test_sumct_monotone_and_per_block_psd(self):
        n, k = 12, 4
        rng = np.random.default_rng(8)
        blocks = ((0, 1), (2, 3))
        obj = build(ProblemSpec("sumct", n, k, {
            "A_list": [make_psd(n, 80), make_psd(n, 81)],
            "D_list": [rng.standard_normal((n, 2)), rng.standard_normal((n, 2))]},
            blocks=blocks))
        rep = npdo_scf(obj, random_stiefel(n, k, 4))
        assert rep.converged
        fs = [rep.f_initial] + [r.f for r in rep.iterations]
        assert all(b >= a - 1e-12 * max(1, abs(a)) for a, b in zip(fs, fs[1:]))
        P = rep.point
        for cols, term in zip(blocks, obj.terms[2:]):
            S = sym_part(P[:, list(cols)].T @ term.matrix)
            assert np.linalg.eigvalsh(S)[0] >= -1e-10 * max(
                1.0, np.linalg.norm(term.matrix, 2))

    def test_eta_nonnegative_along_trace(self):
        obj = build(ProblemSpec("mbsub", 10, 2, {
            "A": make_psd(10, 90),
            "D": np.random.default_rng(9).standard_normal((10, 2))}))
        rep = npdo_scf(obj, random_stiefel(10, 2, 5))
        assert all(r.eta >= -1e-12 * max(1.0, abs(r.f)) for r in rep.iterations)

    def test_infeasible_start_projected(self):
        # A start with P'D not PSD gets one alignment application.
        D = np.array([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
        obj = linear_objective(D)
        P0 = -np.eye(3)[:, :2]
        rep = npdo_scf(obj, P0)
        assert rep.converged
        assert rep.f_final == pytest.approx(2.0, abs=1e-10)


class TestReducedObjective:
    def test_identity_basis(self):
        obj = build(ProblemSpec("mbsub", 6, 2, {
            "A": make_psd(6, 1), "D": np.random.default_rng(0).standard_normal((6, 2))}))
        red = reduced_objective(obj, np.eye(6))
        for seed in range(3):
            P = random_stiefel(6, 2, seed)
            assert red.value(P) == pytest.approx(obj.value(P), rel=1e-12)

    def test_sep_rayleigh_ritz(self):
        A = make_psd(8, 3)
        obj = build(ProblemSpec("sep", 8, 2, {"A": A}))
        W = random_stiefel(8, 4, 1)
        red = reduced_objective(obj, W)
        # Substituted atomic structure: W'AW drives the reduced problem.
        assert np.allclose(red.terms[0].matrix, sym_part(W.T @ A @ W), atol=1e-12)
        for seed in range(100):
            Z = random_stiefel(4, 2, seed)
            assert red.value(Z) == pytest.approx(obj.value(W @ Z), rel=1e-12)
        from stiefelscf.nepv import nepv_scf
        rep = nepv_scf(red, random_stiefel(4, 2, 0))
        w = np.sort(np.linalg.eigvalsh(W.T @ A @ W))[::-1]
        assert rep.f_final == pytest.approx(w[:2].sum(), abs=1e-10)

    def test_reduced_gradient_fd(self):
        obj = build(ProblemSpec("mbsub", 7, 2, {
            "A": make_psd(7, 2), "D": np.random.default_rng(1).standard_normal((7, 2))}))
        W = random_stiefel(7, 5, 2)
        red = reduced_objective(obj, W)
        Z = random_stiefel(5, 2, 3)
        G = red.euclidean_grad(Z)
        FD = np.zeros_like(G)
        h = 1e-6
        for i in range(5):
            for j in range(2):
                E = np.zeros((5, 2))
                E[i, j] = h
                FD[i, j] = (red.value(Z + E) - red.value(Z - E)) / (2 * h)
        assert np.linalg.norm(FD - G) <= 1e-6 * max(1.0, np.linalg.norm(G))

    def test_rejects_non_orthonormal_basis(self):
        obj = build(ProblemSpec("sep", 5, 2, {"A": make_psd(5, 0)}))
        with pytest.raises(ValueError):
            reduced_objective(obj, np.ones((5, 3)))


class TestNpdoLocg:
    def test_first_step_basis_width(self):
        # Without a previous iterate the subspace has at most 2k columns.
        from stiefelscf.kernels import orthonormalize_against
        obj = build(ProblemSpec("sep", 10, 2, {"A": make_psd(10, 4, 1.0)}))
        P = random_stiefel(10, 2, 0)
        W_extra = orthonormalize_against(P, obj.riemannian_grad(P))
        assert W_extra.shape[1] <= 2

    def test_accelerates_slow_sep(self):
        # Eigenvalue ratio 0.99 makes plain polar SCF crawl.
        n, k = 50, 2
        vals = np.concatenate([[1.5, 1.0], np.linspace(0.99, 0.01, n - 2)])
        rng = np.random.default_rng(10)
        Q, _ = np.linalg.qr(rng.standard_normal((n, n)))
        A = Q @ np.diag(vals) @ Q.T
        obj = build(ProblemSpec("sep", n, k, {"A": sym_part(A)}))
        P0 = random_stiefel(n, k, 6)
        plain = npdo_scf(obj, P0)
        metric = npdo_locg(obj, P0)
        assert plain.converged and metric.converged
        assert metric.num_iterations < plain.num_iterations
        assert metric.f_final == pytest.approx(2.5, abs=1e-6)

    def test_monotone_outer_steps(self):
        n, k = 20, 3
        rng = np.random.default_rng(11)
        obj = build(ProblemSpec("mbsub", n, k, {
            "A": make_psd(n, 110), "D": rng.standard_normal((n, k))}))
        rep = npdo_locg(obj, random_stiefel(n, k, 7))
        assert rep.converged
        fs = [rep.f_initial] + [r.f for r in rep.iterations]
        assert all(b >= a - 1e-12 * max(1, abs(a)) for a, b in zip(fs, fs[1:]))

    def test_stationary_start_short_circuits(self):
        A = np.diag([5.0, 3.0, 1.0])
        obj = build(ProblemSpec("sep", 3, 2, {"A": A}))
        rep = npdo_locg(obj, np.eye(3)[:, :2])
        assert rep.converged
        assert rep.num_iterations == 0

    def test_agrees_with_plain_scf(self):
        n, k = 15, 2
        rng = np.random.default_rng(12)
        obj = build(ProblemSpec("mbsub", n, k, {
            "A": make_psd(n, 120), "D": rng.standard_normal((n, k))}))
        P0 = random_stiefel(n, k, 8)
        f_plain = npdo_scf(obj, P0).f_final
        f_locg = npdo_locg(obj, P0).f_final
        assert f_locg == pytest.approx(f_plain, rel=1e-7)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ValueError):
            NpdoConfig(tol=0.0)
        with pytest.raises(ValueError):
            NpdoConfig(tolerance_fraction=1.5)
