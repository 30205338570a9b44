import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from entropic_sdot.dual_solver import solve_dual, solver_rule
from entropic_sdot.entropic_core import (
    Potential,
    c_eps_transform,
    kantorovich_eval,
    laguerre_index,
    legendre_transform,
    log_soft_assignment,
    soft_assignment,
    solve_zero_sum,
)
from entropic_sdot.measures import DiscreteTarget, builtin_density

from conftest import NAMES, five_point, symmetric_pair

Y2 = DiscreteTarget([-1.0, 1.0], [0.5, 0.5])


class TestPotential:
    def test_recentered(self):
        p = Potential([1.0, 2.0, 6.0], epsilon=0.1)
        assert abs(p.sum()) <= 1e-12 * 3
        assert p.epsilon == 0.1 and not p.solved

    def test_arithmetic_returns_plain_array(self):
        p = Potential([1.0, -1.0]) + 5.0
        assert type(p) is np.ndarray
        assert np.allclose(p, [6.0, 4.0])

    def test_pickle_roundtrip(self):
        import pickle

        p = Potential([0.3, -0.1, -0.2], epsilon=0.5, solved=True)
        q = pickle.loads(pickle.dumps(p))
        assert np.array_equal(p, q) and q.epsilon == 0.5 and q.solved

    def test_sup_norm_bound(self):
        rho = builtin_density("lebesgue")
        p = Potential([0.0, 0.0], epsilon=0.5)
        assert p.sup_norm_bound(rho, Y2) == pytest.approx(2.0 + 0.5 * np.log(2))


class TestCEpsTransform:
    def test_single_zero_target(self):
        t = DiscreteTarget([0.0], [1.0])
        assert c_eps_transform([0.0], t, 0.7, 1.0) == pytest.approx(0.0, abs=1e-15)

    def test_symmetric_pair_at_zero(self):
        assert c_eps_transform([0.0, 0.0], Y2, 0.0, 1.0) == pytest.approx(np.log(2), abs=1e-15)

    def test_stabilized_small_eps(self):
        val = c_eps_transform([0.0, 0.0], Y2, 0.5, 0.01)
        assert np.isfinite(val)
        assert val == pytest.approx(0.5 + 0.01 * np.log1p(np.exp(-100.0)), abs=1e-15)

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            c_eps_transform([0.0, 0.0], Y2, 0.0, 0.0)


class TestLegendre:
    def test_tie(self):
        v, s = legendre_transform([0.0, 0.0], Y2, 0.0)
        assert v == 0.0 and s == {0, 1}

    def test_strict(self):
        v, s = legendre_transform([0.0, 0.0], Y2, 0.3)
        assert v == pytest.approx(0.3) and s == {1}

    def test_shifted(self):
        v, s = legendre_transform([0.5, -0.5], Y2, 0.0)
        assert v == pytest.approx(0.5) and s == {1}

    def test_laguerre_membership(self):
        assert laguerre_index([0.0, 0.0], Y2, -0.2) == {0}
        assert laguerre_index([0.0, 0.0], Y2, 0.0) == {0, 1}

    def test_laguerre_matches_breakpoints(self):
        y = np.array([-0.8, -0.1, 0.4, 0.9])
        t = DiscreteTarget(y, np.full(4, 0.25))
        psi = np.array([0.3, -0.05, 0.02, 0.4])
        b = np.diff(psi) / np.diff(y)
        assert np.all(np.diff(b) > 0)  # every cell non-empty
        x = np.linspace(-1, 1, 2001)
        x = x[np.min(np.abs(x[:, None] - b[None, :]), axis=1) > 1e-9]
        sets = laguerre_index(psi, t, x)
        expected = np.searchsorted(b, x)
        assert all(s == {int(e)} for s, e in zip(sets, expected))


class TestSoftAssignment:
    @pytest.mark.parametrize("eps", [1e-3, 0.1, 10.0])
    def test_symmetric_half(self, eps):
        assert np.allclose(soft_assignment([0.0, 0.0], Y2, 0.0, eps), 0.5)

    def test_direct_softmax(self):
        p = soft_assignment([0.0, 0.0], Y2, 1.0, 1.0)
        assert p[0] == pytest.approx(1 / (1 + np.exp(2)), abs=1e-15)
        assert p[1] == pytest.approx(np.exp(2) / (1 + np.exp(2)), abs=1e-15)

    def test_indicator_limit(self):
        for eps in (0.2, 0.1, 0.05):
            p = soft_assignment([0.0, 0.0], Y2, 0.5, eps)
            assert abs(p[1] - 1.0) <= np.exp(-1.0 / eps)

    def test_log_agrees_and_finite(self):
        x = np.linspace(-1, 1, 7)
        lp = log_soft_assignment([0.1, -0.1], Y2, x, 1e-4)
        assert np.all(np.isfinite(lp))
        assert np.allclose(np.exp(lp), soft_assignment([0.1, -0.1], Y2, x, 1e-4))

    @settings(max_examples=100, deadline=None)
    @given(
        psi=st.lists(st.floats(-3, 3), min_size=3, max_size=3),
        x=st.floats(-1, 1),
        eps=st.floats(1e-4, 10.0),
    )
    def test_on_simplex(self, psi, x, eps):
        t = DiscreteTarget([-0.5, 0.2, 0.9], [0.2, 0.3, 0.5])
        p = soft_assignment(psi, t, x, eps)
        assert np.all(p >= 0) and np.all(np.isfinite(p))
        assert abs(p.sum() - 1.0) <= 1e-12


@settings(max_examples=200, deadline=None)
@given(
    psi=st.lists(st.floats(-3, 3), min_size=4, max_size=4),
    x=st.floats(-1, 1),
    eps=st.floats(1e-4, 10.0),
)
def test_lse_sandwich(psi, x, eps):
    t = DiscreteTarget([-1.0, -0.3, 0.4, 1.0], np.full(4, 0.25))
    star, _ = legendre_transform(psi, t, x)
    val = c_eps_transform(psi, t, x, eps)
    assert star - 1e-12 <= val <= star + eps * np.log(4) + 1e-12


class TestKantorovich:
    def setup_method(self):
        self.rho, self.target = five_point()
        self.rule = solver_rule(self.rho)
        rng = np.random.default_rng(3)
        self.psi = rng.normal(size=5)
        self.psi -= self.psi.mean()

    def test_structural_invariants(self):
        ev = kantorovich_eval(self.psi, self.rho, 0.2, self.rule, self.target)
        assert np.all(ev.gradient <= 0) and np.all(ev.gradient >= -1)
        assert ev.gradient.sum() == pytest.approx(-1.0, abs=1e-12)
        assert np.allclose(ev.hessian, ev.hessian.T, atol=0)
        assert np.abs(ev.hessian.sum(axis=1)).max() <= 1e-10
        assert abs(ev.eps_grad.sum()) <= 1e-10
        rng = np.random.default_rng(0)
        for _ in range(100):
            v = rng.normal(size=5)
            assert v @ ev.hessian @ v >= -1e-12

    def test_gauge_invariance(self):
        c = 0.37
        a = kantorovich_eval(self.psi, self.rho, 0.2, self.rule, self.target)
        b = kantorovich_eval(self.psi + c, self.rho, 0.2, self.rule, self.target)
        assert b.value == pytest.approx(a.value - c, abs=1e-12)
        assert np.allclose(a.gradient, b.gradient, atol=1e-12)
        assert np.allclose(a.hessian, b.hessian, atol=1e-12)
        assert np.allclose(a.eps_grad, b.eps_grad, atol=1e-12)
        x = np.linspace(-1, 1, 9)
        assert np.allclose(soft_assignment(self.psi, self.target, x, 0.2), soft_assignment(self.psi + c, self.target, x, 0.2), atol=1e-12)

    def test_gradient_at_solution(self):
        psi, rep, rule = solve_dual(self.rho, self.target, 0.1, return_rule=True)
        ev = kantorovich_eval(psi, self.rho, 0.1, rule, self.target, want=("gradient",))
        assert np.abs(ev.gradient + self.target.weights).max() <= 1e-10

    def test_symmetric_eps_grad_zero(self):
        rho = builtin_density("lebesgue")
        ev = kantorovich_eval([0.0, 0.0], rho, 0.3, solver_rule(rho), symmetric_pair())
        assert np.abs(ev.eps_grad).max() <= 1e-14

    def test_want_subset(self):
        ev = kantorovich_eval(self.psi, self.rho, 0.2, self.rule, self.target, want=("value",))
        assert ev.gradient is None and ev.hessian is None and ev.value is not None

    def test_rejects_bad_input(self):
        with pytest.raises(ValueError):
            kantorovich_eval(self.psi, self.rho, 0.0, self.rule, self.target)

    @pytest.mark.parametrize("name", NAMES)
    def test_finite_at_tiny_eps(self, name):
        rho = builtin_density(name)
        ev = kantorovich_eval(self.psi, rho, 1e-4, solver_rule(rho), self.target)
        for arr in (ev.value, ev.gradient, ev.hessian, ev.eps_grad):
            assert np.all(np.isfinite(arr))

    def test_eps_grad_decays_like_inverse_eps(self):
        scaled = []
        for eps in (1, 2, 4, 8, 16):
            psi, _, rule = solve_dual(self.rho, self.target, eps, return_rule=True)
            ev = kantorovich_eval(psi, self.rho, eps, rule, self.target, want=("eps_grad",))
            scaled.append(eps * np.abs(ev.eps_grad).max())
        assert max(scaled) <= 3 * scaled[0]


def test_solve_zero_sum_reduced_system():
    rng = np.random.default_rng(1)
    A = rng.normal(size=(4, 4))
    P = np.eye(4) - 0.25
    H = P @ (A @ A.T + np.eye(4)) @ P
    rhs = rng.normal(size=4)
    rhs -= rhs.mean()
    v, reg = solve_zero_sum(H, rhs)
    assert not reg
    assert abs(v.sum()) <= 1e-12
    assert np.allclose(H @ v, rhs, atol=1e-10)


def test_solve_zero_sum_regularizes_singular():
    H = np.zeros((3, 3))
    H[0, 0] = H[1, 1] = 1.0
    H[0, 1] = H[1, 0] = -1.0
    v, reg = solve_zero_sum(H, np.array([1.0, -1.0, 0.0]))
    assert reg and np.all(np.isfinite(v))
