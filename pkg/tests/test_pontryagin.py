"""Unit tests for the extremal solver"""

import math
import unittest

import numpy as np
from scipy.linalg import expm

from src.config import IntegratorConfig
from src.envelope import build_envelope
from src.model_io import parse_model
from src.models import sirs_model
from src.ode import integrate, nominal_trajectory
from src.pontryagin import (
    Direction,
    TargetSpec,
    bang_bang_rule,
    costate_rhs,
    required_solves,
    solve_extremal,
    solve_extremal_batch,
    solver_grid,
    switching_tolerance,
    tolerance_from_constants,
)

TOY_INITIAL = {"A": 1.0, "B": 0.0, "C": 0.0}


def chain(leak: float = 0.0, bound: float = 0.5):
    """A -> B at rate kappa (+-bound), optionally B -> C at rate ``leak``"""
    states = ["A", "B"] + (["C"] if leak else [])
    params = {"kappa": {"nominal": 1.0, "bound": bound}}
    reactions = [{"transitions": [["A", "B"]], "rate": {"poly": [{"coeff": 1.0, "vars": {"kappa": 1, "A": 1}}]}}]
    init = {"A": 0.5, "B": 0.5}
    if leak:
        params["mu"] = {"nominal": leak, "bound": 0.0}
        reactions.append({"transitions": [["B", "C"]], "rate": {"poly": [{"coeff": 1.0, "vars": {"mu": 1, "B": 1}}]}})
        init = {"A": 0.4, "B": 0.3, "C": 0.3}
    an = parse_model({"states": states, "params": params, "reactions": reactions, "init": init, "horizon": 1.0})
    V0, _ = nominal_trajectory(an)
    return build_envelope(an, V0)


def single_switch_oracle(leak: float, bound: float, direction: Direction, points: int = 2000) -> float:
    """Best value of pi_B(1) over controls with at most one switch"""
    def generator(rate):
        return np.array([[-rate, rate, 0.0], [0.0, -leak, leak], [0.0, 0.0, 0.0]])

    pi0 = np.array([1.0, 0.0, 0.0])
    best = None
    for first, second in ((bound, -bound), (-bound, bound)):
        q1, q2 = generator(1.0 + first), generator(1.0 + second)
        for s in np.linspace(0.0, 1.0, points):
            value = (pi0 @ expm(q1 * s) @ expm(q2 * (1.0 - s)))[1]
            if best is None or (value > best if direction is Direction.MAX else value < best):
                best = value
    return float(best)


class TestBangBangRule(unittest.TestCase):
    """Test cases for bang_bang_rule"""

    def test_sign_rule(self):
        """Test +bound for psi >= 0 and -bound otherwise"""
        self.assertEqual(bang_bang_rule(0.3, 0.05), 0.05)
        self.assertEqual(bang_bang_rule(0.0, 0.05), 0.05)
        self.assertEqual(bang_bang_rule(-1e-12, 0.1), -0.1)


class TestTargetSpec(unittest.TestCase):
    """Test cases for TargetSpec"""

    def test_invalid_targets(self):
        """Test zero weights and non-positive times"""
        with self.assertRaises(ValueError):
            TargetSpec({"A": 0.0}, 1.0)
        with self.assertRaises(ValueError):
            TargetSpec({"A": 1.0}, 0.0)

    def test_vector(self):
        """Test weights as a vector over states"""
        target = TargetSpec({"B": 2.0}, 1.0)
        np.testing.assert_array_equal(target.vector(("A", "B")), [0.0, 2.0])
        with self.assertRaises(ValueError):
            target.vector(("A", "C"))


class TestCostate(unittest.TestCase):
    """Test cases for costate_rhs"""

    def test_constant_costate(self):
        """Test that a constant costate has zero derivative"""
        env = build_envelope(sirs_model(1, 0.05), nominal_trajectory(sirs_model(1, 0.05))[0])
        dp = costate_rhs(env, 1.0, {"S1": 0.7, "I1": 0.7, "R1": 0.7}, 0.1)
        for value in dp.values():
            self.assertEqual(value, 0.0)

    def test_immunity_loss_row(self):
        """Test p_R' = 3 (p_R - p_S) with gamma = 3, bound 0 and no state term"""
        an = sirs_model(1, 0.0)
        env = build_envelope(an, nominal_trajectory(an)[0])
        dp = costate_rhs(env, 0.5, {"S1": 0.2, "I1": -0.4, "R1": 1.0}, 0.1)
        self.assertAlmostEqual(dp["R1"], 3.0 * (1.0 - 0.2))

    def test_absorbing_target(self):
        """Test p_B' = 0 when B has no outgoing transitions"""
        env = chain()
        dp = costate_rhs(env, 0.5, {"A": 0.0, "B": 1.0}, 0.0)
        self.assertEqual(dp["B"], 0.0)
        self.assertAlmostEqual(dp["A"], -(1.0 + 0.5))


class TestSolveExtremal(unittest.TestCase):
    """Test cases for solve_extremal"""

    def test_two_state_max(self):
        """Test max pi_B(1) = 1 - exp(-1.5) with u = +0.5 throughout"""
        env = chain()
        solution = solve_extremal(env, TargetSpec.state("B", 1.0, Direction.MAX), 0.0, initial=TOY_INITIAL)
        self.assertAlmostEqual(solution.value, 1.0 - math.exp(-1.5), delta=1e-6)
        np.testing.assert_array_equal(solution.control["u_kappa"], 0.5)

    def test_two_state_min(self):
        """Test min pi_B(1) = 1 - exp(-0.5) with u = -0.5 throughout"""
        env = chain()
        solution = solve_extremal(env, TargetSpec.state("B", 1.0, Direction.MIN), 0.0, initial=TOY_INITIAL)
        self.assertAlmostEqual(solution.value, 1.0 - math.exp(-0.5), delta=1e-6)
        np.testing.assert_array_equal(solution.control["u_kappa"], -0.5)

    def test_costate_boundary(self):
        """Test p(t_hat) = +sigma for max and -sigma for min"""
        env = chain()
        for direction in Direction:
            solution = solve_extremal(env, TargetSpec({"B": 2.0}, 1.0, direction), 0.0, initial=TOY_INITIAL)
            np.testing.assert_array_equal(solution.costate.values[-1], [0.0, 2.0 * direction.sign])
            np.testing.assert_allclose(solution.costate.component("B"), 2.0 * direction.sign)

    def test_single_switch_oracle(self):
        """Test the three-state chain against exhaustive single-switch search"""
        env = chain(leak=2.0)
        for direction in Direction:
            solution = solve_extremal(env, TargetSpec.state("B", 1.0, direction), 0.0, initial=TOY_INITIAL)
            oracle = single_switch_oracle(2.0, 0.5, direction)
            self.assertAlmostEqual(solution.value, oracle, delta=1e-5)

    def test_no_uncertainty(self):
        """Test that zero bounds reproduce the nominal value with no control trace"""
        an = sirs_model(1, 0.0)
        V0, _ = nominal_trajectory(an)
        env = build_envelope(an, V0)
        solution = solve_extremal(env, TargetSpec.state("I1", 3.0, Direction.MAX), 0.0)
        self.assertAlmostEqual(solution.value, V0.at(3.0)[1] / an.mass, delta=1e-5)
        self.assertEqual(solution.control, {})

    def test_conservation(self):
        """Test that sigma = 1 on every state yields value 1"""
        env = build_envelope(sirs_model(1, 0.05), nominal_trajectory(sirs_model(1, 0.05))[0])
        target = TargetSpec({"S1": 1.0, "I1": 1.0, "R1": 1.0}, 3.0, Direction.MIN)
        solution = solve_extremal(env, target, 0.1)
        self.assertAlmostEqual(solution.value, 1.0, delta=1e-9)
        np.testing.assert_allclose(solution.state.values.sum(axis=1), 1.0, atol=1e-9)
        np.testing.assert_allclose(solution.costate.values, -1.0)


class TestSirsExtremal(unittest.TestCase):
    """Test cases on the single-class SIRS instance"""

    @classmethod
    def setUpClass(cls):
        cls.cfg = IntegratorConfig(step=0.01)
        cls.an = sirs_model(1, 0.05)
        cls.V0, _ = nominal_trajectory(cls.an, cls.cfg)
        cls.env = build_envelope(cls.an, cls.V0)

    def test_bang_bang_control(self):
        """Test that every control value is +-bound"""
        solution = solve_extremal(self.env, TargetSpec.state("I1", 3.0, Direction.MIN), 0.1, self.cfg)
        for name, trace in solution.control.items():
            bound = self.env.uncertainties[name].bound.value(0.1)
            self.assertTrue(np.all(np.isclose(np.abs(trace), bound)))
            self.assertEqual(len(trace), len(solution.times) - 1)
        self.assertIn("u_beta_1", solution.switching_margin)

    def test_min_nominal_max(self):
        """Test min <= nominal <= max at several targets"""
        for name in self.an.states:
            for t in (0.5, 1.5, 3.0):
                nominal = self.V0.at(t)[self.an.state_index[name]] / self.an.mass
                low = solve_extremal(self.env, TargetSpec.state(name, t, Direction.MIN), 0.1, self.cfg).value
                high = solve_extremal(self.env, TargetSpec.state(name, t, Direction.MAX), 0.1, self.cfg).value
                self.assertLessEqual(low, nominal + 1e-4)
                self.assertGreaterEqual(high, nominal - 1e-4)

    def test_batch_matches_single(self):
        """Test that batched values equal one-at-a-time solves"""
        targets = [
            TargetSpec.state(name, t, direction)
            for t in (1.0, 2.0, 3.0) for name in self.an.states for direction in Direction
        ]
        grid = solver_grid(self.env, [1.0, 2.0, 3.0], 0.1, self.cfg)
        batch = solve_extremal_batch(self.env, targets, 0.1, self.cfg, grid=grid)
        alone = [solve_extremal_batch(self.env, [t], 0.1, self.cfg, grid=grid)[0] for t in targets]
        np.testing.assert_allclose(batch, alone, rtol=0.0, atol=1e-14)

    def test_optimality_dominance(self):
        """Test random piecewise-constant controls against the extremal values"""
        eps = 0.1
        target_time = 3.0
        pieces = 10
        names = list(self.env.uncertainties)
        bounds = np.array([self.env.uncertainties[n].bound.value(eps) for n in names])
        index = self.an.state_index["I1"]
        low = solve_extremal(self.env, TargetSpec.state("I1", target_time, Direction.MIN), eps, self.cfg).value
        high = solve_extremal(self.env, TargetSpec.state("I1", target_time, Direction.MAX), eps, self.cfg).value
        xi = 1e-5
        pi0 = self.V0.values[0] / self.an.mass
        src = [self.an.state_index[b] for b, _ in self.env.pairs]
        dst = [self.an.state_index[c] for _, c in self.env.pairs]
        rng = np.random.default_rng(7)
        for _ in range(10):
            levels = rng.uniform(-1.0, 1.0, (pieces, len(names))) * bounds

            def rhs(t, pi, levels=levels):
                piece = min(max(math.ceil(t / target_time * pieces - 1e-9) - 1, 0), pieces - 1)
                u = dict(zip(names, levels[piece]))
                rates = self.env.evaluate_rates(t, u, eps)
                dpi = np.zeros_like(pi)
                for (pair, rate), b, c in zip(rates.items(), src, dst):
                    dpi[b] -= rate * pi[b]
                    dpi[c] += rate * pi[b]
                return dpi

            value = integrate(rhs, pi0, 0.0, target_time, IntegratorConfig(step=0.03)).values[-1, index]
            self.assertLessEqual(value, high + xi)
            self.assertGreaterEqual(value, low - xi)


class TestTolerances(unittest.TestCase):
    """Test cases for the switching tolerance and solve counts"""

    def test_tolerance_formula(self):
        """Test zeta = xi / (t_hat n c1 c2)"""
        self.assertAlmostEqual(tolerance_from_constants(1e-4, 3.0, 2, 1.0, 0.2), 1e-4 / 1.2)
        self.assertAlmostEqual(
            tolerance_from_constants(2e-4, 3.0, 2, 1.0, 0.2),
            2.0 * tolerance_from_constants(1e-4, 3.0, 2, 1.0, 0.2),
        )
        self.assertEqual(tolerance_from_constants(1e-4, 3.0, 0, 0.0, 0.0), math.inf)
        with self.assertRaises(ValueError):
            tolerance_from_constants(0.0, 3.0, 2, 1.0, 0.2)

    def test_envelope_tolerance(self):
        """Test the toy chain: n = 1, c1 = 1, c2 = 1"""
        self.assertAlmostEqual(switching_tolerance(chain(), 1e-4, 1.0, 0.0), 1e-4)

    def test_required_solves(self):
        """Test 4 |S| Lambda T / xi"""
        self.assertAlmostEqual(required_solves(6.0, 3.0, 0.1, 3), 4 * 3 * 6.0 * 3.0 / 0.1)


if __name__ == '__main__':
    unittest.main()
