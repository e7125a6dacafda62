"""Unit tests for the expression engine"""

import unittest

import numpy as np

from src.exceptions import (
    BoundExceedsDenominator,
    ModelValidationError,
    NonPositiveDenominator,
    NotDivisible,
    UnassignedSymbol,
)
from src.expr import (
    AffineForm,
    Bound,
    Polynomial,
    RateExpr,
    SymbolKind,
    SymbolTable,
    divide_by_state,
    evaluate,
    reciprocal_bound,
    shift_expand,
)


class TestPolynomial(unittest.TestCase):
    """Test cases for Polynomial"""

    def setUp(self):
        """Set up a table with two states and a parameter"""
        self.table = SymbolTable()
        self.x = self.table.intern("x", SymbolKind.STATE)
        self.y = self.table.intern("y", SymbolKind.STATE)
        self.k = self.table.intern("k", SymbolKind.PARAMETER)

    def test_like_terms_merge(self):
        """Test that equal monomials merge and cancelling terms vanish"""
        p = Polynomial.from_terms([([(self.x, 1)], 2.0), ([(self.x, 1)], 3.0), ([(self.y, 1)], 1.0)])
        q = Polynomial.from_terms([([(self.y, 1)], -1.0)])

        self.assertEqual(p.terms[((self.x, 1),)], 5.0)
        self.assertEqual(p + q, Polynomial.from_terms([([(self.x, 1)], 5.0)]))

    def test_canonical_order(self):
        """Test that exponent order does not matter"""
        a = Polynomial.from_terms([([(self.y, 1), (self.x, 2)], 1.0)])
        b = Polynomial.from_terms([([(self.x, 1), (self.y, 1), (self.x, 1)], 1.0)])
        self.assertEqual(a, b)

    def test_multiplication_and_power(self):
        """Test (x + y)^2 = x^2 + 2xy + y^2"""
        s = Polynomial.variable(self.x) + Polynomial.variable(self.y)
        square = s ** 2

        self.assertEqual(square.terms[((self.x, 2),)], 1.0)
        self.assertEqual(square.terms[((self.x, 1), (self.y, 1))], 2.0)
        self.assertEqual(square.terms[((self.y, 2),)], 1.0)
        self.assertEqual(square.degree(), 2)

    def test_evaluate_vectorized(self):
        """Test evaluation on numpy arrays"""
        p = Polynomial.from_terms([([(self.k, 1), (self.x, 1)], 2.0), ([], 1.0)])
        values = p.evaluate({self.k: 3.0, self.x: np.array([0.0, 1.0, 2.0])})
        np.testing.assert_allclose(values, [1.0, 7.0, 13.0])

    def test_evaluate_unassigned(self):
        """Test that a missing symbol raises UnassignedSymbol naming it"""
        p = Polynomial.variable(self.y)
        with self.assertRaises(UnassignedSymbol) as context:
            p.evaluate({self.x: 1.0}, self.table)
        self.assertIn("y", str(context.exception))

    def test_divide_by_state(self):
        """Test exact division by a state symbol"""
        p = Polynomial.from_terms([([(self.k, 1), (self.x, 2)], 1.0)])
        q = divide_by_state(p, self.x)
        self.assertEqual(q, Polynomial.from_terms([([(self.k, 1), (self.x, 1)], 1.0)]))

    def test_divide_then_multiply(self):
        """Test divide_by_state(p, x) * x == p when every monomial holds x"""
        p = Polynomial.from_terms([
            ([(self.k, 1), (self.x, 2)], 1.5),
            ([(self.x, 1), (self.y, 3)], -0.25),
            ([(self.x, 1)], 4.0),
        ])
        q = divide_by_state(p, self.x)

        self.assertEqual(q * Polynomial.variable(self.x), p)
        self.assertEqual(q.multiply_by(self.x), p)
        self.assertEqual(divide_by_state(p.multiply_by(self.y), self.y), p)

    def test_cancellation_noise_dropped(self):
        """Test that 0.1x + 0.2x - 0.3x leaves no residue"""
        p = Polynomial.from_terms([([(self.x, 1)], 0.1), ([(self.x, 1)], 0.2), ([(self.x, 1)], -0.3)])
        self.assertTrue(p.is_zero())

        q = Polynomial.variable(self.x) * 3.0 - Polynomial.variable(self.x) * (1.0 / 3.0) * 9.0
        self.assertTrue(q.is_zero())

    def test_small_coefficients_kept(self):
        """Test that tiny coefficients without cancellation survive"""
        p = Polynomial.from_terms([([(self.x, 1)], 1e6), ([(self.y, 1)], 1e-7), ([(self.k, 1)], 1e-20)])
        self.assertEqual(len(p.terms), 3)
        self.assertEqual(p.terms[((self.k, 1),)], 1e-20)

    def test_divide_not_divisible(self):
        """Test that a monomial without the state factor raises NotDivisible"""
        p = Polynomial.variable(self.x) + Polynomial.variable(self.k)
        with self.assertRaises(NotDivisible):
            divide_by_state(p, self.x)

    def test_group_by(self):
        """Test splitting into monomials over selected symbols"""
        p = Polynomial.from_terms([
            ([(self.k, 1), (self.x, 1)], 2.0),
            ([(self.k, 1), (self.y, 1)], 3.0),
            ([(self.x, 1)], 1.0),
        ])
        groups = p.group_by([self.k])

        self.assertEqual(set(groups), {((self.k, 1),), ()})
        self.assertEqual(
            groups[((self.k, 1),)],
            Polynomial.from_terms([([(self.x, 1)], 2.0), ([(self.y, 1)], 3.0)]),
        )

    def test_render(self):
        """Test human-readable rendering"""
        p = Polynomial.from_terms([([(self.x, 2)], 1.0), ([(self.k, 1)], 2.5)])
        self.assertEqual(p.render(self.table), "x^2 + 2.5*k")
        self.assertEqual(Polynomial().render(self.table), "0")


class TestShiftExpand(unittest.TestCase):
    """Test cases for shift_expand"""

    def test_binomial_expansion(self):
        """Test x^2 -> x0^2 + 2 x0 u_x + u_x^2"""
        table = SymbolTable()
        x = table.intern("x", SymbolKind.STATE)
        expanded = shift_expand(Polynomial.variable(x, 2), [x], table)
        x0 = table.lookup("x^0")
        ux = table.lookup("u_x")

        self.assertEqual(table.kind(x0), SymbolKind.NOMINAL)
        self.assertEqual(table.kind(ux), SymbolKind.DEVIATION)
        self.assertEqual(table.origin(ux), x)
        self.assertEqual(expanded.terms, {((x0, 2),): 1.0, ((x0, 1), (ux, 1)): 2.0, ((ux, 2),): 1.0})

    def test_unshifted_symbols_kept(self):
        """Test that symbols outside the shifted set pass through"""
        table = SymbolTable()
        x = table.intern("x", SymbolKind.STATE)
        k = table.intern("k", SymbolKind.PARAMETER)
        p = Polynomial.from_terms([([(k, 1), (x, 1)], 2.0)])
        expanded = shift_expand(p, [k], table)
        values = {table.lookup("k^0"): 1.5, table.lookup("u_k"): 0.25, x: 2.0}

        self.assertAlmostEqual(expanded.evaluate(values), 2.0 * 1.75 * 2.0)


    def test_random_polynomials_match_substitution(self):
        """Test p(x0 + u) against the expanded form on seeded random polynomials"""
        rng = np.random.default_rng(20240611)
        for trial in range(25):
            table = SymbolTable()
            ids = [table.intern(name, SymbolKind.STATE) for name in ("x", "y", "z")]
            ids.append(table.intern("k", SymbolKind.PARAMETER))
            terms = []
            for _ in range(rng.integers(1, 7)):
                exps = [(sid, int(e)) for sid, e in zip(ids, rng.integers(0, 4, len(ids)))]
                terms.append((exps, float(rng.uniform(-2.0, 2.0))))
            p = Polynomial.from_terms(terms)
            shifted = [sid for sid in ids if rng.random() < 0.6]
            expanded = shift_expand(p, shifted, table)

            point = {sid: float(rng.uniform(0.5, 1.0)) for sid in ids}
            devs = {sid: float(rng.uniform(-0.2, 0.2)) for sid in shifted}
            direct = p.evaluate({sid: point[sid] + devs.get(sid, 0.0) for sid in ids})
            values = {sid: point[sid] for sid in ids if sid not in shifted}
            for sid in shifted:
                values[table.nominal(sid)] = point[sid]
                values[table.deviation(sid)] = devs[sid]

            self.assertLessEqual(
                abs(expanded.evaluate(values, table) - direct), 1e-12 * max(1.0, abs(direct)), f"trial {trial}"
            )


class TestSymbolTable(unittest.TestCase):
    """Test cases for SymbolTable"""

    def test_intern_is_idempotent(self):
        """Test that re-interning a name returns its id"""
        table = SymbolTable()
        x = table.intern("x", SymbolKind.STATE)
        self.assertEqual(table.intern("x", SymbolKind.STATE), x)
        self.assertEqual(table.deviation(x), table.deviation(x))
        self.assertEqual(len(table), 2)

    def test_deviation_name_taken_by_parameter(self):
        """Test that a parameter called u_x cannot double as the deviation of x"""
        table = SymbolTable()
        x = table.intern("x", SymbolKind.STATE)
        table.intern("u_x", SymbolKind.PARAMETER)
        with self.assertRaises(ModelValidationError) as context:
            table.deviation(x)
        self.assertIn("u_x", str(context.exception))

    def test_nominal_name_taken_by_state(self):
        """Test that a state called x^0 cannot double as the nominal of x"""
        table = SymbolTable()
        x = table.intern("x", SymbolKind.STATE)
        table.intern("x^0", SymbolKind.STATE)
        with self.assertRaises(ModelValidationError):
            table.nominal(x)

    def test_ids_of_kind(self):
        """Test ids listed per kind in interning order"""
        table = SymbolTable()
        x = table.intern("x", SymbolKind.STATE)
        k = table.intern("k", SymbolKind.PARAMETER)
        y = table.intern("y", SymbolKind.STATE)
        table.deviation(x)
        self.assertEqual(table.ids_of_kind(SymbolKind.STATE), [x, y])
        self.assertEqual(table.ids_of_kind(SymbolKind.PARAMETER), [k])


class TestRateExpr(unittest.TestCase):
    """Test cases for RateExpr"""

    def setUp(self):
        """Set up a rate x*y/(1 + 2x)"""
        self.table = SymbolTable()
        self.x = self.table.intern("x", SymbolKind.STATE)
        self.y = self.table.intern("y", SymbolKind.STATE)
        numerator = Polynomial.from_terms([([(self.x, 1), (self.y, 1)], 1.0)])
        self.rate = RateExpr(numerator, AffineForm.from_mapping(1.0, {self.x: 2.0}))

    def test_evaluate_with_denominator(self):
        """Test numerator divided by denominator"""
        self.assertAlmostEqual(evaluate(self.rate, {self.x: 1.0, self.y: 3.0}), 1.0)

    def test_evaluate_without_denominator(self):
        """Test that a missing denominator means 1"""
        rate = RateExpr(Polynomial.variable(self.y))
        self.assertEqual(evaluate(rate, {self.y: 4.0}), 4.0)

    def test_nonpositive_denominator(self):
        """Test that a denominator <= 0 raises"""
        with self.assertRaises(NonPositiveDenominator):
            evaluate(self.rate, {self.x: -0.5, self.y: 1.0})

    def test_symbols(self):
        """Test that symbols include the denominator"""
        self.assertEqual(self.rate.symbols(), frozenset({self.x, self.y}))


class TestBound(unittest.TestCase):
    """Test cases for Bound and reciprocal_bound"""

    def test_reciprocal_bound_values(self):
        """Test zeta/(sigma_min - zeta) and the cap"""
        self.assertAlmostEqual(reciprocal_bound(2.0, 0.5), 0.5 / 1.5)
        self.assertEqual(reciprocal_bound(2.0, 0.0), 0.0)
        with self.assertRaises(BoundExceedsDenominator):
            reciprocal_bound(2.0, 2.0)
        with self.assertRaises(ValueError):
            reciprocal_bound(2.0, -0.1)

    def test_product_of_bounds(self):
        """Test that products multiply constants and add powers"""
        b = Bound(0.1) * Bound(1.0, 1) * Bound(1.0, 1)
        self.assertEqual(b.eps_power, 2)
        self.assertAlmostEqual(b.value(0.2), 0.1 * 0.04)
        self.assertTrue(b.depends_on_eps())
        self.assertFalse(Bound(0.3).depends_on_eps())

    def test_reciprocal_factor(self):
        """Test bounds carrying a reciprocal factor"""
        b = Bound(1.0, 0, ((1.0, 2.0, 1),))
        self.assertAlmostEqual(b.value(0.5), 0.5 / 1.5)
        self.assertAlmostEqual((b ** 2).value(0.5), (0.5 / 1.5) ** 2)
        with self.assertRaises(BoundExceedsDenominator):
            b.value(2.5)


if __name__ == '__main__':
    unittest.main()
