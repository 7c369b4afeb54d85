import unittest

import numpy as np

from setup_tests import setup_tests

setup_tests()

from instances import PROBLEM_DIR, data_path, load_bundled, load_external
from lowrankipm.qps_io import QpsFormatError, RawQp, parse_qps, write_qps

BUNDLED = ["hs21", "hs35", "hs53", "hs76", "hs118", "hs268", "ranged"]

SMALL_FILE = """NAME          SMALL
ROWS
 N  OBJ
 G  C1
COLUMNS
    X1        OBJ       1.0           C1        1.0
    X2        C1        1.0
RHS
    RHS       C1        1.0
ENDATA
"""


def read_bundled(name: str):
    with open(data_path(name), "rb") as f:
        return parse_qps(f.read())


class ParseTest(unittest.TestCase):
    def test_hs21(self):
        raw = read_bundled("hs21")
        self.assertEqual("HS21", raw.name)
        self.assertEqual(["C1"], raw.row_names)
        self.assertEqual(["G"], raw.row_senses)
        self.assertEqual(-100.0, raw.objective_constant)
        np.testing.assert_array_equal([2.0, -50.0], raw.lower)
        np.testing.assert_array_equal([50.0, 50.0], raw.upper)
        np.testing.assert_array_equal([[0.02, 0.0], [0.0, 2.0]], raw.hessian().toarray())

    def test_fixed_format_names_with_spaces(self):
        raw = read_bundled("hs35")
        self.assertEqual(["ROW 1"], raw.row_names)
        self.assertEqual(["X1", "X2", "X3"], raw.col_names)
        np.testing.assert_array_equal([-8.0, -6.0, -4.0], raw.c)
        np.testing.assert_array_equal([3.0], raw.rhs)
        self.assertEqual(9.0, raw.objective_constant)
        self.assertEqual("QUADOBJ", raw.quadratic_section)
        np.testing.assert_array_equal(
            [[4.0, 2.0, 2.0], [2.0, 4.0, 0.0], [2.0, 0.0, 2.0]], raw.hessian().toarray()
        )

    def test_qmatrix_is_folded_to_one_triangle(self):
        raw = read_bundled("hs53")
        self.assertEqual("QMATRIX", raw.quadratic_section)
        self.assertEqual(-2.0, raw.quadratic[(1, 0)])
        self.assertNotIn((0, 1), raw.quadratic)
        H = raw.hessian().toarray()
        np.testing.assert_array_equal(H, H.T)

    def test_ranged_file(self):
        raw = read_bundled("ranged")
        self.assertEqual("RANGED", raw.name)
        self.assertEqual("COST", raw.objective_name)
        self.assertEqual(["EQPOS", "EQNEG", "GRNG", "LRNG", "PLAIN"], raw.row_names)
        self.assertEqual(["E", "E", "G", "L", "E"], raw.row_senses)
        np.testing.assert_array_equal([1.0, -2.0, 0.0, 0.5, 3.0, 1.0], raw.c)
        np.testing.assert_array_equal([1.0, 2.0, 1.0, 4.0, 3.0], raw.rhs)
        self.assertEqual(1.5, raw.objective_constant)
        self.assertEqual({0: 2.0, 1: -3.0, 2: -2.5, 3: 1.5}, raw.ranges)
        self.assertEqual(12, len(raw.coefficients))
        self.assertEqual(2.0, raw.coefficients[(4, 4)])
        np.testing.assert_array_equal([-np.inf, -np.inf, -5.0, 0.0, 0.5, 1.0], raw.lower)
        np.testing.assert_array_equal([4.0, np.inf, -1.0, 1.0, 0.5, 3.0], raw.upper)
        self.assertEqual({(0, 0): 2.0, (1, 0): 0.5, (1, 1): 1.0, (2, 2): 0.1}, raw.quadratic)

    def test_negative_upper_bound_warns(self):
        with self.assertLogs("lowrankipm.qps_io", level="WARNING"):
            read_bundled("ranged")

    def test_bytes_and_str_agree(self):
        self.assertEqual(parse_qps(SMALL_FILE), parse_qps(SMALL_FILE.encode("ascii")))

    def test_latin1_fallback(self):
        raw = parse_qps(SMALL_FILE.replace("SMALL", "SMÅLL").encode("latin-1"))
        self.assertEqual("SMÅLL", raw.name)

    def test_name_override_keeps_argument(self):
        self.assertEqual("given", parse_qps(SMALL_FILE, name="given").name)


class DimensionTest(unittest.TestCase):
    def test_hs53(self):
        problem = load_bundled("hs53")
        self.assertEqual((5, 3, 10), (problem.n, problem.m_eq, problem.m_in))

    def test_hs76(self):
        problem = load_bundled("hs76")
        self.assertEqual((4, 0, 7), (problem.n, problem.m_eq, problem.m_in))

    def test_hs21_and_hs35(self):
        self.assertEqual((2, 0, 5), _dims(load_bundled("hs21")))
        self.assertEqual((3, 0, 4), _dims(load_bundled("hs35")))

    def test_hs268_and_hs118(self):
        self.assertEqual((5, 0, 5), _dims(load_bundled("hs268")))
        # 12 ranged rows, 5 one-sided rows and 30 finite variable bounds
        self.assertEqual((15, 0, 59), _dims(load_bundled("hs118")))

    @unittest.skipUnless(PROBLEM_DIR, "LOWRANKIPM_PROBLEM_DIR not set")
    def test_qafiro(self):
        self.assertEqual((32, 8, 51), _dims(load_external("qafiro")))


def _dims(problem):
    return problem.n, problem.m_eq, problem.m_in


class RoundTripTest(unittest.TestCase):
    def test_golden_files(self):
        for name in BUNDLED:
            with self.subTest(name=name):
                raw = read_bundled(name)
                self.assertEqual(raw, parse_qps(write_qps(raw)))

    def test_write_is_stable(self):
        raw = read_bundled("ranged")
        text = write_qps(raw)
        self.assertEqual(text, write_qps(parse_qps(text)))


class MutationTest(unittest.TestCase):
    """
    Damaged input either parses or fails with a located QpsFormatError.
    """

    def assertParsesOrFails(self, data: bytes):
        try:
            raw = parse_qps(data)
        except QpsFormatError:
            return
        self.assertIsInstance(raw, RawQp)

    def test_mutated_files(self):
        rng = np.random.default_rng(23)
        sources = []
        for name in BUNDLED:
            with open(data_path(name), "rb") as f:
                sources.append(f.read())
        alphabet = b" \n-.0123456789DEXCR'"
        for trial in range(3000):
            data = bytearray(sources[trial % len(sources)])
            for _ in range(int(rng.integers(1, 4))):
                if not data:
                    break
                position = int(rng.integers(0, len(data)))
                kind = int(rng.integers(0, 4))
                if kind == 0:
                    data[position] = int(rng.integers(0, 256))
                elif kind == 1:
                    del data[position]
                elif kind == 2:
                    data.insert(position, alphabet[int(rng.integers(0, len(alphabet)))])
                else:
                    del data[position:]
            with self.subTest(trial=trial):
                self.assertParsesOrFails(bytes(data))

    def test_random_bytes(self):
        rng = np.random.default_rng(24)
        for trial in range(300):
            with self.subTest(trial=trial):
                self.assertParsesOrFails(rng.bytes(int(rng.integers(0, 400))))


class ErrorTest(unittest.TestCase):
    def assertFormatError(self, text: str, line_number: int):
        with self.assertRaises(QpsFormatError) as context:
            parse_qps(text)
        self.assertEqual(line_number, context.exception.line_number)

    def test_unknown_section(self):
        self.assertFormatError(SMALL_FILE.replace("RHS\n", "RHSIDE\n", 1), 8)

    def test_unresolved_row(self):
        self.assertFormatError(SMALL_FILE.replace("X2        C1", "X2        C9"), 7)

    def test_unresolved_column_in_bounds(self):
        text = SMALL_FILE.replace("ENDATA", "BOUNDS\n UP BND       X9        1.0\nENDATA")
        self.assertFormatError(text, 11)

    def test_duplicate_column(self):
        text = SMALL_FILE.replace("RHS\n", "    X1        C1        2.0\nRHS\n", 1)
        self.assertFormatError(text, 8)

    def test_malformed_number(self):
        self.assertFormatError(SMALL_FILE.replace("C1        1.0\nRHS", "C1        1.x\nRHS"), 7)

    def test_duplicate_row(self):
        self.assertFormatError(SMALL_FILE.replace(" G  C1", " G  C1\n L  C1"), 5)

    def test_missing_endata(self):
        with self.assertRaises(QpsFormatError):
            parse_qps(SMALL_FILE.replace("ENDATA\n", ""))

    def test_asymmetric_qmatrix(self):
        text = SMALL_FILE.replace(
            "ENDATA", "QMATRIX\n    X1        X2        1.0\n    X2        X1        2.0\nENDATA"
        )
        self.assertFormatError(text, 12)

    def test_two_quadratic_sections(self):
        text = SMALL_FILE.replace(
            "ENDATA", "QUADOBJ\n    X1        X1        1.0\nQMATRIX\n    X2        X2        1.0\nENDATA"
        )
        self.assertFormatError(text, 12)


if __name__ == "__main__":
    unittest.main()
