import math
import random
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))
from oracles import enumerate_dtw_paths, exhaustive_dtw_cost, exhaustive_scanmatch

from scansec.errors import InvalidInput
from scansec.model import FrequencyVector, Scanpath, SymbolSequence, extract_saccades
from scansec.reference import (
    MultiMatchScores, SubstitutionMatrix, dtw_path, multimatch, scanmatch,
    scanmatch_raw, subsmatch,
)


def seq(symbols, grid=9, bins=1):
    return SymbolSequence(np.array(symbols), grid_size=grid, bins=bins)


def random_saccades(rng, n):
    pts = [(rng.random(), rng.random()) for _ in range(n + 1)]
    durs = [rng.uniform(50, 800) for _ in range(n + 1)]
    xs, ys = zip(*pts)
    sp = Scanpath(x=np.array(xs), y=np.array(ys), dur_ms=np.array(durs))
    return extract_saccades(sp)


class TestSubstitutionMatrix:
    def test_grid_matrix_shape_and_extremes(self):
        m = SubstitutionMatrix.from_grid(9)
        assert m.size == 81
        assert m.scores[0, 0] == 100
        assert m.scores[0, 80] == 0       # opposite corners
        assert m.scores[0, 1] == 91
        assert m.max_score == 100

    def test_grid_matrix_with_bins_ignores_duration(self):
        m = SubstitutionMatrix.from_grid(3, bins=2)
        assert m.size == 18
        assert m.scores[0, 1] == 100      # same cell, different bin

    def test_asymmetric_rejected(self):
        bad = np.array([[3, 1], [2, 3]])
        with pytest.raises(InvalidInput):
            SubstitutionMatrix(bad)

    def test_low_diagonal_rejected(self):
        bad = np.array([[1, 5], [5, 1]])
        with pytest.raises(InvalidInput):
            SubstitutionMatrix(bad)


class TestScanMatch:
    def test_identical_sequences_score_one(self):
        m = SubstitutionMatrix.from_grid(9)
        for symbols in ([0], [5, 17, 80], list(range(20))):
            assert scanmatch(seq(symbols), seq(symbols), m) == 1.0

    def test_frozen_pair(self):
        m = SubstitutionMatrix.from_grid(9)
        assert scanmatch_raw(seq([0, 1]), seq([0, 2]), m) == 191
        assert scanmatch(seq([0, 1]), seq([0, 2]), m) == pytest.approx(0.955)

    def test_frozen_longer_pair(self):
        m = SubstitutionMatrix.from_grid(9)
        assert scanmatch_raw(seq([0, 10, 20, 30]), seq([0, 1, 20, 80]), m) == 329

    def test_frozen_with_gaps(self):
        m = SubstitutionMatrix.from_grid(9, gap_del=2, gap_ins=3)
        assert scanmatch_raw(seq([5, 6, 7]), seq([7, 6, 5, 4, 3, 2]), m) == 255

    def test_matches_exhaustive_alignment_oracle(self):
        rng = random.Random(7)
        m = SubstitutionMatrix.from_grid(9)
        mg = SubstitutionMatrix.from_grid(9, gap_del=5, gap_ins=11)
        table = m.scores.tolist()
        for _ in range(40):
            a = [rng.randrange(81) for _ in range(rng.randint(1, 6))]
            b = [rng.randrange(81) for _ in range(rng.randint(1, 6))]
            assert scanmatch_raw(seq(a), seq(b), m) == exhaustive_scanmatch(tuple(a), tuple(b), table)
            assert scanmatch_raw(seq(a), seq(b), mg) == exhaustive_scanmatch(tuple(a), tuple(b), table, 5, 11)

    def test_symbol_out_of_range(self):
        m = SubstitutionMatrix.from_grid(3)
        with pytest.raises(InvalidInput):
            scanmatch(seq([10], grid=9), seq([0], grid=3), m)

    def test_symmetric_when_gaps_equal(self):
        rng = random.Random(3)
        m = SubstitutionMatrix.from_grid(9)
        for _ in range(10):
            a = [rng.randrange(81) for _ in range(rng.randint(2, 10))]
            b = [rng.randrange(81) for _ in range(rng.randint(2, 10))]
            assert scanmatch(seq(a), seq(b), m) == pytest.approx(scanmatch(seq(b), seq(a), m))


class TestDTW:
    def test_cost_matches_path_enumeration(self):
        rng = random.Random(11)
        for _ in range(30):
            m, n = rng.randint(1, 5), rng.randint(1, 5)
            cost = [[rng.uniform(0, 4) for _ in range(n)] for _ in range(m)]
            path = dtw_path(np.array(cost))
            got = sum(cost[i - 1][j - 1] for i, j in path)
            assert got == pytest.approx(exhaustive_dtw_cost(cost))

    def test_backtrack_prefers_diagonal_on_ties(self):
        path = dtw_path(np.zeros((3, 3)))
        assert path == [(3, 3), (2, 2), (1, 1)]

    def test_path_endpoints_and_monotonicity(self):
        rng = random.Random(5)
        cost = np.array([[rng.random() for _ in range(4)] for _ in range(6)])
        path = dtw_path(cost)
        assert path[0] == (6, 4) and path[-1] == (1, 1)
        for (i2, j2), (i1, j1) in zip(path, path[1:]):
            assert (i2 - i1, j2 - j1) in {(1, 0), (0, 1), (1, 1)}

    def test_enumeration_count_sanity(self):
        # Delannoy number D(2,2) = 13 paths on a 3x3 grid
        assert len(enumerate_dtw_paths(3, 3)) == 13


class TestMultiMatch:
    def test_identical_paths_score_one(self):
        ss = random_saccades(random.Random(1), 8)
        scores = multimatch(ss, ss)
        for v in scores.as_tuple():
            assert v == pytest.approx(1.0)

    def test_single_pair_closed_form(self):
        a = extract_saccades(Scanpath(x=np.array([0, 1.0]), y=np.array([0, 0.0]), dur_ms=np.array([100.0, 100])))
        b = extract_saccades(Scanpath(x=np.array([0, 0.0]), y=np.array([0, 1.0]), dur_ms=np.array([100.0, 100])))
        s = multimatch(a, b)
        assert s.direction == pytest.approx(1 - (math.pi / 2) / math.pi)   # = 0.5
        assert s.shape == pytest.approx(1.0)       # both turns are 0
        assert s.length == pytest.approx(1.0)      # equal amplitudes
        assert s.duration == pytest.approx(1.0)
        # start points coincide, end points are (1,0) vs (0,1)
        assert s.position == pytest.approx(1 - (math.sqrt(2) / 2) / math.sqrt(2))

    def test_symmetry(self):
        rng = random.Random(9)
        for _ in range(8):
            a = random_saccades(rng, rng.randint(1, 12))
            b = random_saccades(rng, rng.randint(1, 12))
            sab, sba = multimatch(a, b), multimatch(b, a)
            for x, y in zip(sab.as_tuple(), sba.as_tuple()):
                assert x == pytest.approx(y, abs=1e-9)

    def test_components_lie_in_unit_interval(self):
        rng = random.Random(13)
        for _ in range(10):
            a = random_saccades(rng, rng.randint(1, 15))
            b = random_saccades(rng, rng.randint(1, 15))
            for v in multimatch(a, b).as_tuple():
                assert -1e-12 <= v <= 1 + 1e-12

    def test_overall_is_component_mean(self):
        with pytest.raises(InvalidInput):
            MultiMatchScores(1, 1, 1, 1, 1, overall=0.5)


class TestSubsMatch:
    def fv(self, entries, A=2, n=2):
        return FrequencyVector(np.array(entries, dtype=float), alphabet_size=A, ngram_len=n)

    def test_identical_is_one(self):
        p = self.fv([0.5, 0.25, 0.25, 0])
        assert subsmatch(p, p) == 1.0

    def test_disjoint_supports_is_zero(self):
        p = self.fv([0.5, 0.5, 0, 0])
        q = self.fv([0, 0, 0.5, 0.5])
        assert subsmatch(p, q) == pytest.approx(0.0)

    def test_triangle_inequality_of_distance(self):
        rng = random.Random(21)
        for _ in range(30):
            vs = []
            for _ in range(3):
                raw = np.array([rng.random() for _ in range(4)])
                vs.append(self.fv(raw / raw.sum()))
            d = lambda p, q: 1 - subsmatch(p, q)
            assert d(vs[0], vs[2]) <= d(vs[0], vs[1]) + d(vs[1], vs[2]) + 1e-12

    def test_dimension_mismatch(self):
        p = self.fv([0.5, 0.5, 0, 0])
        q = FrequencyVector(np.array([1.0] + [0] * 8), alphabet_size=3, ngram_len=2)
        with pytest.raises(InvalidInput):
            subsmatch(p, q)

    def test_range(self):
        rng = random.Random(2)
        for _ in range(20):
            a = np.array([rng.random() for _ in range(8)])
            b = np.array([rng.random() for _ in range(8)])
            s = subsmatch(self.fv(a / a.sum(), A=8, n=1), self.fv(b / b.sum(), A=8, n=1))
            assert 0.0 <= s <= 1.0
