"""Cleartext ScanMatch, MultiMatch and SubsMatch.

These are the fidelity oracles: every garbled-circuit result is judged
against the numbers produced here.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput
from .model import FrequencyVector, SaccadeSequence, SymbolSequence, wrap_angle


@dataclass(frozen=True)
class SubstitutionMatrix:
    scores: np.ndarray
    gap_del: int = 0
    gap_ins: int = 0
    # provenance of grid-derived matrices; lets the circuit builder use a
    # row/column-difference decomposition instead of a full pair table
    grid: int | None = None
    bins: int = 1

    def __post_init__(self):
        s = np.asarray(self.scores, dtype=np.int64)
        if s.ndim != 2 or s.shape[0] != s.shape[1]:
            raise InvalidInput("substitution matrix must be square")
        if not np.array_equal(s, s.T):
            raise InvalidInput("substitution matrix must be symmetric")
        if np.any(np.diag(s) < s.max()):
            raise InvalidInput("diagonal must hold the maximum score")
        if self.gap_del < 0 or self.gap_ins < 0:
            raise InvalidInput("gap penalties must be >= 0")
        if self.grid is not None and s.shape[0] != self.grid**2 * self.bins:
            raise InvalidInput("matrix size does not match grid metadata")
        object.__setattr__(self, "scores", s)

    @property
    def max_score(self) -> int:
        return int(self.scores.max())

    @property
    def size(self) -> int:
        return self.scores.shape[0]

    @classmethod
    def from_grid(cls, grid: int, bins: int = 1, max_score: int = 100,
                  gap_del: int = 0, gap_ins: int = 0) -> "SubstitutionMatrix":
        """Inverse-distance scores over cell centers of a G x G grid.

        Symbols sharing a cell (differing only in duration bin) score the
        maximum; the farthest cell pair scores 0.
        """
        n = grid * grid * bins
        cell = np.arange(n) // bins
        row, col = cell // grid, cell % grid
        dr = row[:, None] - row[None, :]
        dc = col[:, None] - col[None, :]
        dist = np.hypot(dr, dc)
        max_dist = math.hypot(grid - 1, grid - 1)
        if max_dist == 0:
            return cls(np.full((n, n), max_score, dtype=np.int64), gap_del,
                       gap_ins, grid=grid, bins=bins)
        scores = np.floor(max_score * (1.0 - dist / max_dist) + 0.5).astype(np.int64)
        return cls(scores, gap_del, gap_ins, grid=grid, bins=bins)


@dataclass(frozen=True)
class MultiMatchScores:
    shape: float
    length: float
    direction: float
    position: float
    duration: float
    overall: float

    def __post_init__(self):
        mean = (self.shape + self.length + self.direction + self.position + self.duration) / 5
        if abs(self.overall - mean) > 1e-9:
            raise InvalidInput("overall must be the component mean")

    def as_tuple(self):
        return (self.shape, self.length, self.direction, self.position, self.duration, self.overall)


def scanmatch_raw(a: SymbolSequence, b: SymbolSequence, m: SubstitutionMatrix) -> int:
    """Needleman-Wunsch alignment score before normalization."""
    sa, sb = a.symbols, b.symbols
    if np.max(sa) >= m.size or np.max(sb) >= m.size:
        raise InvalidInput("symbol outside substitution matrix")
    gd, gi = m.gap_del, m.gap_ins
    prev = [-gi * j for j in range(len(sb) + 1)]
    for i in range(1, len(sa) + 1):
        cur = [-gd * i]
        for j in range(1, len(sb) + 1):
            sub = prev[j - 1] + int(m.scores[sa[i - 1], sb[j - 1]])
            cur.append(max(sub, prev[j] - gd, cur[j - 1] - gi))
        prev = cur
    return prev[-1]


def scanmatch(a: SymbolSequence, b: SymbolSequence, m: SubstitutionMatrix) -> float:
    raw = scanmatch_raw(a, b, m)
    sim = raw / (m.max_score * max(len(a), len(b)))
    return min(1.0, max(0.0, sim))


def dtw_path(ca: np.ndarray) -> list[tuple[int, int]]:
    """Minimum-cost monotone path through a cost matrix, via DTW.

    Cumulative first row/column; backtrack prefers diagonal, then up,
    then left on ties.  Returns 1-based (i, j) pairs from (m, n) down to
    (1, 1).
    """
    m, n = ca.shape
    D = np.empty((m, n))
    D[0, 0] = ca[0, 0]
    for i in range(1, m):
        D[i, 0] = D[i - 1, 0] + ca[i, 0]
    for j in range(1, n):
        D[0, j] = D[0, j - 1] + ca[0, j]
    for i in range(1, m):
        for j in range(1, n):
            D[i, j] = min(D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]) + ca[i, j]
    path = []
    i, j = m - 1, n - 1
    while True:
        path.append((i + 1, j + 1))
        if i == 0 and j == 0:
            break
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = D[i - 1, j - 1], D[i - 1, j], D[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
    return path


# component deviation normalizers on normalized screen coordinates
SHAPE_NORM = math.pi
DIRECTION_NORM = math.pi
LENGTH_NORM = math.sqrt(2.0)
POSITION_NORM = math.sqrt(2.0)


def multimatch(a: SaccadeSequence, b: SaccadeSequence) -> MultiMatchScores:
    """Five-component similarity along the DTW-aligned saccade pairs."""
    if len(a) < 1 or len(b) < 1:
        raise InvalidInput("empty saccade sequence")
    cost = (a.dx[:, None] - b.dx[None, :]) ** 2 + (a.dy[:, None] - b.dy[None, :]) ** 2
    path = dtw_path(cost)
    dev = np.zeros(5)
    for i1, j1 in path:
        i, j = i1 - 1, j1 - 1
        dev[0] += abs(wrap_angle(a.turn[i] - b.turn[j]))
        dev[1] += abs(a.amp[i] - b.amp[j])
        dev[2] += abs(wrap_angle(a.theta[i] - b.theta[j]))
        dev[3] += (math.hypot(a.s0x[i] - b.s0x[j], a.s0y[i] - b.s0y[j])
                   + math.hypot(a.s1x[i] - b.s1x[j], a.s1y[i] - b.s1y[j])) / 2
        lmax = max(a.dur_ms[i], b.dur_ms[j])
        dev[4] += abs(a.dur_ms[i] - b.dur_ms[j]) / lmax if lmax > 0 else 0.0
    dev /= len(path)
    comp = [
        1.0 - dev[0] / SHAPE_NORM,
        1.0 - dev[1] / LENGTH_NORM,
        1.0 - dev[2] / DIRECTION_NORM,
        1.0 - dev[3] / POSITION_NORM,
        1.0 - dev[4],
    ]
    return MultiMatchScores(*comp, overall=sum(comp) / 5)


def subsmatch(p: FrequencyVector, q: FrequencyVector) -> float:
    """1 minus the total-variation distance of the two n-gram distributions."""
    if p.alphabet_size != q.alphabet_size or p.ngram_len != q.ngram_len:
        raise InvalidInput("frequency vectors use different (A, n)")
    return 1.0 - 0.5 * float(np.abs(p.entries - q.entries).sum())
