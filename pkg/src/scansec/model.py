"""Scanpath types and party-local preprocessing.

Everything here runs on a party's own cleartext data before any protocol
round: grid symbolization, saccade vector extraction, path simplification
and n-gram counting.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInput

TWO_PI = 2.0 * math.pi


def wrap_angle(a: float) -> float:
    """Wrap an angle into (-pi, pi]."""
    r = a % TWO_PI
    if r > math.pi:
        r -= TWO_PI
    return r


@dataclass(frozen=True)
class Scanpath:
    """Fixation list with normalized coordinates and durations in ms."""

    x: np.ndarray
    y: np.ndarray
    dur_ms: np.ndarray

    def __post_init__(self):
        x = np.asarray(self.x, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        d = np.asarray(self.dur_ms, dtype=np.float64)
        if not (len(x) == len(y) == len(d)):
            raise InvalidInput("fixation columns differ in length")
        if len(x) == 0:
            raise InvalidInput("empty scanpath")
        if np.any(x < 0) or np.any(x > 1) or np.any(y < 0) or np.any(y > 1):
            raise InvalidInput("coordinates must lie in [0,1]")
        if np.any(d < 0):
            raise InvalidInput("durations must be >= 0")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "dur_ms", d)

    def __len__(self) -> int:
        return len(self.x)


@dataclass(frozen=True)
class SymbolSequence:
    symbols: np.ndarray
    grid_size: int
    bins: int

    def __post_init__(self):
        s = np.asarray(self.symbols, dtype=np.int64)
        if len(s) == 0:
            raise InvalidInput("empty symbol sequence")
        if np.any(s < 0) or np.any(s >= self.grid_size**2 * self.bins):
            raise InvalidInput("symbol id outside grid alphabet")
        object.__setattr__(self, "symbols", s)

    def __len__(self) -> int:
        return len(self.symbols)


@dataclass(frozen=True)
class SaccadeSequence:
    """Saccade vectors; s0/s1 are the bounding fixation positions, dur_ms
    the destination fixation's duration."""

    dx: np.ndarray
    dy: np.ndarray
    amp: np.ndarray
    theta: np.ndarray
    turn: np.ndarray
    s0x: np.ndarray
    s0y: np.ndarray
    s1x: np.ndarray
    s1y: np.ndarray
    dur_ms: np.ndarray

    def __post_init__(self):
        cols = [np.asarray(getattr(self, f), dtype=np.float64) for f in self.field_names()]
        n = len(cols[0])
        if n < 1 or any(len(c) != n for c in cols):
            raise InvalidInput("bad saccade columns")
        for f, c in zip(self.field_names(), cols):
            object.__setattr__(self, f, c)
        if np.max(np.abs(self.amp - np.hypot(self.dx, self.dy))) > 1e-9:
            raise InvalidInput("amplitude inconsistent with displacement")
        for ang in (self.theta, self.turn):
            if np.any(ang < -math.pi - 1e-12) or np.any(ang > math.pi + 1e-12):
                raise InvalidInput("angle outside [-pi, pi]")

    @staticmethod
    def field_names():
        return ("dx", "dy", "amp", "theta", "turn", "s0x", "s0y", "s1x", "s1y", "dur_ms")

    def __len__(self) -> int:
        return len(self.dx)


@dataclass(frozen=True)
class FrequencyVector:
    entries: np.ndarray
    alphabet_size: int
    ngram_len: int

    def __post_init__(self):
        e = np.asarray(self.entries, dtype=np.float64)
        if len(e) != self.alphabet_size**self.ngram_len:
            raise InvalidInput("frequency vector has wrong dimension")
        if abs(float(e.sum()) - 1.0) > 1e-9:
            raise InvalidInput("frequencies must sum to 1")
        object.__setattr__(self, "entries", e)

    def __len__(self) -> int:
        return len(self.entries)


def load_scanpath_csv(path) -> Scanpath:
    """Read a `t_ms,x,y,dur_ms` fixation CSV."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [h.strip() for h in header] != ["t_ms", "x", "y", "dur_ms"]:
            raise InvalidInput(f"{path}: expected header t_ms,x,y,dur_ms")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 4:
                raise InvalidInput(f"{path}:{lineno}: expected 4 columns")
            try:
                rows.append([float(v) for v in row])
            except ValueError as exc:
                raise InvalidInput(f"{path}:{lineno}: {exc}") from None
    if not rows:
        raise InvalidInput(f"{path}: no fixations")
    arr = np.array(rows, dtype=np.float64)
    return Scanpath(x=arr[:, 1], y=arr[:, 2], dur_ms=arr[:, 3])


def save_scanpath_csv(path, sp: Scanpath) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["t_ms", "x", "y", "dur_ms"])
        t = 0.0
        for i in range(len(sp)):
            w.writerow([f"{t:.1f}", f"{sp.x[i]:.6f}", f"{sp.y[i]:.6f}", f"{sp.dur_ms[i]:.1f}"])
            t += sp.dur_ms[i]


def symbolize(sp: Scanpath, grid: int = 9, dur_bins: int = 1, dur_max_ms: float = 1000.0) -> SymbolSequence:
    """Map fixations onto a G x G grid; symbol = (row*G + col)*B + bin."""
    if grid < 1 or dur_bins < 1:
        raise InvalidInput("grid and dur_bins must be >= 1")
    col = np.minimum((sp.x * grid).astype(np.int64), grid - 1)
    row = np.minimum((sp.y * grid).astype(np.int64), grid - 1)
    # last duration bin is open-ended
    dbin = np.minimum((sp.dur_ms / (dur_max_ms / dur_bins)).astype(np.int64), dur_bins - 1)
    return SymbolSequence((row * grid + col) * dur_bins + dbin, grid_size=grid, bins=dur_bins)


def _saccades_from_vectors(dx, dy, s0x, s0y, dur_ms) -> SaccadeSequence:
    dx = np.asarray(dx, dtype=np.float64)
    dy = np.asarray(dy, dtype=np.float64)
    theta = np.arctan2(dy, dx)
    turn = np.zeros_like(theta)
    # first turn is 0 by convention
    turn[1:] = [wrap_angle(t) for t in np.diff(theta)]
    return SaccadeSequence(
        dx=dx, dy=dy, amp=np.hypot(dx, dy), theta=theta, turn=turn,
        s0x=s0x, s0y=s0y, s1x=np.asarray(s0x) + dx, s1y=np.asarray(s0y) + dy,
        dur_ms=dur_ms,
    )


def extract_saccades(sp: Scanpath) -> SaccadeSequence:
    """Vector between each consecutive fixation pair."""
    if len(sp) < 2:
        raise InvalidInput("need at least 2 fixations")
    return _saccades_from_vectors(
        dx=np.diff(sp.x), dy=np.diff(sp.y),
        s0x=sp.x[:-1], s0y=sp.y[:-1],
        dur_ms=sp.dur_ms[1:],
    )


def simplify(ss: SaccadeSequence, amp_threshold: float = 0.1,
             dir_threshold_rad: float = math.pi / 4) -> SaccadeSequence:
    """Merge runs of small or near-collinear saccades until a fixpoint.

    A pair merges when the combined vector's amplitude falls below
    amp_threshold or the angle between the two saccades falls below
    dir_threshold_rad.  The merged saccade spans first start to second
    end; its duration is the destination fixation's.
    """
    if amp_threshold < 0 or dir_threshold_rad < 0:
        raise InvalidInput("thresholds must be >= 0")
    segs = [(ss.dx[i], ss.dy[i], ss.s0x[i], ss.s0y[i], ss.dur_ms[i]) for i in range(len(ss))]
    changed = True
    while changed:
        changed = False
        merged = [segs[0]]
        for nxt in segs[1:]:
            dx1, dy1, sx, sy, _ = merged[-1]
            dx2, dy2, _, _, d2 = nxt
            cdx, cdy = dx1 + dx2, dy1 + dy2
            ang = abs(wrap_angle(math.atan2(dy2, dx2) - math.atan2(dy1, dx1)))
            if math.hypot(cdx, cdy) < amp_threshold or ang < dir_threshold_rad:
                merged[-1] = (cdx, cdy, sx, sy, d2)
                changed = True
            else:
                merged.append(nxt)
        segs = merged
    arr = np.array(segs, dtype=np.float64)
    return _saccades_from_vectors(arr[:, 0], arr[:, 1], arr[:, 2], arr[:, 3], arr[:, 4])


def ngram_frequencies(seq: SymbolSequence, alphabet: int, n: int) -> FrequencyVector:
    """Relative frequency of each n-gram after reducing symbols mod alphabet."""
    if alphabet < 1 or n < 1:
        raise InvalidInput("alphabet and n must be >= 1")
    if len(seq) < n:
        raise InvalidInput(f"sequence shorter than n-gram length {n}")
    reduced = seq.symbols % alphabet
    counts = np.zeros(alphabet**n, dtype=np.float64)
    for i in range(len(reduced) - n + 1):
        idx = 0
        for k in range(n):
            idx = idx * alphabet + int(reduced[i + k])
        counts[idx] += 1
    return FrequencyVector(counts / counts.sum(), alphabet_size=alphabet, ngram_len=n)
