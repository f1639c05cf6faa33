"""ScanMatch alignment-score circuit.

Needleman-Wunsch over private symbol sequences with a public
substitution matrix.  Substitution lookups are oblivious selections
driven by per-symbol one-hots; the dynamic program carries per-row
bit-widths so early cells stay narrow.

Grid-derived matrices score by (|row diff|, |col diff|) of the grid
cells, so the per-cell joint one-hot collapses from size^2 products to
roughly 3 * grid^2: difference one-hots for rows and columns (with the
sign folded out by XOR) and one product per (|dr|, |dc|) pair.  A
matrix without that structure falls back to the full pair table, which
is only sensible for small alphabets.

Outputs the raw integer alignment score; normalization uses only public
values (max score, lengths) and happens after reveal.
"""

from __future__ import annotations

import numpy as np

from ..errors import InvalidInput
from ..fixedpoint import min_bitwidth_for_row, to_unsigned
from .builder import CircuitBuilder
from . import gadgets as g


def symbol_width(size):
    return max(1, (size - 1).bit_length())


def _difference_table(m):
    """Score per (|dr|, |dc|) if the matrix has grid structure, else None."""
    if m.grid is None:
        return None
    grid, bins = m.grid, m.bins
    cell = np.arange(m.size) // bins
    row, col = cell // grid, cell % grid
    dr = np.abs(row[:, None] - row[None, :])
    dc = np.abs(col[:, None] - col[None, :])
    table = np.zeros((grid, grid), dtype=np.int64)
    table[dr, dc] = m.scores
    if not np.array_equal(table[dr, dc], m.scores):
        raise InvalidInput("matrix contradicts its grid metadata")
    return table


def _diff_onehot(b, xs, ys, n):
    """One-hot of |i - j| from two one-hots of size n.

    Entry u materializes sum_r xs[r] & ys[r +- u]; the two signs are
    disjoint events, so they combine by free XOR.  Cost: n^2 ANDs.
    """
    out = []
    for u in range(n):
        terms = [b.and_(xs[r], ys[r - u]) for r in range(u, n)]
        if u:
            terms += [b.and_(xs[r - u], ys[r]) for r in range(u, n)]
        out.append(g.xor_reduce(b, terms))
    return out


def _cell_scores_grid(b, a_oh, b_oh, m):
    """Score wires for every sequence pair under a grid-derived matrix."""
    grid, bins = m.grid, m.bins
    table = _difference_table(m)
    width = max(1, int(table.max()).bit_length())
    flat = [int(table[u, v]) for u in range(grid) for v in range(grid)]

    def rows_cols(oh):
        cells = [g.xor_reduce(b, oh[c * bins:(c + 1) * bins])
                 for c in range(grid * grid)]
        rows = [g.xor_reduce(b, cells[r * grid:(r + 1) * grid])
                for r in range(grid)]
        cols = [g.xor_reduce(b, cells[c::grid]) for c in range(grid)]
        return rows, cols

    a_rc = [rows_cols(oh) for oh in a_oh]
    b_rc = [rows_cols(oh) for oh in b_oh]
    scores = []
    for ra, ca in a_rc:
        row_scores = []
        for rb, cb in b_rc:
            rd = _diff_onehot(b, ra, rb, grid)
            cd = _diff_onehot(b, ca, cb, grid)
            joint = [b.and_(rd[u], cd[v])
                     for u in range(grid) for v in range(grid)]
            row_scores.append(g.select_public(b, flat, joint, width))
        scores.append(row_scores)
    return scores, width


def _cell_scores_general(b, a_oh, b_oh, m):
    """Full pair-table selection: size^2 ANDs per cell."""
    lo = int(m.scores.min())
    offset = min(lo, 0)
    shifted = (m.scores - offset).astype(np.int64)
    width = max(1, int(shifted.max()).bit_length())
    flat = [int(v) for v in shifted.reshape(-1)]
    n = m.size
    scores = []
    for oa in a_oh:
        row_scores = []
        for ob in b_oh:
            joint = [b.and_(oa[s], ob[t]) for s in range(n) for t in range(n)]
            row_scores.append(g.select_public(b, flat, joint, width))
        scores.append(row_scores)
    return scores, width, offset


def emit_scanmatch(b, a_bits, b_bits, m):
    """Raw alignment score of two symbol sequences given as wire bits."""
    sw = symbol_width(m.size)
    if not a_bits or not b_bits or len(a_bits) % sw or len(b_bits) % sw:
        raise InvalidInput("symbol inputs must be nonempty multiples of "
                           f"{sw} bits")
    len_a, len_b = len(a_bits) // sw, len(b_bits) // sw
    a_oh = [g.one_hot(b, a_bits[sw * i:sw * (i + 1)], m.size)
            for i in range(len_a)]
    b_oh = [g.one_hot(b, b_bits[sw * j:sw * (j + 1)], m.size)
            for j in range(len_b)]

    if m.grid is not None:
        scores, _ = _cell_scores_grid(b, a_oh, b_oh, m)
        offset = 0
    else:
        scores, _, offset = _cell_scores_general(b, a_oh, b_oh, m)

    gd, gi = m.gap_del, m.gap_ins
    bound_unit = max(m.max_score, abs(int(m.scores.min())), gd, gi)

    def width_at(row):
        return min_bitwidth_for_row(row, bound_unit, (gd, gi))

    def const_at(value, row):
        w = width_at(row)
        return g.const_vec(to_unsigned(value, w), w)

    # DP over two rows; cell (i, j) lives at signed width_at(i + j)
    prev = [const_at(-gi * j, j) for j in range(len_b + 1)]
    for i in range(1, len_a + 1):
        cur = [const_at(-gd * i, i)]
        for j in range(1, len_b + 1):
            w = width_at(i + j)
            sub_score = g.add(b, g.sign_extend(prev[j - 1], w),
                              g.zero_extend(scores[i - 1][j - 1], w), w)
            if offset:
                sub_score = g.add(b, sub_score,
                                  g.const_vec(to_unsigned(offset, w), w), w)
            del_score = g.add(b, g.sign_extend(prev[j], w),
                              g.const_vec(to_unsigned(-gd, w), w), w)
            ins_score = g.add(b, g.sign_extend(cur[j - 1], w),
                              g.const_vec(to_unsigned(-gi, w), w), w)
            best = g.max_(b, g.max_(b, sub_score, del_score, signed=True),
                          ins_score, signed=True)
            cur.append(best)
        prev = cur
    return prev[-1]


def build_scanmatch_circuit(len_a, len_b, m):
    """Private symbol sequences in, raw alignment score out."""
    if len_a < 1 or len_b < 1:
        raise InvalidInput("sequence lengths must be >= 1")
    sw = symbol_width(m.size)
    b = CircuitBuilder()
    a_bits = b.add_input("garbler", "a", sw * len_a)
    b_bits = b.add_input("evaluator", "b", sw * len_b)
    b.add_output("raw", emit_scanmatch(b, a_bits, b_bits, m))
    return b.build()


def symbols_to_bits(symbols, size):
    """Pack symbol ids into the circuit's input bit layout."""
    sw = symbol_width(size)
    out = np.zeros(sw * len(symbols), dtype=np.uint8)
    for i, s in enumerate(symbols):
        if not 0 <= int(s) < size:
            raise InvalidInput("symbol outside substitution matrix")
        for k in range(sw):
            out[sw * i + k] = (int(s) >> k) & 1
    return out


def normalize_raw(raw, m, len_a, len_b):
    """Public post-reveal normalization to [0, 1]."""
    sim = raw / (m.max_score * max(len_a, len_b))
    return min(1.0, max(0.0, sim))
