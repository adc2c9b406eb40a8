"""Slow enumeration oracles for the state-vector engine.

Everything here walks the 19683 basis states with explicit digit
arithmetic and Python loops.  None of it shares code with the reshape
based fast path in engine.py, so the two can check each other.
"""

import numpy as np

from .engine import DIM, N_CELLS


def digits_of(index: int) -> list:
    """Base-3 digits of a basis index, cell 1 first."""
    digits = []
    for _ in range(N_CELLS):
        digits.append(index % 3)
        index //= 3
    digits.reverse()
    return digits


def index_of(digits) -> int:
    index = 0
    for d in digits:
        index = index * 3 + d
    return index


def apply_single_slow(state: np.ndarray, cell: int, gate: np.ndarray) -> np.ndarray:
    """Dense matrix-vector application of a one-cell gate, one basis state at a time."""
    out = np.zeros(DIM, dtype=np.complex128)
    for idx in range(DIM):
        amp = state[idx]
        if amp == 0:
            continue
        digits = digits_of(idx)
        col = digits[cell - 1]
        for row in range(3):
            g = gate[row, col]
            if g == 0:
                continue
            digits[cell - 1] = row
            out[index_of(digits)] += g * amp
        digits[cell - 1] = col
    return out


def apply_two_slow(state: np.ndarray, a: int, b: int, gate: np.ndarray) -> np.ndarray:
    """Dense matrix-vector application of a two-cell gate (pair index 3*s_a + s_b)."""
    out = np.zeros(DIM, dtype=np.complex128)
    for idx in range(DIM):
        amp = state[idx]
        if amp == 0:
            continue
        digits = digits_of(idx)
        col = 3 * digits[a - 1] + digits[b - 1]
        for row in range(9):
            g = gate[row, col]
            if g == 0:
                continue
            digits[a - 1] = row // 3
            digits[b - 1] = row % 3
            out[index_of(digits)] += g * amp
        digits[a - 1] = col // 3
        digits[b - 1] = col % 3
    return out


def marginals_slow(state: np.ndarray) -> np.ndarray:
    """Per-cell probability triples accumulated basis state by basis state."""
    marg = np.zeros((N_CELLS, 3))
    for idx in range(DIM):
        p = abs(state[idx]) ** 2
        if p == 0:
            continue
        for cell0, d in enumerate(digits_of(idx)):
            marg[cell0, d] += p
    return marg


def nonzero_outcomes(state: np.ndarray, atol: float = 0.0) -> dict:
    """Map of classical outcome -> probability for every nonzero amplitude."""
    table = {}
    for idx in range(DIM):
        p = abs(state[idx]) ** 2
        if p > atol:
            table[tuple(digits_of(idx))] = p
    return table
