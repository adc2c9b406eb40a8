"""Dense state-vector simulation of the 9-qutrit board.

Each of the nine cells is a qutrit with basis states empty/X/O (indices
0/1/2).  The full board state is a complex vector of 3**9 = 19683
amplitudes; squared magnitudes are collapse probabilities.

Basis index encoding: cell 1 is the most significant base-3 digit, so the
all-empty board is index 0 and |X________> is index 3**8.  This encoding is
fixed; serialized states and frozen test values rely on it.
"""

import json
import threading

import numpy as np

N_CELLS = 9
DIM = 3**N_CELLS  # 19683

EMPTY, X, O = 0, 1, 2
MARK_CHARS = "_XO"

# _POW3[i] is the weight of cell i+1 in the basis index (cell 1 most significant).
_POW3 = 3 ** np.arange(N_CELLS - 1, -1, -1)

STATE_FORMAT = "tiqtaqtoe-state-v1"

NORM_ATOL = 1e-9
INPUT_NORM_ATOL = 1e-6


def new_state() -> np.ndarray:
    """All-empty classical board: amplitude 1 at basis index 0."""
    state = np.zeros(DIM, dtype=np.complex128)
    state[0] = 1.0
    return state


def creation_gate(mark: int) -> np.ndarray:
    """Single-qutrit transposition swapping |empty> and |mark>.

    The opponent's basis state is fixed, so the gate is unitary on the
    whole qutrit and is its own inverse.
    """
    if mark not in (X, O):
        raise ValueError(f"mark must be X ({X}) or O ({O}), got {mark}")
    g = np.eye(3, dtype=np.complex128)
    g[[EMPTY, mark]] = g[[mark, EMPTY]]
    return g


def split_gate(mark: int) -> np.ndarray:
    """Two-qutrit swap-split gate for an ordered cell pair (a, b).

    Acts on the 2-dim subspace spanned by |mark, empty> and |empty, mark>
    as [[1/sqrt2, i/sqrt2], [i/sqrt2, 1/sqrt2]] and as identity on the
    remaining seven basis states.  Basis index of |s_a, s_b> is 3*s_a + s_b.
    """
    if mark not in (X, O):
        raise ValueError(f"mark must be X ({X}) or O ({O}), got {mark}")
    g = np.eye(9, dtype=np.complex128)
    hi = 3 * mark + EMPTY  # |mark, empty>
    lo = 3 * EMPTY + mark  # |empty, mark>
    s = 1.0 / np.sqrt(2.0)
    g[hi, hi] = s
    g[hi, lo] = 1j * s
    g[lo, hi] = 1j * s
    g[lo, lo] = s
    return g


def _check_cell(cell: int) -> None:
    if not 1 <= cell <= N_CELLS:
        raise ValueError(f"cell index out of range: {cell}")


# The gates are near-identity, so instead of dense matrix application the
# hot path uses precomputed basis-index tables: a creation gate is a pure
# permutation of basis states, and the swap-split gate only mixes the 2187
# (|mark,empty>, |empty,mark>) index pairs of its cell pair.  The generic
# dense application lives in bruteforce.py and the tests pin both paths
# against each other.
_CREATION_PERMS = {}
_SPLIT_PAIRS = {}
_SCRATCH = threading.local()


def _digit(indices: np.ndarray, cell: int) -> np.ndarray:
    return (indices // _POW3[cell - 1]) % 3


def _creation_perm(cell: int, mark: int) -> np.ndarray:
    perm = _CREATION_PERMS.get((cell, mark))
    if perm is None:
        indices = np.arange(DIM)
        digit = _digit(indices, cell)
        swapped = np.where(digit == EMPTY, mark, np.where(digit == mark, EMPTY, digit))
        perm = indices + (swapped - digit) * _POW3[cell - 1]
        _CREATION_PERMS[(cell, mark)] = perm
    return perm


def _split_pair_indices(a: int, b: int, mark: int) -> tuple:
    pair = _SPLIT_PAIRS.get((a, b, mark))
    if pair is None:
        indices = np.arange(DIM)
        hi = indices[(_digit(indices, a) == mark) & (_digit(indices, b) == EMPTY)]
        lo = hi - mark * _POW3[a - 1] + mark * _POW3[b - 1]
        pair = (hi, lo)
        _SPLIT_PAIRS[(a, b, mark)] = pair
    return pair


def probs_cumsum(state: np.ndarray) -> np.ndarray:
    """Cumulative |amplitude|^2 in a per-thread scratch buffer.

    The returned array is reused by the next call on the same thread; copy
    it if it must outlive the call.
    """
    buffers = getattr(_SCRATCH, "floats", None)
    if buffers is None:
        buffers = (np.empty(DIM), np.empty(DIM))
        _SCRATCH.floats = buffers
    probs, cum = buffers
    np.abs(state, out=probs)
    np.multiply(probs, probs, out=probs)
    np.cumsum(probs, out=cum)
    return cum


def apply_creation(state: np.ndarray, cell: int, mark: int) -> np.ndarray:
    """Classical move: rotate |empty> to |mark> on the given cell."""
    _check_cell(cell)
    if mark not in (X, O):
        raise ValueError(f"mark must be X ({X}) or O ({O}), got {mark}")
    # The creation gate is a transposition, i.e. a self-inverse permutation
    # of basis states.
    return state[_creation_perm(cell, mark)]


def _apply_swap_split(state: np.ndarray, a: int, b: int, mark: int) -> np.ndarray:
    hi_idx, lo_idx = _split_pair_indices(a, b, mark)
    out = state.copy()
    hi = state[hi_idx]
    lo = state[lo_idx]
    s = 1.0 / np.sqrt(2.0)
    out[hi_idx] = s * hi + 1j * s * lo
    out[lo_idx] = 1j * s * hi + s * lo
    return out


def apply_split(state: np.ndarray, a: int, b: int, mark: int) -> np.ndarray:
    """Entangling move: creation on cell a followed by the swap-split on (a, b).

    On two empty cells this yields the mark at a or at b with probability
    0.5 each; on already-entangled cells the composition is just linear
    algebra and stays unitary.
    """
    _check_cell(a)
    _check_cell(b)
    if a == b:
        raise ValueError(f"split cells must differ, got ({a}, {b})")
    return _apply_swap_split(apply_creation(state, a, mark), a, b, mark)


def exact_marginals(state: np.ndarray) -> np.ndarray:
    """Per-cell probability triples: entry (i, s) = P(cell i+1 in state s).

    Raises if the input norm deviates by more than 1e-6 (corrupted state).
    """
    probs = np.abs(state) ** 2
    total = probs.sum()
    if abs(total - 1.0) > INPUT_NORM_ATOL:
        raise ValueError(f"state is not normalized: |amp|^2 sums to {total}")
    t = probs.reshape([3] * N_CELLS)
    marg = np.empty((N_CELLS, 3))
    for i in range(N_CELLS):
        axes = tuple(ax for ax in range(N_CELLS) if ax != i)
        marg[i] = t.sum(axis=axes)
    return marg


def outcome_to_index(outcome) -> int:
    """Base-3 index of a classical board (9 marks, cell 1 most significant)."""
    if len(outcome) != N_CELLS:
        raise ValueError(f"outcome must have {N_CELLS} marks")
    return int(np.dot(np.asarray(outcome, dtype=np.int64), _POW3))

def index_to_outcome(index: int) -> tuple:
    """Inverse of outcome_to_index; returns a tuple of 9 marks."""
    if not 0 <= index < DIM:
        raise ValueError(f"basis index out of range: {index}")
    return tuple((index // _POW3) % 3)


def outcome_to_str(outcome) -> str:
    return "".join(MARK_CHARS[m] for m in outcome)


def outcome_from_str(text: str) -> tuple:
    if len(text) != N_CELLS or any(c not in MARK_CHARS for c in text):
        raise ValueError(f"bad outcome string: {text!r}")
    return tuple(MARK_CHARS.index(c) for c in text)


def collapse_probability(state: np.ndarray, outcome) -> float:
    """Probability |alpha|^2 of collapsing to the given classical board."""
    return float(np.abs(state[outcome_to_index(outcome)]) ** 2)


def sample_collapse(state: np.ndarray, rng: np.random.Generator) -> tuple:
    """Sample one classical board with probability |alpha|^2 (inverse CDF).

    Consumes exactly one uniform draw from rng; does not modify the state.
    """
    cum = probs_cumsum(state)
    u = rng.random() * cum[-1]
    idx = int(np.searchsorted(cum, u, side="right"))
    idx = min(idx, DIM - 1)
    # Float-boundary guard: never land on a zero-probability outcome.
    while idx > 0 and state[idx] == 0:
        idx -= 1
    return index_to_outcome(idx)


def project_to_outcome(state: np.ndarray, outcome) -> np.ndarray:
    """Post-measurement state: the classical basis state |outcome>."""
    idx = outcome_to_index(outcome)
    if np.abs(state[idx]) ** 2 <= 0.0:
        raise ValueError(f"cannot project onto zero-probability outcome {outcome_to_str(outcome)}")
    projected = np.zeros(DIM, dtype=np.complex128)
    projected[idx] = 1.0
    return projected


def state_to_json(state: np.ndarray) -> str:
    """Serialize as a versioned JSON array of (re, im) pairs."""
    pairs = [[float(a.real), float(a.imag)] for a in state]
    return json.dumps({"format": STATE_FORMAT, "amplitudes": pairs})


def state_from_json(text: str) -> np.ndarray:
    doc = json.loads(text)
    if doc.get("format") != STATE_FORMAT:
        raise ValueError(f"unsupported state format: {doc.get('format')!r}")
    pairs = doc["amplitudes"]
    if len(pairs) != DIM:
        raise ValueError(f"state must have {DIM} amplitudes, got {len(pairs)}")
    state = np.array([complex(re, im) for re, im in pairs], dtype=np.complex128)
    return state
