"""Observation encoders: measurement estimates and moves-history matrices.

Three agent views of a game:
  * "m"  - 9x3 per-cell probability triples (empty/X/O), estimated from N
           simulated collapses of the current state (or exact marginals),
  * "h"  - two 9x9 symmetric count matrices: diagonal entries count
           classical moves per cell, off-diagonal entries count splits
           entangling the pair, one matrix per mark,
  * "mh" - both, measurement first.

Encodings are role-relative: when O is to move the X and O channels are
swapped so a shared self-play policy always sees its own marks first.
"""

from dataclasses import dataclass

import numpy as np

from . import engine
from .engine import DIM, N_CELLS, O, X
from .game import GameState

OBS_MODES = ("m", "h", "mh")

_POW3 = 3 ** np.arange(N_CELLS - 1, -1, -1)


@dataclass
class EncoderConfig:
    mode: str = "mh"
    n_samples: int = 100
    exact: bool = False
    history_norm: float = 50.0

    def __post_init__(self):
        if self.mode not in OBS_MODES:
            raise ValueError(f"unknown observation mode: {self.mode!r}")
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.history_norm <= 0:
            raise ValueError("history_norm must be positive")


def obs_size(mode: str) -> int:
    return {"m": 27, "h": 162, "mh": 189}[mode]


def measure_estimate(state: np.ndarray, n: int, rng: np.random.Generator) -> np.ndarray:
    """Per-cell mark frequencies over n simulated collapses of the state.

    Each sample consumes one uniform draw, exactly like sample_collapse, so
    a seeded stream gives the same estimates as n individual samples.  The
    live state is never modified.
    """
    if n < 1:
        raise ValueError("need at least one sample")
    cum = engine.probs_cumsum(state)
    draws = rng.random(n) * cum[-1]
    indices = np.minimum(np.searchsorted(cum, draws, side="right"), DIM - 1)
    digits = (indices[:, None] // _POW3) % 3  # (n, 9) mark per cell per sample
    obs = np.empty((N_CELLS, 3))
    for cell0 in range(N_CELLS):
        obs[cell0] = np.bincount(digits[:, cell0], minlength=3) / n
    return obs


def measurement(gs: GameState, cfg: EncoderConfig, rng: np.random.Generator) -> np.ndarray:
    if cfg.exact:
        return engine.exact_marginals(gs.state)
    return measure_estimate(gs.state, cfg.n_samples, rng)


def new_history() -> np.ndarray:
    """Zeroed count matrices, shape (2, 9, 9): index 0 for X, 1 for O."""
    return np.zeros((2, N_CELLS, N_CELLS), dtype=np.int64)


def update_history(history: np.ndarray, mark: int, move: tuple) -> np.ndarray:
    """Count one move in place: classical on the diagonal, splits symmetric."""
    m = 0 if mark == X else 1
    if len(move) == 1:
        cell0 = move[0] - 1
        history[m, cell0, cell0] += 1
    else:
        a0, b0 = move[0] - 1, move[1] - 1
        history[m, a0, b0] += 1
        history[m, b0, a0] += 1
    return history


def history_from_log(move_log) -> np.ndarray:
    history = new_history()
    for mark, move in move_log:
        update_history(history, mark, move)
    return history


def encode(gs: GameState, cfg: EncoderConfig, rng: np.random.Generator) -> np.ndarray:
    """Flat observation vector for the player to move (27 / 162 / 189 values)."""
    swap = gs.turn == O
    parts = []
    if cfg.mode in ("m", "mh"):
        meas = measurement(gs, cfg, rng)
        if swap:
            meas = meas[:, [0, 2, 1]]
        parts.append(meas.reshape(-1))
    if cfg.mode in ("h", "mh"):
        history = history_from_log(gs.move_log).astype(np.float64)
        if swap:
            history = history[::-1]
        parts.append(history.reshape(-1) / cfg.history_norm)
    return np.concatenate(parts)
