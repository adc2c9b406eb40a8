"""Game rules on top of the engine: legality, action codec, collapse, results.

Moves are tuples of cells: (cell,) is a classical move, (a, b) with a < b is
a split.  Actions 0..8 are classical moves on cells 1..9; actions 9..44 are
the 36 unordered pairs in lexicographic order.

Two rule versions:
  * v1 - a split needs at least one free endpoint (and no occupied endpoint),
  * v3 - any pair of non-occupied cells may be split.

A cell is free when no move has used it since the last collapse.  The board
collapses when every cell is touched or occupied; to keep games finite a
collapse is also forced when the ply cap is reached, and the game ends there.
"""

import json
from dataclasses import dataclass, field

import numpy as np

from . import engine
from .engine import EMPTY, N_CELLS, O, X

V1 = "v1"
V3 = "v3"
VERSIONS = (V1, V3)

ONGOING = "ongoing"
X_WINS = "x_wins"
O_WINS = "o_wins"
DRAW = "draw"

FREE, TOUCHED, OCC_X, OCC_O = 0, 1, 2, 3
_OCC_CODE = {X: OCC_X, O: OCC_O}

N_ACTIONS = 45
DEFAULT_MOVE_CAP = 50

LINES = (
    (1, 2, 3), (4, 5, 6), (7, 8, 9),
    (1, 4, 7), (2, 5, 8), (3, 6, 9),
    (1, 5, 9), (3, 5, 7),
)

# Action layout: PAIRS[k] is action 9 + k.
PAIRS = tuple((a, b) for a in range(1, 10) for b in range(a + 1, 10))
_PAIR_INDEX = {pair: 9 + k for k, pair in enumerate(PAIRS)}

GAME_FORMAT = "tiqtaqtoe-game-v1"


class IllegalMoveError(Exception):
    """Raised when a step is attempted with an illegal or out-of-turn action."""


def encode_action(move: tuple) -> int:
    """Action index of a move tuple: (cell,) classical, (a, b) split with a < b."""
    if len(move) == 1:
        cell = move[0]
        if not 1 <= cell <= N_CELLS:
            raise ValueError(f"cell out of range: {cell}")
        return cell - 1
    if len(move) == 2:
        key = (move[0], move[1])
        if key not in _PAIR_INDEX:
            raise ValueError(f"bad split pair: {move}")
        return _PAIR_INDEX[key]
    raise ValueError(f"bad move: {move}")


def decode_action(action: int) -> tuple:
    if not 0 <= action < N_ACTIONS:
        raise ValueError(f"action index out of range: {action}")
    if action < 9:
        return (action + 1,)
    return PAIRS[action - 9]


@dataclass
class GameState:
    version: str
    state: np.ndarray                 # engine state vector
    status: np.ndarray                # (9,) cell status codes
    turn: int                         # engine.X or engine.O, X moves first
    move_log: list                    # (mark, move tuple) in play order
    collapse_log: list                # {"ply", "outcome", "result"} dicts
    move_count: int
    result: str
    rng: np.random.Generator
    seed: int
    move_cap: int = DEFAULT_MOVE_CAP

    def copy(self) -> "GameState":
        dup = GameState(
            version=self.version,
            state=self.state.copy(),
            status=self.status.copy(),
            turn=self.turn,
            move_log=list(self.move_log),
            collapse_log=[dict(ev) for ev in self.collapse_log],
            move_count=self.move_count,
            result=self.result,
            rng=np.random.default_rng(),
            seed=self.seed,
            move_cap=self.move_cap,
        )
        dup.rng.bit_generator.state = self.rng.bit_generator.state
        return dup


def reset(version: str, seed: int, move_cap: int = DEFAULT_MOVE_CAP) -> GameState:
    """Fresh game: all cells free, X to move, deterministic rng from seed."""
    if version not in VERSIONS:
        raise ValueError(f"unknown rule version: {version!r}")
    return GameState(
        version=version,
        state=engine.new_state(),
        status=np.zeros(N_CELLS, dtype=np.int8),
        turn=X,
        move_log=[],
        collapse_log=[],
        move_count=0,
        result=ONGOING,
        rng=np.random.default_rng(seed),
        seed=seed,
        move_cap=move_cap,
    )


def legal_mask(gs: GameState) -> np.ndarray:
    """Boolean vector over the 45 actions; only valid on ongoing games."""
    if gs.result != ONGOING:
        raise ValueError("legal_mask called on a terminal game")
    mask = np.zeros(N_ACTIONS, dtype=bool)
    status = gs.status
    for cell in range(1, 10):
        mask[cell - 1] = status[cell - 1] == FREE
    for k, (a, b) in enumerate(PAIRS):
        sa, sb = status[a - 1], status[b - 1]
        if sa >= OCC_X or sb >= OCC_X:
            continue
        if gs.version == V1 and not (sa == FREE or sb == FREE):
            continue
        mask[9 + k] = True
    return mask


def is_saturated(gs: GameState) -> bool:
    """True when every cell has been touched or occupied since the last collapse."""
    return bool(np.all(gs.status != FREE))


def evaluate_result(status: np.ndarray) -> str:
    """Line count over occupied cells: more lines wins, equal nonzero draws.

    With no lines the game goes on while any cell is free, otherwise it is
    a draw.
    """
    counts = {X: 0, O: 0}
    for mark, code in _OCC_CODE.items():
        for line in LINES:
            if all(status[c - 1] == code for c in line):
                counts[mark] += 1
    if counts[X] > counts[O]:
        return X_WINS
    if counts[O] > counts[X]:
        return O_WINS
    if counts[X] > 0:
        return DRAW
    return ONGOING if np.any(status == FREE) else DRAW


def do_collapse(gs: GameState, forced: bool = False) -> GameState:
    """Sample a classical board, freeze its marks, and score the position.

    Cells empty in the sampled outcome become free again and play continues,
    except on a forced (ply-cap) collapse, which always ends the game.
    """
    outcome = engine.sample_collapse(gs.state, gs.rng)
    gs.state = engine.project_to_outcome(gs.state, outcome)
    for cell0, mark in enumerate(outcome):
        gs.status[cell0] = FREE if mark == EMPTY else _OCC_CODE[mark]
    gs.result = evaluate_result(gs.status)
    if gs.result == ONGOING and (forced or not np.any(legal_mask(gs))):
        gs.result = DRAW
    gs.collapse_log.append(
        {"ply": gs.move_count, "outcome": engine.outcome_to_str(outcome), "result": gs.result}
    )
    return gs


def step(gs: GameState, action: int) -> tuple:
    """Apply one action for the player to move; returns (gs, reward, done).

    Reward is from the mover's perspective: +1/-1 when a collapse this step
    decides the game for/against the mover, else 0.  Illegal actions raise
    IllegalMoveError and leave the state untouched.
    """
    if gs.result != ONGOING:
        raise IllegalMoveError("game is over")
    if not 0 <= action < N_ACTIONS:
        raise IllegalMoveError(f"action index out of range: {action}")
    if not legal_mask(gs)[action]:
        raise IllegalMoveError(f"illegal action {action} ({decode_action(action)})")

    move = decode_action(action)
    mover = gs.turn
    if len(move) == 1:
        gs.state = engine.apply_creation(gs.state, move[0], mover)
    else:
        gs.state = engine.apply_split(gs.state, move[0], move[1], mover)
    for cell in move:
        if gs.status[cell - 1] == FREE:
            gs.status[cell - 1] = TOUCHED
    gs.move_log.append((mover, move))
    gs.move_count += 1
    gs.turn = O if mover == X else X

    if is_saturated(gs) or gs.move_count >= gs.move_cap:
        # At the ply cap the collapse is forced and the game ends either way.
        do_collapse(gs, forced=gs.move_count >= gs.move_cap)

    reward = 0.0
    if gs.result == X_WINS:
        reward = 1.0 if mover == X else -1.0
    elif gs.result == O_WINS:
        reward = 1.0 if mover == O else -1.0
    return gs, reward, gs.result != ONGOING


# ---------------------------------------------------------------- game records

def to_record(gs: GameState) -> dict:
    """Replayable game record: version, seed, actions, collapses, result."""
    return {
        "format": GAME_FORMAT,
        "version": gs.version,
        "seed": gs.seed,
        "move_cap": gs.move_cap,
        "actions": [encode_action(move) for _, move in gs.move_log],
        "collapses": [dict(ev) for ev in gs.collapse_log],
        "result": gs.result,
    }


def replay_record(record: dict, verify: bool = True) -> GameState:
    """Re-run a recorded game from its seed; optionally check it matches."""
    if record.get("format") != GAME_FORMAT:
        raise ValueError(f"unsupported game format: {record.get('format')!r}")
    gs = reset(record["version"], record["seed"], record.get("move_cap", DEFAULT_MOVE_CAP))
    for action in record["actions"]:
        step(gs, action)
    if verify:
        if gs.result != record["result"]:
            raise ValueError(f"replay result {gs.result} != recorded {record['result']}")
        if gs.collapse_log != record["collapses"]:
            raise ValueError("replay collapse log does not match record")
    return gs


def save_record(gs: GameState, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_record(gs), fh, indent=2)


def load_record(path) -> dict:
    with open(path) as fh:
        record = json.load(fh)
    if record.get("format") != GAME_FORMAT:
        raise ValueError(f"unsupported game format: {record.get('format')!r}")
    return record
