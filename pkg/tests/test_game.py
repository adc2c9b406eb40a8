"""Game-rule tests: legality vs an independent enumerator, collapse, replay."""

import numpy as np
import pytest

from tiqtaqtoe import bruteforce, engine, game
from tiqtaqtoe.engine import EMPTY, O, X
from tiqtaqtoe.game import (
    DRAW,
    FREE,
    OCC_O,
    OCC_X,
    ONGOING,
    O_WINS,
    TOUCHED,
    V1,
    V3,
    X_WINS,
    GameState,
    IllegalMoveError,
)


def legal_actions_oracle(status, version) -> np.ndarray:
    """Independent legality enumerator, written from the rule text alone."""
    mask = np.zeros(45, dtype=bool)
    for action in range(45):
        move = game.decode_action(action)
        occupied = [status[c - 1] in (OCC_X, OCC_O) for c in move]
        free = [status[c - 1] == FREE for c in move]
        if len(move) == 1:
            mask[action] = free[0]
        elif version == V1:
            mask[action] = not any(occupied) and any(free)
        else:
            mask[action] = not any(occupied)
    return mask


def random_playout_states(version, n_states, seed, max_plies=20):
    """Collect reachable (status, GameState) snapshots from random play."""
    rng = np.random.default_rng(seed)
    states = []
    while len(states) < n_states:
        gs = game.reset(version, int(rng.integers(0, 2**31)))
        done = False
        for _ in range(max_plies):
            if done:
                break
            states.append(gs.copy())
            mask = game.legal_mask(gs)
            action = int(rng.choice(np.flatnonzero(mask)))
            _, _, done = game.step(gs, action)
    return states[:n_states]


# ---------------------------------------------------------------- action codec

def test_action_codec_fixed_points():
    assert game.encode_action((1,)) == 0
    assert game.encode_action((9,)) == 8
    assert game.encode_action((1, 2)) == 9
    assert game.encode_action((8, 9)) == 44


def test_action_codec_bijection():
    seen = set()
    for action in range(45):
        move = game.decode_action(action)
        assert game.encode_action(move) == action
        seen.add(move)
    assert len(seen) == 45


def test_action_codec_rejects_bad_input():
    with pytest.raises(ValueError):
        game.decode_action(45)
    with pytest.raises(ValueError):
        game.encode_action((2, 1))  # not canonical a < b
    with pytest.raises(ValueError):
        game.encode_action((3, 3))


# ---------------------------------------------------------------- reset

def test_reset_fresh_board():
    gs = game.reset(V1, 0)
    assert gs.turn == X
    assert gs.result == ONGOING
    assert np.all(gs.status == FREE)
    assert gs.move_count == 0
    assert game.legal_mask(gs).sum() == 45

    gs = game.reset(V3, 0)
    assert game.legal_mask(gs).sum() == 45


def test_reset_is_deterministic():
    a = game.reset(V1, 7)
    b = game.reset(V1, 7)
    for _ in range(5):
        mask = game.legal_mask(a)
        action = int(np.flatnonzero(mask)[3])
        game.step(a, action)
        game.step(b, action)
    assert np.array_equal(a.state, b.state)
    assert np.array_equal(a.status, b.status)
    assert a.collapse_log == b.collapse_log


def test_reset_rejects_unknown_version():
    with pytest.raises(ValueError):
        game.reset("v2", 0)


# ---------------------------------------------------------------- legality

def test_legal_mask_after_classical_move_v1():
    gs = game.reset(V1, 1)
    game.step(gs, game.encode_action((1,)))
    mask = game.legal_mask(gs)
    assert not mask[0]  # classical on cell 1 gone
    for j in range(2, 10):
        assert mask[game.encode_action((1, j))]  # splits keep a free endpoint
    assert mask.sum() == 44
    assert np.array_equal(mask, legal_actions_oracle(gs.status, V1))


def test_legal_mask_touched_pairs_v1_vs_v3():
    for version in (V1, V3):
        gs = game.reset(version, 2)
        game.step(gs, game.encode_action((1, 2)))
        game.step(gs, game.encode_action((3, 4)))
        mask = game.legal_mask(gs)
        assert np.array_equal(mask, legal_actions_oracle(gs.status, version))
        for pair in ((1, 2), (1, 3), (1, 4), (2, 3), (2, 4), (3, 4)):
            expected = version == V3  # both endpoints touched
            assert mask[game.encode_action(pair)] == expected


def test_legal_mask_matches_oracle_on_random_states():
    for version in (V1, V3):
        for gs in random_playout_states(version, 300, seed=42):
            assert np.array_equal(game.legal_mask(gs), legal_actions_oracle(gs.status, version))


def test_v1_splits_subset_of_v3():
    for gs in random_playout_states(V1, 200, seed=43):
        v1_mask = legal_actions_oracle(gs.status, V1)
        v3_mask = legal_actions_oracle(gs.status, V3)
        assert np.all(~v1_mask | v3_mask)


def test_legal_mask_nonempty_while_ongoing():
    rng = np.random.default_rng(4)
    for version in (V1, V3):
        for _ in range(50):
            gs = game.reset(version, int(rng.integers(0, 2**31)))
            done = False
            while not done:
                mask = game.legal_mask(gs)
                assert mask.any()
                _, _, done = game.step(gs, int(rng.choice(np.flatnonzero(mask))))


def test_legal_mask_rejects_terminal_state():
    gs = _play_nine_classical()
    assert gs.result != ONGOING
    with pytest.raises(ValueError):
        game.legal_mask(gs)


# ---------------------------------------------------------------- stepping

def _play_nine_classical(seed=0):
    """Nine alternating classical moves: X {1,2,3,6,8}, O {4,5,7,9}; X wins."""
    gs = game.reset(V1, seed)
    for cell in (1, 4, 2, 5, 3, 7, 6, 9, 8):
        game.step(gs, game.encode_action((cell,)))
    return gs


def test_nine_classical_moves_saturate_and_collapse():
    gs = game.reset(V1, 3)
    rewards = []
    for cell in (1, 4, 2, 5, 3, 7, 6, 9, 8):
        gs, reward, done = game.step(gs, game.encode_action((cell,)))
        rewards.append(reward)
    assert done
    assert len(gs.collapse_log) == 1
    # Deterministic state: the collapse outcome is exactly the played board.
    assert gs.collapse_log[0]["outcome"] == "XXXOOXOXO"
    assert gs.result == X_WINS  # X holds 1,2,3; O {4,5,7,9} has no line
    # The saturating move was X's: the mover wins, so reward is +1.
    assert rewards[-1] == 1.0
    assert all(r == 0.0 for r in rewards[:-1])


def test_o_win_gives_mover_negative_reward():
    # O collects the {1,5,9} diagonal; X's five cells {3,4,6,7,8} hold no line.
    gs = game.reset(V1, 5)
    for cell in (3, 1, 4, 5, 6, 9):  # O completes 1,5,9 on ply 6
        gs, reward, done = game.step(gs, game.encode_action((cell,)))
    assert gs.result == ONGOING  # no collapse yet: cells 2,7,8 still free
    for cell in (7, 2, 8):
        gs, reward, done = game.step(gs, game.encode_action((cell,)))
    assert done and gs.result == O_WINS
    # The saturating 9th ply was X's move, so the mover loses: reward -1.
    assert reward == -1.0


def test_illegal_step_leaves_state_unchanged():
    gs = game.reset(V1, 6)
    game.step(gs, 0)
    before_state = gs.state.copy()
    before_status = gs.status.copy()
    before_turn = gs.turn
    with pytest.raises(IllegalMoveError):
        game.step(gs, 0)  # cell 1 no longer free
    assert np.array_equal(gs.state, before_state)
    assert np.array_equal(gs.status, before_status)
    assert gs.turn == before_turn
    assert gs.move_count == 1


def test_step_after_done_rejected():
    gs = _play_nine_classical()
    with pytest.raises(IllegalMoveError):
        game.step(gs, 0)


def test_repeated_splits_hit_cap_and_force_collapse():
    gs = game.reset(V3, 9, move_cap=12)
    done = False
    action = game.encode_action((1, 2))
    while not done:
        gs, _, done = game.step(gs, action)
    assert gs.move_count == 12
    assert len(gs.collapse_log) == 1
    assert gs.result in (X_WINS, O_WINS, DRAW)


def test_episode_length_bounded_by_cap():
    rng = np.random.default_rng(10)
    for version in (V1, V3):
        for _ in range(30):
            gs = game.reset(version, int(rng.integers(0, 2**31)))
            done = False
            while not done:
                mask = game.legal_mask(gs)
                _, _, done = game.step(gs, int(rng.choice(np.flatnonzero(mask))))
            assert gs.move_count <= gs.move_cap + 1


# ---------------------------------------------------------------- saturation

def test_is_saturated():
    gs = game.reset(V1, 11)
    assert not game.is_saturated(gs)
    game.step(gs, game.encode_action((1, 2)))
    assert not game.is_saturated(gs)
    gs.status[:] = TOUCHED
    assert game.is_saturated(gs)
    gs.status[4] = OCC_O
    assert game.is_saturated(gs)


# ---------------------------------------------------------------- collapse

def test_collapse_statuses_are_occupied_or_free():
    rng = np.random.default_rng(12)
    for _ in range(40):
        gs = game.reset(V3, int(rng.integers(0, 2**31)))
        done = False
        while not done and not gs.collapse_log:
            mask = game.legal_mask(gs)
            _, _, done = game.step(gs, int(rng.choice(np.flatnonzero(mask))))
        assert gs.collapse_log
        # Immediately after a collapse no cell can be merely touched.
        outcome = engine.outcome_from_str(gs.collapse_log[0]["outcome"])
        expected = [
            FREE if m == EMPTY else (OCC_X if m == X else OCC_O) for m in outcome
        ]
        if len(gs.collapse_log) == 1 and gs.move_count == gs.collapse_log[0]["ply"]:
            assert list(gs.status) == expected
            assert TOUCHED not in gs.status


def test_collapse_outcome_respects_split_support():
    # One split X on (1,2); classical fills elsewhere.  Whatever collapses,
    # exactly one X lands in {1,2} (the enumeration oracle over nonzero
    # amplitudes shows every outcome has exactly one of the pair marked).
    for seed in range(8):
        gs = game.reset(V1, seed)
        game.step(gs, game.encode_action((1, 2)))          # X split
        for cell in (3, 4, 5, 6, 7, 8):                     # alternating classical
            game.step(gs, game.encode_action((cell,)))
        support = bruteforce.nonzero_outcomes(gs.state, atol=1e-12)
        assert all((oc[0] == X) != (oc[1] == X) for oc in support)
        game.step(gs, game.encode_action((9,)))             # saturates, collapses
        outcome = engine.outcome_from_str(gs.collapse_log[0]["outcome"])
        assert (outcome[0] == X) != (outcome[1] == X)


# ---------------------------------------------------------------- result evaluation

def _status(empty=(), x=(), o=(), touched=()):
    status = np.zeros(9, dtype=np.int8)
    for c in x:
        status[c - 1] = OCC_X
    for c in o:
        status[c - 1] = OCC_O
    for c in touched:
        status[c - 1] = TOUCHED
    return status


def test_evaluate_result_single_line():
    assert game.evaluate_result(_status(x=(1, 2, 3), o=(4, 5))) == X_WINS
    assert game.evaluate_result(_status(o=(1, 5, 9), x=(2, 3))) == O_WINS


def test_evaluate_result_tied_lines_draw():
    assert game.evaluate_result(_status(x=(1, 2, 3), o=(4, 5, 6))) == DRAW


def test_evaluate_result_more_lines_wins():
    # X with two lines beats O with one.
    status = _status(x=(1, 2, 3, 4, 7), o=(5, 6, 9))
    # X lines: {1,2,3} and {1,4,7}; O lines: none -> X wins.
    assert game.evaluate_result(status) == X_WINS


def test_evaluate_result_no_lines():
    assert game.evaluate_result(_status(x=(1, 2), o=(4,))) == ONGOING  # free cells left
    full = _status(x=(1, 2, 6, 7, 5), o=(3, 4, 8, 9))
    # 1,2,6,7,5 has line {1,5,9}? no: 9 is O.  {1,2,3}? 3 is O. No line either way.
    assert game.evaluate_result(full) == DRAW


# ---------------------------------------------------------------- records & replay

def test_record_roundtrip(tmp_path):
    rng = np.random.default_rng(21)
    gs = game.reset(V3, 77)
    done = False
    while not done:
        mask = game.legal_mask(gs)
        _, _, done = game.step(gs, int(rng.choice(np.flatnonzero(mask))))
    path = tmp_path / "game.json"
    game.save_record(gs, path)
    record = game.load_record(path)
    replayed = game.replay_record(record)
    assert np.array_equal(replayed.state, gs.state)
    assert np.array_equal(replayed.status, gs.status)
    assert replayed.result == gs.result
    assert replayed.collapse_log == gs.collapse_log


def test_full_game_determinism():
    rng = np.random.default_rng(22)
    actions = []
    gs = game.reset(V1, 55)
    done = False
    while not done:
        mask = game.legal_mask(gs)
        action = int(rng.choice(np.flatnonzero(mask)))
        actions.append(action)
        _, _, done = game.step(gs, action)
    again = game.reset(V1, 55)
    for action in actions:
        game.step(again, action)
    assert np.array_equal(again.state, gs.state)
    assert np.array_equal(again.status, gs.status)
    assert again.result == gs.result
    assert again.collapse_log == gs.collapse_log
    assert again.rng.bit_generator.state == gs.rng.bit_generator.state


def test_replayed_moves_were_all_legal():
    rng = np.random.default_rng(30)
    for _ in range(20):
        gs = game.reset(V3, int(rng.integers(0, 2**31)))
        done = False
        while not done:
            mask = game.legal_mask(gs)
            _, _, done = game.step(gs, int(rng.choice(np.flatnonzero(mask))))
        record = game.to_record(gs)
        verify = game.reset(record["version"], record["seed"])
        for action in record["actions"]:
            assert game.legal_mask(verify)[action]
            game.step(verify, action)
