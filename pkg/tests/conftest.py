"""Shared helpers: path validation and an enumeration oracle.

The enumeration oracle walks every legal chain traversal by brute force and
never touches the dynamic-programming code, so it can serve as an
independent ground truth for optimality and tie-break checks.
"""

from __future__ import annotations

import numpy as np
import pytest

from alignprep import LabelSequence, TokenTable, collapse
from alignprep.synthetic import letter_table


@pytest.fixture(scope="session")
def alpha_table() -> TokenTable:
    return letter_table()


def validate_path(path, chain, emissions=None):
    """Assert every structural invariant of an alignment path."""
    states = path.states
    num_states = chain.num_states
    assert states[0] in (0, 1)
    assert states[-1] in (num_states - 1, num_states - 2)
    deltas = np.diff(states)
    assert ((deltas >= 0) & (deltas <= 2)).all()
    for t in np.nonzero(deltas == 2)[0]:
        landing = int(states[t + 1])
        assert landing % 2 == 1, "+2 must land on a label state"
        assert chain.skip_ok[landing], "+2 into a repeated label is illegal"
    assert collapse(path, chain).texts == chain.labels.texts
    if emissions is not None:
        from alignprep.trellis import path_frame_logprobs

        total = float(path_frame_logprobs(emissions, path, chain).sum())
        assert abs(total - path.log_prob) < 1e-9


def enumerate_paths(chain, frames):
    """Every state path of the inverse-collapse set, by pruned DFS."""
    num_states = chain.num_states
    skip_ok = chain.skip_ok
    finals = {num_states - 1, num_states - 2}
    out = []
    acc = [0]

    def dfs(t, state):
        if state + 2 * (frames - 1 - t) < num_states - 2:
            return  # cannot reach a final state any more
        if t == frames - 1:
            if state in finals:
                out.append(tuple(acc))
            return
        nexts = [state, state + 1]
        if state + 2 < num_states and skip_ok[state + 2]:
            nexts.append(state + 2)
        for nxt in nexts:
            if nxt < num_states:
                acc.append(nxt)
                dfs(t + 1, nxt)
                acc.pop()

    for start in (0, 1):
        acc[0] = start
        dfs(0, start)
    return out


def states_logprob(emissions, chain, states) -> float:
    """Sum of emission log-probs along an explicit state sequence."""
    tokens = chain.token_indices
    total = 0.0
    for t, s in enumerate(states):
        idx = int(tokens[s])
        if idx >= 0:
            total += float(emissions.logprobs[t, idx])
    return total


def best_by_enumeration(emissions, chain):
    """Maximum path log-prob over the whole inverse-collapse set."""
    paths = enumerate_paths(chain, emissions.frames)
    assert paths, "no feasible path: oracle cannot score this instance"
    return max(states_logprob(emissions, chain, p) for p in paths)


def tiebreak_by_enumeration(emissions, chain):
    """The documented tie-break applied to enumeration prefix maxima.

    Builds prefix maxima per (frame, state) from the enumerated path set,
    then walks back preferring the higher terminal state and the smallest
    predecessor, mirroring the documented rule without running the DP.
    """
    frames = emissions.frames
    paths = enumerate_paths(chain, frames)
    tokens = chain.token_indices
    prefix_max: dict = {}
    for p in paths:
        total = 0.0
        for t, s in enumerate(p):
            idx = int(tokens[s])
            total += float(emissions.logprobs[t, idx]) if idx >= 0 else 0.0
            key = (t, s)
            if key not in prefix_max or total > prefix_max[key]:
                prefix_max[key] = total

    num_states = chain.num_states
    last, second = (
        prefix_max.get((frames - 1, num_states - 1)),
        prefix_max.get((frames - 1, num_states - 2)),
    )
    if second is None or (last is not None and last >= second):
        state = num_states - 1
    else:
        state = num_states - 2
    chosen = [state]
    for t in range(frames - 1, 0, -1):
        candidates = [state - 2, state - 1, state]
        best_state, best_value = None, None
        for p_state in candidates:
            if p_state < 0:
                continue
            if p_state == state - 2 and not chain.skip_ok[state]:
                continue
            value = prefix_max.get((t - 1, p_state))
            if value is None:
                continue
            if best_value is None or value > best_value:
                best_state, best_value = p_state, value
        state = best_state
        chosen.append(state)
    return list(reversed(chosen))
