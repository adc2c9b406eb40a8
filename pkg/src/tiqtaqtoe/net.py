"""Small two-headed MLP in plain numpy: policy logits over 45 actions + value.

Parameters live in a flat dict of float64 arrays ("w0"/"b0".. for the tanh
trunk, "wp"/"bp" policy head, "wv"/"bv" value head).  forward() returns a
cache of activations that backward() consumes, so gradient checks against
finite differences are exact up to float64 truncation.
"""

import json

import numpy as np

N_ACTIONS = 45
CHECKPOINT_FORMAT = "tiqtaqtoe-ckpt-v1"


def init_params(obs_dim: int, hidden_sizes, rng: np.random.Generator,
                n_actions: int = N_ACTIONS) -> dict:
    """Scaled-normal trunk init; policy head starts near zero for a near
    uniform initial policy."""
    params = {}
    fan_in = obs_dim
    for i, width in enumerate(hidden_sizes):
        params[f"w{i}"] = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, width))
        params[f"b{i}"] = np.zeros(width)
        fan_in = width
    params["wp"] = rng.normal(0.0, 0.01, size=(fan_in, n_actions))
    params["bp"] = np.zeros(n_actions)
    params["wv"] = rng.normal(0.0, np.sqrt(1.0 / fan_in), size=(fan_in, 1))
    params["bv"] = np.zeros(1)
    return params


def n_hidden_layers(params: dict) -> int:
    return sum(1 for key in params if key.startswith("w") and key[1:].isdigit())


def forward(params: dict, obs: np.ndarray, mask: np.ndarray):
    """Batched forward pass.

    obs (B, obs_dim), mask (B, n_actions) boolean.  Returns (probs, values,
    cache); probs are exactly zero on masked-out actions and each row sums
    to one over the legal ones.
    """
    obs = np.atleast_2d(obs)
    mask = np.atleast_2d(mask)
    if not mask.any(axis=1).all():
        raise ValueError("mask with no legal action (environment bug)")
    h = obs
    hiddens = [h]
    for i in range(n_hidden_layers(params)):
        h = np.tanh(h @ params[f"w{i}"] + params[f"b{i}"])
        hiddens.append(h)
    logits = h @ params["wp"] + params["bp"]
    values = (h @ params["wv"] + params["bv"])[:, 0]
    probs = masked_probs(logits, mask)
    cache = {"hiddens": hiddens, "probs": probs, "mask": mask}
    return probs, values, cache


def masked_probs(logits: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """Softmax restricted to legal actions; illegal entries are exactly 0."""
    shifted = np.where(mask, logits, -np.inf)
    shifted = shifted - shifted.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def backward(params: dict, cache: dict, dlogits: np.ndarray, dvalues: np.ndarray) -> dict:
    """Gradients of a scalar loss given its logits/value gradients."""
    hiddens = cache["hiddens"]
    h_last = hiddens[-1]
    grads = {
        "wp": h_last.T @ dlogits,
        "bp": dlogits.sum(axis=0),
        "wv": h_last.T @ dvalues[:, None],
        "bv": dvalues.sum(axis=0, keepdims=True),
    }
    dh = dlogits @ params["wp"].T + dvalues[:, None] @ params["wv"].T
    for i in range(n_hidden_layers(params) - 1, -1, -1):
        dz = dh * (1.0 - hiddens[i + 1] ** 2)
        grads[f"w{i}"] = hiddens[i].T @ dz
        grads[f"b{i}"] = dz.sum(axis=0)
        dh = dz @ params[f"w{i}"].T
    return grads


# ---------------------------------------------------------------- optimizer

def adam_init(params: dict) -> dict:
    return {
        "m": {k: np.zeros_like(v) for k, v in params.items()},
        "v": {k: np.zeros_like(v) for k, v in params.items()},
        "t": 0,
    }


def adam_step(params: dict, grads: dict, state: dict, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8) -> None:
    """One in-place Adam update."""
    state["t"] += 1
    t = state["t"]
    for key, g in grads.items():
        state["m"][key] = beta1 * state["m"][key] + (1 - beta1) * g
        state["v"][key] = beta2 * state["v"][key] + (1 - beta2) * g * g
        m_hat = state["m"][key] / (1 - beta1**t)
        v_hat = state["v"][key] / (1 - beta2**t)
        params[key] -= lr * m_hat / (np.sqrt(v_hat) + eps)


# ---------------------------------------------------------------- checkpoints

def save_checkpoint(path, params: dict, meta: dict) -> None:
    """Versioned npz: weight arrays plus a JSON metadata blob."""
    doc = dict(meta)
    doc["format"] = CHECKPOINT_FORMAT
    arrays = dict(params)
    arrays["__meta__"] = np.array(json.dumps(doc))
    np.savez(path, **arrays)


def load_checkpoint(path):
    """Returns (params, meta); rejects unknown formats."""
    with np.load(path) as data:
        meta = json.loads(str(data["__meta__"]))
        if meta.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"unsupported checkpoint format: {meta.get('format')!r}")
        params = {k: data[k] for k in data.files if k != "__meta__"}
    return params, meta
