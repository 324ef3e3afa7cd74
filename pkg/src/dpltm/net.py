"""Dense feed-forward ReLU network with a hand-written reverse pass."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Tape:
    net_id: int
    widths: tuple
    inputs: np.ndarray
    pre: list          # pre-activations of hidden layers
    acts: list         # layer inputs: x, then post-ReLU (and post-dropout) hidden values
    masks: list        # dropout multipliers per hidden layer, or None
    squeeze: bool


INIT_SCHEMES = ("uniform_fan_in", "he_uniform")


class DeepNet:
    """``g(x) = W_K relu(... relu(W_0 x + v_0) ...) + v_K``.

    ``widths = (d, p_1, ..., p_K, out)``; with no hidden layers the net is affine.
    Weights are stored as ``(fan_out, fan_in)`` arrays.
    """

    def __init__(self, weights, biases, dropout_rate: float = 0.0):
        if len(weights) != len(biases) or not weights:
            raise ValueError("need one bias per weight matrix")
        self.weights = [np.array(w, dtype=float) for w in weights]
        self.biases = [np.array(b, dtype=float) for b in biases]
        for k, (W, v) in enumerate(zip(self.weights, self.biases)):
            if W.ndim != 2 or v.shape != (W.shape[0],):
                raise ValueError(f"layer {k}: weight {W.shape} and bias {v.shape} disagree")
            if k and W.shape[1] != self.weights[k - 1].shape[0]:
                raise ValueError(f"layer {k} expects {W.shape[1]} inputs, "
                                 f"previous layer gives {self.weights[k - 1].shape[0]}")
        if not 0.0 <= dropout_rate < 1.0:
            raise ValueError("dropout rate must lie in [0, 1)")
        self.dropout_rate = float(dropout_rate)
        self.training = False

    @classmethod
    def init(cls, widths, dropout_rate: float = 0.0, rng=None, scheme: str = "uniform_fan_in") -> "DeepNet":
        """Random initialisation.

        ``uniform_fan_in`` (default): weights and biases ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``,
        the usual deep-learning framework default for dense layers.
        ``he_uniform``: weights ``U(-sqrt(6/fan_in), sqrt(6/fan_in))`` and zero biases.
        """
        widths = tuple(int(w) for w in widths)
        if len(widths) < 2 or min(widths) < 1:
            raise ValueError(f"invalid layer widths {widths}")
        if scheme not in INIT_SCHEMES:
            raise ValueError(f"unknown init scheme {scheme!r}; choose from {INIT_SCHEMES}")
        rng = np.random.default_rng(rng)
        weights, biases = [], []
        for fan_in, fan_out in zip(widths[:-1], widths[1:]):
            if scheme == "he_uniform":
                bound = np.sqrt(6.0 / fan_in)
                weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
                biases.append(np.zeros(fan_out))
            else:
                bound = 1.0 / np.sqrt(fan_in)
                weights.append(rng.uniform(-bound, bound, size=(fan_out, fan_in)))
                biases.append(rng.uniform(-bound, bound, size=fan_out))
        return cls(weights, biases, dropout_rate)

    @classmethod
    def zeros(cls, widths) -> "DeepNet":
        widths = tuple(widths)
        return cls([np.zeros((o, i)) for i, o in zip(widths[:-1], widths[1:])],
                   [np.zeros(o) for o in widths[1:]])

    @property
    def widths(self) -> tuple:
        return (self.weights[0].shape[1],) + tuple(W.shape[0] for W in self.weights)

    @property
    def depth(self) -> int:
        return len(self.weights) - 1

    def train(self, mode: bool = True) -> "DeepNet":
        self.training = mode
        return self

    def eval(self) -> "DeepNet":
        return self.train(False)

    def params(self) -> list:
        out = []
        for W, v in zip(self.weights, self.biases):
            out += [W, v]
        return out

    def copy(self) -> "DeepNet":
        net = DeepNet([W.copy() for W in self.weights], [v.copy() for v in self.biases],
                      self.dropout_rate)
        net.training = self.training
        return net

    def forward(self, x, rng=None):
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        X = x[None, :] if squeeze else x
        if X.ndim != 2 or X.shape[1] != self.widths[0]:
            raise ValueError(f"network expects inputs of width {self.widths[0]}, got shape {x.shape}")
        drop = self.training and self.dropout_rate > 0
        if drop and rng is None:
            raise ValueError("train-mode dropout needs a random generator")
        keep = 1.0 - self.dropout_rate
        pre, acts, masks = [], [X], []
        h = X
        for W, v in zip(self.weights[:-1], self.biases[:-1]):
            z = h @ W.T + v
            h = np.maximum(z, 0.0)
            if drop:
                m = (rng.random(h.shape) < keep) / keep
                h = h * m
            else:
                m = None
            pre.append(z)
            masks.append(m)
            acts.append(h)
        out = h @ self.weights[-1].T + self.biases[-1]
        tape = Tape(id(self), self.widths, X, pre, acts, masks, squeeze)
        return (out[0] if squeeze else out), tape

    def __call__(self, x):
        """Deterministic (eval-mode) output."""
        was = self.training
        self.training = False
        try:
            return self.forward(x)[0]
        finally:
            self.training = was

    def backward(self, tape: Tape, dout):
        """Gradients of a scalar loss given ``dL/d(output)``.

        Returns ``(grads, dx)`` where ``grads`` follows the order of :meth:`params`.
        """
        if tape.net_id != id(self) or tape.widths != self.widths:
            raise ValueError("tape was recorded by a different network")
        dout = np.asarray(dout, dtype=float)
        n = tape.inputs.shape[0]
        G = dout.reshape(n, self.widths[-1])
        grads = [None] * (2 * len(self.weights))
        for k in range(len(self.weights) - 1, -1, -1):
            a = tape.acts[k]
            grads[2 * k] = G.T @ a
            grads[2 * k + 1] = G.sum(axis=0)
            G = G @ self.weights[k]
            if k > 0:
                if tape.masks[k - 1] is not None:
                    G = G * tape.masks[k - 1]
                G = G * (tape.pre[k - 1] > 0)
        dx = G[0] if tape.squeeze else G
        return grads, dx

    def to_dict(self) -> dict:
        return {"widths": list(self.widths), "dropout_rate": self.dropout_rate,
                "weights": [W.tolist() for W in self.weights],
                "biases": [v.tolist() for v in self.biases]}

    @classmethod
    def from_dict(cls, d: dict) -> "DeepNet":
        return cls(d["weights"], d["biases"], d.get("dropout_rate", 0.0))


def hidden_widths(d: int, layers: int, width: int, out: int = 1) -> tuple:
    return (d,) + (width,) * layers + (out,)
