"""Bidirectional GRU sequence-to-sequence backbone with a hand-written backward pass.

Architecture per frame ``t`` of a window ``x`` of shape ``(B, L, D)``::

    u_t      = tanh(x_t @ W_in + b_in)                     # (B, H)
    hf_t     = GRU_fwd(u_t, hf_{t-1})                       # left to right
    hb_t     = GRU_bwd(u_t, hb_{t+1})                       # right to left
    logits_t = [hf_t, hb_t] @ W_out + b_out                 # (B, K + 1)

Each GRU uses gates ordered ``[update, reset, candidate]``::

    z = sigmoid(u Wx_z + h Wh_z + b_z)
    r = sigmoid(u Wx_r + h Wh_r + b_r)
    n = tanh(u Wx_n + (r * h) Wh_n + b_n)
    h' = (1 - z) * n + z * h
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_softmax, softmax

from .exceptions import DimensionMismatch, StaleCache

PARAM_NAMES = (
    "W_in", "b_in",
    "Wx_f", "Wh_f", "b_f",
    "Wx_b", "Wh_b", "b_b",
    "W_out", "b_out",
)


@dataclass(eq=False)
class ModelParams:
    W_in: np.ndarray
    b_in: np.ndarray
    Wx_f: np.ndarray
    Wh_f: np.ndarray
    b_f: np.ndarray
    Wx_b: np.ndarray
    Wh_b: np.ndarray
    b_b: np.ndarray
    W_out: np.ndarray
    b_out: np.ndarray
    # bumped on every in-place update so stale forward caches are detectable
    version: int = field(default=0, compare=False)

    @property
    def input_dim(self) -> int:
        return self.W_in.shape[0]

    @property
    def hidden(self) -> int:
        return self.W_in.shape[1]

    @property
    def n_classes(self) -> int:
        """Gesture classes K (the output layer has K + 1 columns)."""
        return self.W_out.shape[1] - 1

    def arrays(self) -> dict[str, np.ndarray]:
        return {name: getattr(self, name) for name in PARAM_NAMES}

    def copy(self) -> "ModelParams":
        return ModelParams(**{k: v.copy() for k, v in self.arrays().items()})

    def zeros_like(self) -> "ModelParams":
        return ModelParams(**{k: np.zeros_like(v) for k, v in self.arrays().items()})

    def flat(self) -> np.ndarray:
        return np.concatenate([v.ravel() for v in self.arrays().values()])

    def shapes(self) -> dict[str, tuple[int, ...]]:
        return {k: v.shape for k, v in self.arrays().items()}

    @classmethod
    def from_flat(cls, flat: np.ndarray, shapes: dict[str, tuple[int, ...]]) -> "ModelParams":
        flat = np.asarray(flat, dtype=float)
        out, pos = {}, 0
        for name in PARAM_NAMES:
            shape = tuple(shapes[name])
            size = int(np.prod(shape))
            out[name] = flat[pos : pos + size].reshape(shape).copy()
            pos += size
        if pos != flat.size:
            raise DimensionMismatch(f"flat vector has {flat.size} values, shapes need {pos}")
        return cls(**out)

    def all_finite(self) -> bool:
        return all(np.isfinite(v).all() for v in self.arrays().values())


def init_params(input_dim: int, n_classes: int, hidden: int = 32,
                seed: int = 0, scale: float = 0.08) -> ModelParams:
    """Uniform(-scale, scale) initialisation from a seeded generator."""
    rng = np.random.default_rng(seed)
    H, D, C = hidden, input_dim, n_classes + 1

    def u(*shape):
        return rng.uniform(-scale, scale, size=shape)

    return ModelParams(
        W_in=u(D, H), b_in=np.zeros(H),
        Wx_f=u(H, 3 * H), Wh_f=u(H, 3 * H), b_f=np.zeros(3 * H),
        Wx_b=u(H, 3 * H), Wh_b=u(H, 3 * H), b_b=np.zeros(3 * H),
        W_out=u(2 * H, C), b_out=np.zeros(C),
    )


def swap_directions(params: ModelParams) -> ModelParams:
    """Exchange the two recurrent directions, including their output halves.

    Running the swapped network on a time-reversed window yields the
    time-reversed logits of the original network.
    """
    H = params.hidden
    W_out = np.concatenate([params.W_out[H:], params.W_out[:H]], axis=0)
    return ModelParams(
        W_in=params.W_in.copy(), b_in=params.b_in.copy(),
        Wx_f=params.Wx_b.copy(), Wh_f=params.Wh_b.copy(), b_f=params.b_b.copy(),
        Wx_b=params.Wx_f.copy(), Wh_b=params.Wh_f.copy(), b_b=params.b_f.copy(),
        W_out=W_out, b_out=params.b_out.copy(),
    )


@dataclass
class ForwardCache:
    params_id: int
    params_version: int
    squeeze: bool
    x: np.ndarray
    u: np.ndarray
    fwd: dict
    bwd: dict
    hcat: np.ndarray


def _gru_scan(xg: np.ndarray, Wh: np.ndarray, reverse: bool):
    """Run one GRU direction over precomputed input gates ``xg`` (B, L, 3H)."""
    B, L, H3 = xg.shape
    H = H3 // 3
    Wh_zr, Wh_n = Wh[:, : 2 * H], Wh[:, 2 * H :]
    hs = np.empty((B, L, H))
    h_prev = np.empty((B, L, H))
    zs = np.empty((B, L, H))
    rs = np.empty((B, L, H))
    ns = np.empty((B, L, H))
    h = np.zeros((B, H))
    steps = range(L - 1, -1, -1) if reverse else range(L)
    for t in steps:
        a = xg[:, t]
        zr = expit(a[:, : 2 * H] + h @ Wh_zr)
        z, r = zr[:, :H], zr[:, H:]
        n = np.tanh(a[:, 2 * H :] + (r * h) @ Wh_n)
        h_prev[:, t] = h
        h = (1.0 - z) * n + z * h
        hs[:, t], zs[:, t], rs[:, t], ns[:, t] = h, z, r, n
    return hs, {"h_prev": h_prev, "z": zs, "r": rs, "n": ns}


def _gru_scan_backward(dh_out: np.ndarray, cache: dict, Wh: np.ndarray, reverse: bool):
    """Backpropagate through one GRU direction.

    Returns gradients w.r.t. the input gates (B, L, 3H) and ``Wh``.
    """
    B, L, H = dh_out.shape
    Wh_zr, Wh_n = Wh[:, : 2 * H], Wh[:, 2 * H :]
    d_xg = np.empty((B, L, 3 * H))
    dWh = np.zeros_like(Wh)
    dh_next = np.zeros((B, H))
    steps = range(L) if reverse else range(L - 1, -1, -1)
    hp_all, z_all, r_all, n_all = cache["h_prev"], cache["z"], cache["r"], cache["n"]
    for t in steps:
        dh = dh_out[:, t] + dh_next
        hp, z, r, n = hp_all[:, t], z_all[:, t], r_all[:, t], n_all[:, t]
        dn_pre = dh * (1.0 - z) * (1.0 - n * n)
        dz_pre = dh * (hp - n) * z * (1.0 - z)
        drh = dn_pre @ Wh_n.T
        dr_pre = drh * hp * r * (1.0 - r)
        dzr = np.concatenate([dz_pre, dr_pre], axis=1)
        dWh[:, 2 * H :] += (r * hp).T @ dn_pre
        dWh[:, : 2 * H] += hp.T @ dzr
        dh_next = dh * z + drh * r + dzr @ Wh_zr.T
        d_xg[:, t, : 2 * H] = dzr
        d_xg[:, t, 2 * H :] = dn_pre
    return d_xg, dWh


def forward(params: ModelParams, window: np.ndarray):
    """Per-frame logits for one window ``(L, D)`` or a batch ``(B, L, D)``.

    Returns:
        ``(logits, cache)``; logits have the same leading shape as ``window``
        with ``K + 1`` columns.

    Raises:
        DimensionMismatch: the feature dimension differs from the parameters.
    """
    x = np.asarray(window, dtype=float)
    squeeze = x.ndim == 2
    if squeeze:
        x = x[None]
    if x.ndim != 3 or x.shape[2] != params.input_dim:
        raise DimensionMismatch(
            f"window has shape {np.shape(window)}, model expects D={params.input_dim}")
    u = np.tanh(x @ params.W_in + params.b_in)
    hf, cf = _gru_scan(u @ params.Wx_f + params.b_f, params.Wh_f, reverse=False)
    hb, cb = _gru_scan(u @ params.Wx_b + params.b_b, params.Wh_b, reverse=True)
    hcat = np.concatenate([hf, hb], axis=2)
    logits = hcat @ params.W_out + params.b_out
    cache = ForwardCache(id(params), params.version, squeeze, x, u, cf, cb, hcat)
    return (logits[0] if squeeze else logits), cache


def backward(params: ModelParams, cache: ForwardCache, d_logits: np.ndarray) -> ModelParams:
    """Gradient over every parameter given the upstream gradient on the logits.

    Raises:
        StaleCache: ``cache`` came from different or since-updated parameters.
    """
    if cache.params_id != id(params) or cache.params_version != params.version:
        raise StaleCache("forward cache does not match the current parameters")
    g = np.asarray(d_logits, dtype=float)
    if cache.squeeze:
        g = g[None]
    H = params.hidden
    B, L, C = g.shape
    grads = params.zeros_like()

    grads.W_out = cache.hcat.reshape(-1, 2 * H).T @ g.reshape(-1, C)
    grads.b_out = g.sum(axis=(0, 1))
    dh = g @ params.W_out.T
    dxg_f, grads.Wh_f = _gru_scan_backward(dh[..., :H], cache.fwd, params.Wh_f, reverse=False)
    dxg_b, grads.Wh_b = _gru_scan_backward(dh[..., H:], cache.bwd, params.Wh_b, reverse=True)

    u_flat = cache.u.reshape(-1, H)
    grads.Wx_f = u_flat.T @ dxg_f.reshape(-1, 3 * H)
    grads.b_f = dxg_f.sum(axis=(0, 1))
    grads.Wx_b = u_flat.T @ dxg_b.reshape(-1, 3 * H)
    grads.b_b = dxg_b.sum(axis=(0, 1))

    du = dxg_f @ params.Wx_f.T + dxg_b @ params.Wx_b.T
    du_pre = du * (1.0 - cache.u * cache.u)
    grads.W_in = cache.x.reshape(-1, params.input_dim).T @ du_pre.reshape(-1, H)
    grads.b_in = du_pre.sum(axis=(0, 1))
    return grads


def predict_proba(params: ModelParams, window: np.ndarray) -> np.ndarray:
    logits, _ = forward(params, window)
    return softmax(logits, axis=-1)


def ce_loss_and_grad(logits: np.ndarray, framewise_targets) -> tuple[float, np.ndarray]:
    """Mean per-frame cross-entropy and its gradient w.r.t. ``(L, C)`` logits.

    The gradient is ``(softmax - onehot) / L``.
    """
    logits = np.asarray(logits, dtype=float)
    targets = np.asarray(framewise_targets, dtype=np.int64)
    if logits.ndim != 2 or targets.shape != (logits.shape[0],):
        raise DimensionMismatch(
            f"need one target per frame: logits {logits.shape}, targets {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise DimensionMismatch("target class outside the logit columns")
    L = logits.shape[0]
    logp = log_softmax(logits, axis=1)
    rows = np.arange(L)
    loss = -logp[rows, targets].mean()
    grad = np.exp(logp)
    grad[rows, targets] -= 1.0
    return float(loss), grad / L


class Adam:
    """Adam with bias correction, updating a ModelParams in place."""

    def __init__(self, params: ModelParams, lr: float = 1e-4,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = params.zeros_like()
        self.v = params.zeros_like()
        self.t = 0

    def step(self, params: ModelParams, grads: ModelParams) -> None:
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        corr1 = 1.0 - b1 ** self.t
        corr2 = 1.0 - b2 ** self.t
        for name in PARAM_NAMES:
            g = getattr(grads, name)
            m = getattr(self.m, name)
            v = getattr(self.v, name)
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p = getattr(params, name)
            p -= self.lr * (m / corr1) / (np.sqrt(v / corr2) + self.eps)
        params.version += 1
