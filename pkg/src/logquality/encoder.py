"""Small transformer encoder classifier with hand-written forward and backward passes.

Inputs are index sequences that start with the summary token [LMT] and are
right-padded with [PD]. Pad positions are masked out of attention, so the
[LMT] output depends only on real tokens. The [LMT] vector goes through a
final layer norm and a linear head followed by softmax.

All array code is dtype-generic: training runs in float32, gradient checks in
float64 via :meth:`EncoderModel.astype`.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

LMT, PD, UNK = "[LMT]", "[PD]", "[UNK]"
RESERVED = (LMT, PD, UNK)
LMT_ID, PD_ID, UNK_ID = 0, 1, 2

FFN_MULT = 4
LN_EPS = 1e-5
# uniform(-a, a) with a = sqrt(INIT_GAIN / fan_in) gives variance 1 / fan_in
INIT_GAIN = 3.0

CHECKPOINT_MAGIC = b"QLOGCKPT"
CHECKPOINT_VERSION = 1


class NumericalError(FloatingPointError):
    """A forward or backward pass produced NaN or infinity."""

    def __init__(self, layer: str):
        super().__init__(f"non-finite values in {layer}")
        self.layer = layer


class CheckpointError(ValueError):
    pass


@dataclass(frozen=True)
class Vocabulary:
    """Token list in index order; the reserved tokens occupy indices 0, 1, 2."""

    tokens: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "tokens", tuple(self.tokens))
        if self.tokens[:3] != RESERVED:
            raise ValueError(f"vocabulary must start with {RESERVED}")
        if len(set(self.tokens)) != len(self.tokens):
            raise ValueError("vocabulary has duplicate tokens")
        object.__setattr__(self, "_index", {t: i for i, t in enumerate(self.tokens)})

    @classmethod
    def from_tokens(cls, tokens: Iterable[str]) -> "Vocabulary":
        return cls(RESERVED + tuple(tokens))

    @property
    def size(self) -> int:
        return len(self.tokens)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self._index

    def index(self, token: str) -> int:
        return self._index.get(token, UNK_ID)


@dataclass(frozen=True)
class ModelConfig:
    max_len: int = 50
    d: int = 16
    heads: int = 2
    layers: int = 2
    classes: int = 3
    seed: int = 0

    def __post_init__(self):
        for name in ("max_len", "d", "heads", "layers"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.max_len < 2:
            raise ValueError("max_len must be at least 2")
        if self.d % self.heads:
            raise ValueError(f"d={self.d} is not divisible by heads={self.heads}")
        if self.classes not in (2, 3):
            raise ValueError("classes must be 2 or 3")


def encode_input(tokens: Iterable[str], vocab: Vocabulary, max_len: int) -> np.ndarray:
    """[LMT] + token indices (unknown -> [UNK]), truncated or [PD]-padded to ``max_len``."""
    ids = [LMT_ID] + [vocab.index(t) for t in tokens]
    ids = ids[:max_len]
    ids += [PD_ID] * (max_len - len(ids))
    return np.asarray(ids, dtype=np.int64)


def encode_batch(sequences: Iterable[Iterable[str]], vocab: Vocabulary, max_len: int) -> np.ndarray:
    rows = [encode_input(s, vocab, max_len) for s in sequences]
    if not rows:
        return np.zeros((0, max_len), dtype=np.int64)
    return np.stack(rows)


def param_shapes(cfg: ModelConfig, vocab_size: int) -> dict[str, tuple[int, ...]]:
    """Parameter names and shapes in canonical (checkpoint) order."""
    d, f = cfg.d, FFN_MULT * cfg.d
    shapes = {"tok_emb": (vocab_size, d), "pos_emb": (cfg.max_len, d)}
    for layer in range(cfg.layers):
        p = f"layer{layer}."
        shapes.update({
            p + "ln1.g": (d,), p + "ln1.b": (d,),
            p + "attn.Wq": (d, d), p + "attn.bq": (d,),
            p + "attn.Wk": (d, d), p + "attn.bk": (d,),
            p + "attn.Wv": (d, d), p + "attn.bv": (d,),
            p + "attn.Wo": (d, d), p + "attn.bo": (d,),
            p + "ln2.g": (d,), p + "ln2.b": (d,),
            p + "ffn.W1": (d, f), p + "ffn.b1": (f,),
            p + "ffn.W2": (f, d), p + "ffn.b2": (d,),
        })
    shapes.update({"lnf.g": (d,), "lnf.b": (d,), "head.W": (cfg.classes, d), "head.b": (cfg.classes,)})
    return shapes


def init_params(cfg: ModelConfig, vocab_size: int, dtype=np.float32) -> dict[str, np.ndarray]:
    """Fan-in scaled symmetric-uniform weights, unit layer-norm gains, zero biases."""
    rng = np.random.default_rng(cfg.seed)
    params = {}
    for name, shape in param_shapes(cfg, vocab_size).items():
        leaf = name.rsplit(".", 1)[-1]
        if leaf == "g":
            arr = np.ones(shape)
        elif leaf.startswith("b"):
            arr = np.zeros(shape)
        else:
            fan_in = shape[0] if leaf in ("W1", "W2", "Wq", "Wk", "Wv", "Wo") else shape[-1]
            a = np.sqrt(INIT_GAIN / fan_in)
            arr = rng.uniform(-a, a, size=shape)
        params[name] = arr.astype(dtype)
    return params


@dataclass
class EncoderModel:
    config: ModelConfig
    vocab: Vocabulary
    params: dict[str, np.ndarray]

    @classmethod
    def initialize(cls, config: ModelConfig, vocab: Vocabulary, dtype=np.float32) -> "EncoderModel":
        return cls(config, vocab, init_params(config, vocab.size, dtype))

    @property
    def dtype(self):
        return self.params["tok_emb"].dtype

    def astype(self, dtype) -> "EncoderModel":
        return EncoderModel(self.config, self.vocab, {k: v.astype(dtype) for k, v in self.params.items()})

    def copy(self) -> "EncoderModel":
        return self.astype(self.dtype)

    def encode(self, tokens: Iterable[str]) -> np.ndarray:
        return encode_input(tokens, self.vocab, self.config.max_len)

    def scores(self, indices, batch_size: int = 1024) -> np.ndarray:
        """Class scores for one index sequence (shape ``(C,)``) or a batch (``(B, C)``)."""
        idx = np.asarray(indices)
        if idx.ndim == 1:
            return forward(self, idx[None])[0]
        if len(idx) == 0:
            return np.zeros((0, self.config.classes), dtype=self.dtype)
        return np.concatenate([forward(self, idx[i:i + batch_size]) for i in range(0, len(idx), batch_size)])


# ---------------------------------------------------------------------------
# forward / backward


def _check(x: np.ndarray, layer: str) -> None:
    if not np.all(np.isfinite(x)):
        raise NumericalError(layer)


def _layernorm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(-1, keepdims=True) + LN_EPS)
    xh = xc * inv
    return xh * g + b, (xh, inv)


def _layernorm_back(dy, g, cache):
    xh, inv = cache
    d = dy.shape[-1]
    dg = (dy * xh).reshape(-1, d).sum(0)
    db = dy.reshape(-1, d).sum(0)
    dxh = dy * g
    dx = inv * (dxh - dxh.mean(-1, keepdims=True) - xh * (dxh * xh).mean(-1, keepdims=True))
    return dx, dg, db


def _softmax(z):
    z = z - z.max(-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(-1, keepdims=True)


def _trim(idx: np.ndarray) -> np.ndarray:
    """Drop trailing columns that are [PD] in every row (they are masked anyway)."""
    nonpad = np.nonzero((idx != PD_ID).any(0))[0]
    width = int(nonpad[-1]) + 1 if len(nonpad) else 1
    return idx[:, :width]


def _forward(model: EncoderModel, idx: np.ndarray, keep: bool):
    cfg, p = model.config, model.params
    idx = np.asarray(idx)
    if idx.ndim != 2 or idx.shape[1] != cfg.max_len:
        raise ValueError(f"expected index batch of shape (B, {cfg.max_len}), got {idx.shape}")
    if len(idx) and (idx.min() < 0 or idx.max() >= model.vocab.size):
        raise ValueError("token index outside the vocabulary")
    idx = _trim(idx)
    B, T = idx.shape
    H, dh = cfg.heads, cfg.d // cfg.heads
    scale = 1.0 / np.sqrt(dh)
    dtype = model.dtype
    mask = np.where(idx == PD_ID, -np.inf, 0.0).astype(dtype)[:, None, None, :]

    x = p["tok_emb"][idx] + p["pos_emb"][:T]
    _check(x, "embedding")
    caches = []

    def heads(t):
        return t.reshape(B, T, H, dh).transpose(0, 2, 1, 3)

    for layer in range(cfg.layers):
        pre = f"layer{layer}."
        h, ln1 = _layernorm(x, p[pre + "ln1.g"], p[pre + "ln1.b"])
        q = heads(h @ p[pre + "attn.Wq"] + p[pre + "attn.bq"])
        k = heads(h @ p[pre + "attn.Wk"] + p[pre + "attn.bk"])
        v = heads(h @ p[pre + "attn.Wv"] + p[pre + "attn.bv"])
        a = _softmax(q @ k.transpose(0, 1, 3, 2) * scale + mask)
        o = (a @ v).transpose(0, 2, 1, 3).reshape(B, T, cfg.d)
        x = x + o @ p[pre + "attn.Wo"] + p[pre + "attn.bo"]
        _check(x, pre + "attn")
        h2, ln2 = _layernorm(x, p[pre + "ln2.g"], p[pre + "ln2.b"])
        u = h2 @ p[pre + "ffn.W1"] + p[pre + "ffn.b1"]
        r = np.maximum(u, 0)
        x = x + r @ p[pre + "ffn.W2"] + p[pre + "ffn.b2"]
        _check(x, pre + "ffn")
        if keep:
            caches.append((h, ln1, q, k, v, a, o, h2, ln2, u, r))

    z, lnf = _layernorm(x[:, 0], p["lnf.g"], p["lnf.b"])
    logits = z @ p["head.W"].T + p["head.b"]
    _check(logits, "head")
    probs = _softmax(logits)
    cache = (idx, caches, z, lnf, scale) if keep else None
    return probs, cache


def forward(model: EncoderModel, indices) -> np.ndarray:
    """Softmax class scores for a batch of index sequences, shape ``(B, classes)``."""
    return _forward(model, indices, keep=False)[0]


def loss_and_gradients(model: EncoderModel, indices, targets, weights=None) -> tuple[float, dict]:
    """Mean (optionally sample-weighted) cross-entropy and its gradient for every parameter."""
    cfg, p = model.config, model.params
    indices = np.asarray(indices)
    if indices.ndim == 1:
        indices = indices[None]
    targets = np.atleast_1d(np.asarray(targets))
    if targets.shape != (len(indices),):
        raise ValueError("one target per sequence required")
    if targets.min() < 0 or targets.max() >= cfg.classes:
        raise ValueError(f"targets must lie in [0, {cfg.classes})")
    probs, (idx, caches, z, lnf, scale) = _forward(model, indices, keep=True)
    B, T = idx.shape
    H, dh = cfg.heads, cfg.d // cfg.heads
    dtype = model.dtype
    w = np.ones(B, dtype=dtype) if weights is None else np.asarray(weights, dtype=dtype)
    w = w / w.sum()

    picked = probs[np.arange(B), targets]
    loss = float(-(w * np.log(np.maximum(picked, np.finfo(dtype).tiny))).sum())
    if not np.isfinite(loss):
        raise NumericalError("loss")

    grads = {}
    dlogits = probs.copy()
    dlogits[np.arange(B), targets] -= 1
    dlogits *= w[:, None]
    grads["head.W"] = dlogits.T @ z
    grads["head.b"] = dlogits.sum(0)
    dx0, grads["lnf.g"], grads["lnf.b"] = _layernorm_back(dlogits @ p["head.W"], p["lnf.g"], lnf)
    dx = np.zeros((B, T, cfg.d), dtype=dtype)
    dx[:, 0] = dx0

    def merge(t):
        return t.transpose(0, 2, 1, 3).reshape(B, T, cfg.d)

    for layer in reversed(range(cfg.layers)):
        pre = f"layer{layer}."
        h, ln1, q, k, v, a, o, h2, ln2, u, r = caches[layer]
        # feed-forward block
        dy = dx.reshape(-1, cfg.d)
        grads[pre + "ffn.W2"] = r.reshape(-1, r.shape[-1]).T @ dy
        grads[pre + "ffn.b2"] = dy.sum(0)
        du = (dx @ p[pre + "ffn.W2"].T) * (u > 0)
        grads[pre + "ffn.W1"] = h2.reshape(-1, cfg.d).T @ du.reshape(-1, du.shape[-1])
        grads[pre + "ffn.b1"] = du.reshape(-1, du.shape[-1]).sum(0)
        dh2, grads[pre + "ln2.g"], grads[pre + "ln2.b"] = _layernorm_back(du @ p[pre + "ffn.W1"].T, p[pre + "ln2.g"], ln2)
        dx = dx + dh2
        # attention block
        dy = dx.reshape(-1, cfg.d)
        grads[pre + "attn.Wo"] = o.reshape(-1, cfg.d).T @ dy
        grads[pre + "attn.bo"] = dy.sum(0)
        do = (dx @ p[pre + "attn.Wo"].T).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        da = do @ v.transpose(0, 1, 3, 2)
        dv = merge(a.transpose(0, 1, 3, 2) @ do)
        ds = a * (da - (da * a).sum(-1, keepdims=True)) * scale
        dq = merge(ds @ k)
        dk = merge(ds.transpose(0, 1, 3, 2) @ q)
        hf = h.reshape(-1, cfg.d)
        dnorm = np.zeros_like(dx)
        for name, dt in (("q", dq), ("k", dk), ("v", dv)):
            grads[pre + f"attn.W{name}"] = hf.T @ dt.reshape(-1, cfg.d)
            grads[pre + f"attn.b{name}"] = dt.reshape(-1, cfg.d).sum(0)
            dnorm += dt @ p[pre + f"attn.W{name}"].T
        dh1, grads[pre + "ln1.g"], grads[pre + "ln1.b"] = _layernorm_back(dnorm, p[pre + "ln1.g"], ln1)
        dx = dx + dh1
        _check(dx, pre + "backward")

    dtok = np.zeros_like(p["tok_emb"])
    np.add.at(dtok, idx, dx)
    dpos = np.zeros_like(p["pos_emb"])
    dpos[:T] = dx.sum(0)
    grads["tok_emb"], grads["pos_emb"] = dtok, dpos
    return loss, {name: grads[name].astype(dtype, copy=False) for name in p}


def backward(model: EncoderModel, indices, targets, weights=None) -> dict[str, np.ndarray]:
    """Gradients of the cross-entropy loss for every parameter group."""
    return loss_and_gradients(model, indices, targets, weights)[1]


def loss(model: EncoderModel, indices, targets, weights=None) -> float:
    indices = np.asarray(indices)
    if indices.ndim == 1:
        indices = indices[None]
    targets = np.atleast_1d(np.asarray(targets))
    probs = forward(model, indices)
    w = np.ones(len(targets)) if weights is None else np.asarray(weights, dtype=float)
    w = w / w.sum()
    return float(-(w * np.log(probs[np.arange(len(targets)), targets])).sum())


# ---------------------------------------------------------------------------
# optimizer


@dataclass
class AdamState:
    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Mapping[str, np.ndarray]) -> "AdamState":
        return cls({k: np.zeros_like(a) for k, a in params.items()},
                   {k: np.zeros_like(a) for k, a in params.items()})


def adam_step(params: dict[str, np.ndarray], grads: Mapping[str, np.ndarray], state: AdamState,
              lr: float = 1e-4, beta1: float = 0.9, beta2: float = 0.99, eps: float = 1e-8):
    """One bias-corrected Adam update, applied to ``params`` in place.

    Returns ``(params, state)``.
    """
    if set(grads) != set(params):
        raise ValueError("gradient names do not match parameters")
    for name, g in grads.items():
        if g.shape != params[name].shape or state.m[name].shape != params[name].shape:
            raise ValueError(f"shape mismatch for {name}: param {params[name].shape}, grad {g.shape}")
    state.t += 1
    c1 = 1 - beta1 ** state.t
    c2 = 1 - beta2 ** state.t
    for name, g in grads.items():
        m = state.m[name]
        v = state.v[name]
        m *= beta1
        m += (1 - beta1) * g
        v *= beta2
        v += (1 - beta2) * g * g
        params[name] -= (lr * (m / c1) / (np.sqrt(v / c2) + eps)).astype(params[name].dtype)
    return params, state


# ---------------------------------------------------------------------------
# checkpoints
#
# layout: magic (8 bytes) | version (uint32 LE) | header length (uint64 LE)
#         | UTF-8 JSON header | float32 LE payloads in manifest order


def save_checkpoint(model: EncoderModel, path, extra: Mapping | None = None) -> None:
    manifest, offset, chunks = [], 0, []
    for name, shape in param_shapes(model.config, model.vocab.size).items():
        arr = np.ascontiguousarray(model.params[name], dtype="<f4")
        if arr.shape != shape:
            raise CheckpointError(f"parameter {name} has shape {arr.shape}, expected {shape}")
        manifest.append({"name": name, "shape": list(shape), "offset": offset, "nbytes": arr.nbytes})
        chunks.append(arr.tobytes())
        offset += arr.nbytes
    header = {
        "format_version": CHECKPOINT_VERSION,
        "config": asdict(model.config),
        "vocab": list(model.vocab.tokens),
        "manifest": manifest,
        "extra": dict(extra or {}),
    }
    blob = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC + struct.pack("<IQ", CHECKPOINT_VERSION, len(blob)) + blob)
        for chunk in chunks:
            fh.write(chunk)


def load_checkpoint(path) -> tuple[EncoderModel, dict]:
    """Read a checkpoint; returns the model (float32 parameters) and the ``extra`` header dict."""
    data = Path(path).read_bytes()
    prefix = len(CHECKPOINT_MAGIC) + 12
    if len(data) < prefix or not data.startswith(CHECKPOINT_MAGIC):
        raise CheckpointError(f"invalid checkpoint {path}: bad magic bytes")
    version, hlen = struct.unpack("<IQ", data[len(CHECKPOINT_MAGIC):prefix])
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"invalid checkpoint {path}: unsupported version {version}")
    try:
        header = json.loads(data[prefix:prefix + hlen].decode("utf-8"))
        config = ModelConfig(**header["config"])
        vocab = Vocabulary(header["vocab"])
        manifest = header["manifest"]
    except (ValueError, KeyError, TypeError) as exc:
        raise CheckpointError(f"invalid checkpoint {path}: corrupted header ({exc})") from None
    payload = memoryview(data)[prefix + hlen:]
    expected = param_shapes(config, vocab.size)
    if [m["name"] for m in manifest] != list(expected):
        raise CheckpointError(f"invalid checkpoint {path}: manifest does not match the configuration")
    params, offset = {}, 0
    for entry in manifest:
        shape = tuple(entry["shape"])
        nbytes = 4 * int(np.prod(shape))
        if shape != expected[entry["name"]] or entry["offset"] != offset or entry["nbytes"] != nbytes:
            raise CheckpointError(f"invalid checkpoint {path}: inconsistent entry for {entry['name']}")
        if offset + nbytes > len(payload):
            raise CheckpointError(f"invalid checkpoint {path}: truncated payload at {entry['name']}")
        params[entry["name"]] = np.frombuffer(payload[offset:offset + nbytes], dtype="<f4").reshape(shape).astype(np.float32)
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"invalid checkpoint {path}: {len(payload) - offset} trailing bytes")
    return EncoderModel(config, vocab, params), header.get("extra", {})
