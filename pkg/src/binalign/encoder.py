"""A small pre-norm transformer cross-encoder with hand-written backprop.

The source sentence (with the query word wrapped in MARK_OPEN/MARK_CLOSE) and
the target sentence are concatenated as ``[CLS] src [SEP] tgt [SEP]`` and
encoded jointly; a linear head maps every final hidden state to one logit.
Parameters are a plain ``dict`` of numpy arrays in declaration order.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .corpus import (
    CLS,
    MARK_CLOSE,
    MARK_OPEN,
    PAD,
    SEP,
    CorpusError,
    SubwordVocabulary,
    WordTokenMap,
)
from .optim import AdamState, adam_step  # noqa: F401  (optimizer lives beside the model)

LN_EPS = 1e-5
LOG_CLAMP = -30.0
_GELU_C = math.sqrt(2.0 / math.pi)


class EncoderError(ValueError):
    pass


class SequenceTooLong(EncoderError):
    pass


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    d_model: int = 64
    n_heads: int = 4
    n_layers: int = 2
    ffn_dim: int = 128
    max_len: int = 256
    dropout_rate: float = 0.0

    def __post_init__(self):
        for name in ("vocab_size", "d_model", "n_heads", "n_layers", "ffn_dim"):
            if getattr(self, name) <= 0:
                raise EncoderError(f"{name} must be positive")
        if self.d_model % self.n_heads:
            raise EncoderError("d_model must be divisible by n_heads")
        if self.max_len < 8:
            raise EncoderError("max_len must be at least 8")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise EncoderError("dropout_rate must be in [0, 1)")


def param_shapes(cfg: ModelConfig) -> list[tuple[str, tuple[int, ...]]]:
    d, f = cfg.d_model, cfg.ffn_dim
    shapes = [("tok_emb", (cfg.vocab_size, d)), ("seg_emb", (2, d))]
    for l in range(cfg.n_layers):
        shapes += [
            (f"l{l}.ln1_g", (d,)),
            (f"l{l}.ln1_b", (d,)),
            (f"l{l}.wq", (d, d)),
            (f"l{l}.wk", (d, d)),
            (f"l{l}.wv", (d, d)),
            (f"l{l}.wo", (d, d)),
            (f"l{l}.ln2_g", (d,)),
            (f"l{l}.ln2_b", (d,)),
            (f"l{l}.w1", (d, f)),
            (f"l{l}.b1", (f,)),
            (f"l{l}.w2", (f, d)),
            (f"l{l}.b2", (d,)),
        ]
    shapes += [("lnf_g", (d,)), ("lnf_b", (d,)), ("w_head", (d,)), ("b_head", ())]
    return shapes


def init_params(cfg: ModelConfig, seed: int, dtype=np.float32) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases, unit layer-norm scales."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg):
        base = name.rsplit(".", 1)[-1]
        if base.endswith("_g"):
            arr = np.ones(shape)
        elif len(shape) == 0 or base.startswith("b") or base.endswith("_b"):
            arr = np.zeros(shape)
        else:
            fan_in, fan_out = shape if len(shape) == 2 else (shape[0], 1)
            limit = math.sqrt(6.0 / (fan_in + fan_out))
            arr = rng.uniform(-limit, limit, size=shape)
        params[name] = arr.astype(dtype)
    return params


def cast_params(params, dtype) -> dict[str, np.ndarray]:
    return {k: np.asarray(v, dtype=dtype).copy() for k, v in params.items()}


# ---------------------------------------------------------------------------
# input construction


@dataclass(frozen=True)
class EncodedInput:
    ids: np.ndarray
    segments: np.ndarray
    target_positions: np.ndarray

    def __len__(self):
        return len(self.ids)


def mark_span(src_ids: Sequence[int], word: int, word_map: WordTokenMap) -> list[int]:
    """Wrap the tokens of ``word`` in MARK_OPEN / MARK_CLOSE."""
    if not 0 <= word < len(word_map.spans):
        raise EncoderError(f"word index {word} out of range for {len(word_map.spans)} words")
    start, end = word_map.spans[word]
    src_ids = list(src_ids)
    return src_ids[:start] + [MARK_OPEN] + src_ids[start:end] + [MARK_CLOSE] + src_ids[end:]


def strip_marks(ids: Sequence[int]) -> list[int]:
    return [i for i in ids if i not in (MARK_OPEN, MARK_CLOSE)]


def encode_input(
    marked_ids: Sequence[int],
    word: int,
    marked_map: WordTokenMap,
    other_ids: Sequence[int],
    max_len: int,
) -> EncodedInput:
    """Build ``[CLS] marked-side [SEP] other-side [SEP]`` for one query word."""
    src = mark_span(marked_ids, word, marked_map)
    n_src = len(src) + 2
    ids = [CLS] + src + [SEP] + list(other_ids) + [SEP]
    if len(ids) > max_len:
        raise SequenceTooLong(f"encoded length {len(ids)} exceeds max_len {max_len}")
    segments = np.zeros(len(ids), dtype=np.int64)
    segments[n_src:] = 1
    targets = np.arange(n_src, n_src + len(other_ids), dtype=np.int64)
    return EncodedInput(np.asarray(ids, dtype=np.int64), segments, targets)


def sinusoid_positions(n: int, d: int) -> np.ndarray:
    pos = np.arange(n)[:, None]
    i = np.arange(d)[None, :]
    angle = pos / np.power(10000.0, (2 * (i // 2)) / d)
    return np.where(i % 2 == 0, np.sin(angle), np.cos(angle))


_POS_CACHE: dict[tuple[int, int], np.ndarray] = {}


def _positions(n: int, d: int, dtype) -> np.ndarray:
    key = (n, d)
    if key not in _POS_CACHE:
        _POS_CACHE[key] = sinusoid_positions(n, d)
    return _POS_CACHE[key][:n].astype(dtype, copy=False)


# ---------------------------------------------------------------------------
# forward / backward


def _pad_batch(batch: Sequence[EncodedInput], max_len: int):
    for inp in batch:
        if len(inp) > max_len:
            raise SequenceTooLong(f"input length {len(inp)} exceeds max_len {max_len}")
    T = max(len(inp) for inp in batch)
    ids = np.full((len(batch), T), PAD, dtype=np.int64)
    seg = np.zeros((len(batch), T), dtype=np.int64)
    for b, inp in enumerate(batch):
        ids[b, : len(inp)] = inp.ids
        seg[b, : len(inp)] = inp.segments
    return ids, seg


def _layer_norm(x, g, b):
    mu = x.mean(-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(-1, keepdims=True)
    rstd = 1.0 / np.sqrt(var + LN_EPS)
    xhat = xc * rstd
    return xhat * g + b, (xhat, rstd)


def _layer_norm_back(dy, g, cache):
    xhat, rstd = cache
    dg = (dy * xhat).reshape(-1, xhat.shape[-1]).sum(0)
    db = dy.reshape(-1, dy.shape[-1]).sum(0)
    dxhat = dy * g
    dx = rstd * (
        dxhat
        - dxhat.mean(-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(-1, keepdims=True)
    )
    return dx, dg, db


def _gelu(u):
    t = np.tanh(_GELU_C * (u + 0.044715 * u**3))
    return 0.5 * u * (1.0 + t), t


def _gelu_back(du_out, u, t):
    dt = (1.0 - t * t) * _GELU_C * (1.0 + 3 * 0.044715 * u * u)
    return du_out * (0.5 * (1.0 + t) + 0.5 * u * dt)


def _dropout_mask(rng, shape, rate, dtype):
    if rng is None or rate == 0.0:
        return None
    keep = rng.random(shape) >= rate
    return keep.astype(dtype) / (1.0 - rate)


def _forward(ids, seg, params, cfg: ModelConfig, rng=None):
    B, T = ids.shape
    d, H = cfg.d_model, cfg.n_heads
    dh = d // H
    scale = 1.0 / math.sqrt(dh)
    dtype = params["tok_emb"].dtype
    key_bias = np.where(ids == PAD, -np.inf, 0.0).astype(dtype)[:, None, None, :]

    x = params["tok_emb"][ids] + params["seg_emb"][seg] + _positions(T, d, dtype)
    caches = []
    for l in range(cfg.n_layers):
        p = lambda n: params[f"l{l}.{n}"]  # noqa: E731
        h, ln1 = _layer_norm(x, p("ln1_g"), p("ln1_b"))
        q = (h @ p("wq")).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        k = (h @ p("wk")).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        v = (h @ p("wv")).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        s = (q @ k.transpose(0, 1, 3, 2)) * scale + key_bias
        s = s - s.max(-1, keepdims=True)
        a = np.exp(s)
        a /= a.sum(-1, keepdims=True)
        o = (a @ v).transpose(0, 2, 1, 3).reshape(B, T, d)
        attn = o @ p("wo")
        m1 = _dropout_mask(rng, attn.shape, cfg.dropout_rate, dtype)
        if m1 is not None:
            attn = attn * m1
        x = x + attn
        h2, ln2 = _layer_norm(x, p("ln2_g"), p("ln2_b"))
        u = h2 @ p("w1") + p("b1")
        gu, t = _gelu(u)
        ffn = gu @ p("w2") + p("b2")
        m2 = _dropout_mask(rng, ffn.shape, cfg.dropout_rate, dtype)
        if m2 is not None:
            ffn = ffn * m2
        x = x + ffn
        caches.append((h, ln1, q, k, v, a, o, m1, h2, ln2, u, t, gu, m2))
    hf, lnf = _layer_norm(x, params["lnf_g"], params["lnf_b"])
    z = hf @ params["w_head"] + params["b_head"]
    return z, (ids, seg, caches, hf, lnf)


def _backward(dz, cache, params, cfg: ModelConfig):
    ids, seg, caches, hf, lnf = cache
    B, T = ids.shape
    d, H = cfg.d_model, cfg.n_heads
    dh = d // H
    scale = 1.0 / math.sqrt(dh)
    grads = {k: np.zeros_like(v) for k, v in params.items()}

    grads["b_head"] = np.asarray(dz.sum(), dtype=params["b_head"].dtype)
    grads["w_head"] = np.einsum("bt,btd->d", dz, hf)
    dhf = dz[..., None] * params["w_head"]
    dx, grads["lnf_g"], grads["lnf_b"] = _layer_norm_back(dhf, params["lnf_g"], lnf)

    for l in reversed(range(cfg.n_layers)):
        pre = f"l{l}."
        p = lambda n: params[pre + n]  # noqa: E731
        h, ln1, q, k, v, a, o, m1, h2, ln2, u, t, gu, m2 = caches[l]

        dffn = dx if m2 is None else dx * m2
        dffn2 = dffn.reshape(-1, d)
        grads[pre + "b2"] = dffn2.sum(0)
        grads[pre + "w2"] = gu.reshape(-1, cfg.ffn_dim).T @ dffn2
        dgu = dffn @ p("w2").T
        du = _gelu_back(dgu, u, t)
        du2 = du.reshape(-1, cfg.ffn_dim)
        grads[pre + "b1"] = du2.sum(0)
        grads[pre + "w1"] = h2.reshape(-1, d).T @ du2
        dh2 = du @ p("w1").T
        dxl, grads[pre + "ln2_g"], grads[pre + "ln2_b"] = _layer_norm_back(dh2, p("ln2_g"), ln2)
        dx = dx + dxl

        dattn = dx if m1 is None else dx * m1
        grads[pre + "wo"] = o.reshape(-1, d).T @ dattn.reshape(-1, d)
        do = (dattn @ p("wo").T).reshape(B, T, H, dh).transpose(0, 2, 1, 3)
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = a * (da - (da * a).sum(-1, keepdims=True))
        dq = (ds @ k) * scale
        dk = (ds.transpose(0, 1, 3, 2) @ q) * scale
        merge = lambda t_: t_.transpose(0, 2, 1, 3).reshape(-1, d)  # noqa: E731
        dq2, dk2, dv2 = merge(dq), merge(dk), merge(dv)
        h2d = h.reshape(-1, d)
        grads[pre + "wq"] = h2d.T @ dq2
        grads[pre + "wk"] = h2d.T @ dk2
        grads[pre + "wv"] = h2d.T @ dv2
        dh_ = (dq2 @ p("wq").T + dk2 @ p("wk").T + dv2 @ p("wv").T).reshape(B, T, d)
        dxl, grads[pre + "ln1_g"], grads[pre + "ln1_b"] = _layer_norm_back(dh_, p("ln1_g"), ln1)
        dx = dx + dxl

    np.add.at(grads["tok_emb"], ids.ravel(), dx.reshape(-1, d))
    np.add.at(grads["seg_emb"], seg.ravel(), dx.reshape(-1, d))
    return grads


def forward(batch, params, cfg: ModelConfig) -> list[np.ndarray] | np.ndarray:
    """Logits over target tokens.

    ``batch`` is a single EncodedInput (returns one vector) or a sequence of
    them (returns a list). Inputs longer than ``cfg.max_len`` are rejected.
    """
    single = isinstance(batch, EncodedInput)
    items = [batch] if single else list(batch)
    if not items:
        return []
    ids, seg = _pad_batch(items, cfg.max_len)
    z, _ = _forward(ids, seg, params, cfg)
    out = [z[b, inp.target_positions] for b, inp in enumerate(items)]
    return out[0] if single else out


def _log_sigmoid(z):
    return -np.logaddexp(0.0, -z)


def bce_terms(z, y):
    """Per-entry clamped binary cross-entropy and its derivative in ``z``."""
    l1 = _log_sigmoid(z)
    l0 = _log_sigmoid(-z)
    c1 = l1 > LOG_CLAMP
    c0 = l0 > LOG_CLAMP
    loss = -(y * np.maximum(l1, LOG_CLAMP) + (1.0 - y) * np.maximum(l0, LOG_CLAMP))
    sig = np.exp(l1)
    dz = -(y * np.where(c1, 1.0 - sig, 0.0) - (1.0 - y) * np.where(c0, sig, 0.0))
    return loss, dz


def loss_and_grad(batch, labels, params, cfg: ModelConfig, rng=None):
    """Mean token-level BCE of sigmoid(z) against binary labels, with exact gradients.

    ``rng`` enables dropout (training only).
    """
    items = list(batch)
    if len(items) != len(labels):
        raise EncoderError(f"{len(items)} inputs but {len(labels)} label vectors")
    if not items:
        raise EncoderError("empty batch")
    ids, seg = _pad_batch(items, cfg.max_len)
    dtype = params["tok_emb"].dtype
    y = np.zeros(ids.shape, dtype=dtype)
    mask = np.zeros(ids.shape, dtype=dtype)
    for b, (inp, lab) in enumerate(zip(items, labels)):
        lab = np.asarray(lab)
        if lab.shape != inp.target_positions.shape:
            raise EncoderError(
                f"item {b}: {lab.shape[0] if lab.ndim else 0} labels for "
                f"{len(inp.target_positions)} target tokens"
            )
        y[b, inp.target_positions] = lab
        mask[b, inp.target_positions] = 1.0
    n = mask.sum()
    if n == 0:
        raise EncoderError("batch has no target tokens")
    z, cache = _forward(ids, seg, params, cfg, rng=rng)
    per, dper = bce_terms(z, y)
    loss = float((per * mask).sum() / n)
    dz = (dper * mask / n).astype(dtype)
    return loss, _backward(dz, cache, params, cfg)


# ---------------------------------------------------------------------------
# checkpoints

MAGIC = b"BALN1"


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict
    vocab: SubwordVocabulary
    meta: dict = field(default_factory=dict)

    def __eq__(self, other):
        if not isinstance(other, Checkpoint):
            return NotImplemented
        return (
            self.config == other.config
            and self.vocab.entries == other.vocab.entries
            and self.meta == other.meta
            and list(self.params) == list(other.params)
            and all(
                self.params[k].dtype == other.params[k].dtype
                and np.array_equal(self.params[k], other.params[k])
                for k in self.params
            )
        )


def save_checkpoint(c: Checkpoint) -> bytes:
    shapes = param_shapes(c.config)
    if [n for n, _ in shapes] != list(c.params):
        raise EncoderError("parameter names do not match config")
    header = {
        "config": asdict(c.config),
        "vocab": c.vocab.tokens,
        "meta": c.meta,
        "params": [[n, list(s)] for n, s in shapes],
    }
    hbytes = json.dumps(header, sort_keys=True, ensure_ascii=False).encode("utf-8")
    blocks = []
    for name, shape in shapes:
        arr = np.asarray(c.params[name])
        if arr.shape != shape:
            raise EncoderError(f"{name}: shape {arr.shape}, expected {shape}")
        blocks.append(arr.astype("<f4").tobytes())
    return MAGIC + struct.pack("<I", len(hbytes)) + hbytes + b"".join(blocks)


def load_checkpoint(data: bytes) -> Checkpoint:
    if data[: len(MAGIC)] != MAGIC:
        raise EncoderError("not a checkpoint (bad magic / unsupported version)")
    off = len(MAGIC)
    if len(data) < off + 4:
        raise EncoderError("truncated checkpoint header")
    (hlen,) = struct.unpack_from("<I", data, off)
    off += 4
    if len(data) < off + hlen:
        raise EncoderError("truncated checkpoint header")
    try:
        header = json.loads(data[off : off + hlen].decode("utf-8"))
        cfg = ModelConfig(**header["config"])
        vocab = SubwordVocabulary({t: k for k, t in enumerate(header["vocab"])})
    except (ValueError, KeyError, TypeError, CorpusError) as e:
        raise EncoderError(f"corrupt checkpoint header: {e}") from None
    off += hlen
    shapes = param_shapes(cfg)
    if [[n, list(s)] for n, s in shapes] != header["params"]:
        raise EncoderError("checkpoint parameter layout does not match its config")
    params = {}
    for name, shape in shapes:
        size = 4 * int(np.prod(shape, dtype=np.int64))
        if len(data) < off + size:
            raise EncoderError(f"truncated checkpoint in block {name}")
        params[name] = np.frombuffer(data, dtype="<f4", count=size // 4, offset=off).astype(
            np.float32
        ).reshape(shape)
        off += size
    if off != len(data):
        raise EncoderError("trailing bytes after checkpoint")
    return Checkpoint(cfg, params, vocab, header.get("meta", {}))


def write_checkpoint(c: Checkpoint, path) -> None:
    from .corpus import atomic_write_bytes

    atomic_write_bytes(path, save_checkpoint(c))


def read_checkpoint(path) -> Checkpoint:
    with open(path, "rb") as f:
        return load_checkpoint(f.read())
