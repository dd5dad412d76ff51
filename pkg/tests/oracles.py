"""Independent reference implementations used only by the tests."""

import math

import numpy as np

from binalign.corpus import GoldAlignment, SentencePair, WordSequence, WordTokenMap
from binalign.encoder import ModelConfig, cast_params, encode_input, init_params, loss_and_grad


def _ln(vec, g, b, eps=1e-5):
    n = len(vec)
    mu = sum(vec) / n
    var = sum((x - mu) ** 2 for x in vec) / n
    return [(x - mu) / math.sqrt(var + eps) * g[i] + b[i] for i, x in enumerate(vec)]


def _matvec(vec, w):
    rows, cols = w.shape
    return [sum(vec[r] * float(w[r, c]) for r in range(rows)) for c in range(cols)]


def _gelu(x):
    return 0.5 * x * (1.0 + math.tanh(math.sqrt(2.0 / math.pi) * (x + 0.044715 * x**3)))


def naive_forward(inp, params, cfg: ModelConfig):
    """Scalar-loop forward pass for one unpadded input; returns target logits."""
    d, H = cfg.d_model, cfg.n_heads
    dh = d // H
    T = len(inp.ids)
    x = []
    for t in range(T):
        row = []
        for c in range(d):
            angle = t / 10000.0 ** ((2 * (c // 2)) / d)
            pos = math.sin(angle) if c % 2 == 0 else math.cos(angle)
            row.append(
                float(params["tok_emb"][inp.ids[t], c])
                + float(params["seg_emb"][inp.segments[t], c])
                + pos
            )
        x.append(row)
    for l in range(cfg.n_layers):
        p = lambda n: params[f"l{l}.{n}"]  # noqa: E731
        h = [_ln(row, p("ln1_g"), p("ln1_b")) for row in x]
        q = [_matvec(r, p("wq")) for r in h]
        k = [_matvec(r, p("wk")) for r in h]
        v = [_matvec(r, p("wv")) for r in h]
        o = [[0.0] * d for _ in range(T)]
        for hd in range(H):
            sl = range(hd * dh, (hd + 1) * dh)
            for t in range(T):
                scores = [
                    sum(q[t][c] * k[u][c] for c in sl) / math.sqrt(dh)
                    for u in range(T)
                ]
                mx = max(scores)
                e = [math.exp(s - mx) for s in scores]
                tot = sum(e)
                for c in sl:
                    o[t][c] = sum(e[u] / tot * v[u][c] for u in range(T))
        attn = [_matvec(r, p("wo")) for r in o]
        x = [[a + b for a, b in zip(xr, ar)] for xr, ar in zip(x, attn)]
        h2 = [_ln(row, p("ln2_g"), p("ln2_b")) for row in x]
        for t in range(T):
            u = [a + float(b) for a, b in zip(_matvec(h2[t], p("w1")), p("b1"))]
            g = [_gelu(a) for a in u]
            f = [a + float(b) for a, b in zip(_matvec(g, p("w2")), p("b2"))]
            x[t] = [a + b for a, b in zip(x[t], f)]
    z = []
    for t in inp.target_positions:
        hf = _ln(x[t], params["lnf_g"], params["lnf_b"])
        z.append(sum(a * float(w) for a, w in zip(hf, params["w_head"])) + float(params["b_head"]))
    return np.array(z)


def random_batch(rng, vocab_size, n_items=3, max_words=4, max_len=64):
    batch, labels = [], []
    for _ in range(n_items):
        n = int(rng.integers(1, max_words + 1))
        m = int(rng.integers(1, max_words + 1))
        src = [int(t) for t in rng.integers(6, vocab_size, n)]
        tgt = [int(t) for t in rng.integers(6, vocab_size, m)]
        wmap = WordTokenMap(tuple((i, i + 1) for i in range(n)))
        batch.append(encode_input(src, int(rng.integers(n)), wmap, tgt, max_len))
        labels.append(rng.integers(0, 2, m).astype(float))
    return batch, labels


def random_params(cfg, seed, scale=0.3):
    """float64 parameters with biases/scales perturbed away from their init."""
    rng = np.random.default_rng(seed)
    params = cast_params(init_params(cfg, seed), np.float64)
    for k in params:
        params[k] = np.asarray(params[k] + rng.normal(0.0, scale, params[k].shape))
    return params


def finite_difference_grads(batch, labels, params, cfg, h=1e-4):
    """Central differences of the loss w.r.t. every parameter entry."""
    out = {}
    for name, arr in params.items():
        g = np.zeros(arr.shape)
        flat = arr.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            old = flat[i]
            flat[i] = old + h
            lp, _ = loss_and_grad(batch, labels, params, cfg)
            flat[i] = old - h
            lm, _ = loss_and_grad(batch, labels, params, cfg)
            flat[i] = old
            gflat[i] = (lp - lm) / (2 * h)
        out[name] = g
    return out


def max_relative_error(analytic, numeric, floor=1e-6):
    worst = 0.0
    for k in analytic:
        a = np.asarray(analytic[k], dtype=np.float64)
        n = np.asarray(numeric[k], dtype=np.float64)
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)) if a.size else 0.0)
    return worst


def brute_force_scores(hyps, golds):
    """AER / P / R / F1 by explicit enumeration of every (i, j) in the bounding grid."""
    hs = hp = h = s = 0
    for hyp, g in zip(hyps, golds):
        hyp = set(getattr(hyp, "pairs", hyp))
        pts = hyp | set(g.possible) | set(g.sure)
        if not pts:
            continue
        n = max(i for i, _ in pts) + 1
        m = max(j for _, j in pts) + 1
        for i in range(n):
            for j in range(m):
                in_h = (i, j) in hyp
                in_s = (i, j) in g.sure
                in_p = in_s or (i, j) in g.possible
                h += in_h
                s += in_s
                hs += in_h and in_s
                hp += in_h and in_p
    a = 1 - (hs + hp) / (h + s)
    p = hp / h if h else 0.0
    r = hs / s
    f = 2 * p * r / (p + r) if p + r else 0.0
    return a, p, r, f


def random_corpus(rng, n_pairs):
    """Random (hypotheses, gold) with up to 8 words per side and S within P."""
    hyps, golds = [], []
    for _ in range(n_pairs):
        n, m = rng.randint(1, 8), rng.randint(1, 8)
        cells = [(i, j) for i in range(n) for j in range(m)]
        s = {c for c in cells if rng.random() < 0.2} or {rng.choice(cells)}
        p = s | {c for c in cells if rng.random() < 0.1}
        h = {c for c in cells if rng.random() < 0.25}
        golds.append(GoldAlignment(frozenset(s), frozenset(p)))
        hyps.append(h)
    return hyps, golds


__all__ = [
    "naive_forward",
    "random_batch",
    "random_params",
    "finite_difference_grads",
    "max_relative_error",
    "brute_force_scores",
    "random_corpus",
]


# (n_src, n_tgt, sure, possible-only, hypothesis); categories hand-enumerated per line:
# U = untranslated, M = one-to-many, N = one-to-many non-contiguous, "occ/correct".
STRAT_FIXTURE = [
    (2, 2, {(0, 0), (1, 1)}, set(), {(0, 0), (1, 1)}),  # none
    (2, 2, {(0, 0)}, set(), {(0, 0)}),  # U 2/2
    (2, 2, {(0, 0)}, set(), {(0, 0), (1, 1)}),  # U 2/0
    (1, 2, {(0, 0), (0, 1)}, set(), {(0, 0), (0, 1)}),  # M 1/1
    (1, 3, {(0, 0), (0, 2)}, set(), {(0, 0), (0, 2)}),  # M 1/1 N 1/1 U 1/1
    (1, 3, {(0, 0), (0, 2)}, set(), {(0, 0), (0, 1), (0, 2)}),  # M 1/0 N 1/0 U 1/0
    (3, 1, {(0, 0), (2, 0)}, set(), {(0, 0)}),  # M 1/0 N 1/0 U 1/1
    (2, 4, {(0, 0), (0, 1), (1, 2), (1, 3)}, set(), {(0, 0), (0, 1), (1, 2)}),  # M 2/1
    (4, 4, {(0, 1), (1, 0), (2, 2)}, set(), {(0, 1), (1, 0), (2, 2), (3, 3)}),  # U 2/0
    (3, 3, set(), set(), set()),  # U 6/6
    (3, 3, set(), set(), {(1, 1)}),  # U 6/4
    (2, 5, {(0, 0), (0, 2), (0, 4), (1, 1), (1, 3)}, set(),
     {(0, 0), (0, 2), (0, 4), (1, 1), (1, 3)}),  # M 2/2 N 2/2
    (2, 5, {(0, 0), (0, 2), (0, 4), (1, 1), (1, 3)}, set(),
     {(0, 0), (0, 2), (1, 1), (1, 3)}),  # M 2/1 N 2/1
    (3, 2, {(0, 0), (1, 0), (2, 1)}, set(), {(0, 0), (1, 0), (2, 1)}),  # M 1/1
    (3, 2, {(0, 0), (1, 0), (2, 1)}, set(), {(0, 0), (2, 1)}),  # M 1/0
    (1, 1, {(0, 0)}, set(), set()),  # none
    (2, 3, {(0, 0), (0, 1), (1, 2)}, {(1, 1)}, {(0, 0), (0, 1), (1, 2)}),  # M 1/1
    (2, 2, {(0, 0)}, {(1, 1)}, {(0, 0), (1, 1)}),  # U 2/0
    (3, 3, {(0, 0), (0, 2), (2, 0)}, set(), {(0, 0), (0, 2), (2, 0)}),  # M 2/2 N 2/2 U 2/2
    (3, 3, {(0, 0), (0, 2), (2, 0)}, set(), {(0, 0), (0, 2), (2, 0), (1, 1)}),  # M 2/2 N 2/2 U 2/0
]
STRAT_EXPECTED = {
    "untranslated": (27, 16),
    "one-to-many": (17, 12),
    "one-to-many-noncontiguous": (11, 8),
}


def strat_fixture():
    """(hyps, golds, pairs) built from STRAT_FIXTURE."""
    hyps, golds, pairs = [], [], []
    for n, m, sure, extra, hyp in STRAT_FIXTURE:
        g = GoldAlignment(frozenset(sure), frozenset(sure | extra))
        src = WordSequence.from_words(f"s{i}" for i in range(n))
        tgt = WordSequence.from_words(f"t{j}" for j in range(m))
        hyps.append(set(hyp))
        golds.append(g)
        pairs.append(SentencePair(src, tgt, g))
    return hyps, golds, pairs
