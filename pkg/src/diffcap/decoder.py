"""Recurrent sentence decoder with attention over the pair's feature grids.

Attention runs over both images' grid cells concatenated along the location
axis and is restricted by a projected cluster mask: softmax weights are
multiplied by the tiled mask and renormalized. Scoring, generation, and exact
parameter gradients (hand-written backpropagation) live here.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError
from .clustering import ProjectedMask
from .encoder import FeatureGridPair

PAD_ID, BOS_ID, EOS_ID, UNK_ID = 0, 1, 2, 3

# Below this much surviving softmax mass the mask is ignored entirely.
MASK_MASS_EPS = 1e-8


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x):
    e = np.exp(x - x.max())
    return e / e.sum()


def _log_softmax(x):
    shifted = x - x.max()
    return shifted - np.log(np.exp(shifted).sum())


@dataclass
class DecoderParams:
    """All decoder weights. Gate layout along the 4H axis is (i, f, g, o)."""

    embed: np.ndarray      # (V, E) token embeddings
    w_x: np.ndarray        # (E + D, 4H) input weights over [embedding; context]
    w_h: np.ndarray        # (H, 4H) recurrent weights
    b_gates: np.ndarray    # (4H,)
    w_init_h: np.ndarray   # (2D, H) pooled-feature transform for h0
    b_init_h: np.ndarray   # (H,)
    w_init_c: np.ndarray   # (2D, H) pooled-feature transform for c0
    b_init_c: np.ndarray   # (H,)
    w_att_h: np.ndarray    # (H, A) attention query projection
    w_att_f: np.ndarray    # (D, A) attention feature projection
    v_att: np.ndarray      # (A,) attention score vector
    w_out: np.ndarray      # (H, V) output projection
    b_out: np.ndarray      # (V,)

    @property
    def vocab_size(self) -> int:
        return self.embed.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.embed.shape[1]

    @property
    def hidden_dim(self) -> int:
        return self.w_h.shape[0]

    @property
    def attn_dim(self) -> int:
        return self.v_att.shape[0]

    @property
    def feat_dim(self) -> int:
        return self.w_att_f.shape[0]

    @classmethod
    def create(cls, vocab_size: int, feat_dim: int, embed_dim: int = 32,
               hidden_dim: int = 64, attn_dim: int = 32, seed: int = 0) -> "DecoderParams":
        """Uniform [-0.1, 0.1] initialization with +1 on the forget-gate bias."""
        rng = np.random.default_rng(seed)
        v, e, h, a, d = vocab_size, embed_dim, hidden_dim, attn_dim, feat_dim

        def u(*shape):
            return rng.uniform(-0.1, 0.1, size=shape)

        b_gates = u(4 * h)
        b_gates[h:2 * h] += 1.0
        return cls(embed=u(v, e), w_x=u(e + d, 4 * h), w_h=u(h, 4 * h),
                   b_gates=b_gates,
                   w_init_h=u(2 * d, h), b_init_h=u(h),
                   w_init_c=u(2 * d, h), b_init_c=u(h),
                   w_att_h=u(h, a), w_att_f=u(d, a), v_att=u(a),
                   w_out=u(h, v), b_out=u(v))

    def named_arrays(self) -> dict[str, np.ndarray]:
        return {
            "embed": self.embed, "w_x": self.w_x, "w_h": self.w_h,
            "b_gates": self.b_gates,
            "w_init_h": self.w_init_h, "b_init_h": self.b_init_h,
            "w_init_c": self.w_init_c, "b_init_c": self.b_init_c,
            "w_att_h": self.w_att_h, "w_att_f": self.w_att_f, "v_att": self.v_att,
            "w_out": self.w_out, "b_out": self.b_out,
        }

    @classmethod
    def from_named(cls, arrays: dict[str, np.ndarray]) -> "DecoderParams":
        return cls(**{k: np.asarray(v, dtype=np.float64) for k, v in arrays.items()})

    def copy(self) -> "DecoderParams":
        return DecoderParams.from_named({k: v.copy() for k, v in self.named_arrays().items()})

    def zero_grads(self) -> dict[str, np.ndarray]:
        return {k: np.zeros_like(v) for k, v in self.named_arrays().items()}


def _as_grid(pmask) -> np.ndarray:
    grid = pmask.grid if isinstance(pmask, ProjectedMask) else np.asarray(pmask, dtype=np.float64)
    return grid


def _flat_features(feats: FeatureGridPair) -> np.ndarray:
    d = feats.dim
    return np.concatenate([feats.f1.reshape(-1, d), feats.f2.reshape(-1, d)]).astype(np.float64)


def _pooled(feats: FeatureGridPair) -> np.ndarray:
    d = feats.dim
    return np.concatenate([feats.f1.reshape(-1, d).mean(axis=0),
                           feats.f2.reshape(-1, d).mean(axis=0)])


def init_state(params: DecoderParams, feats: FeatureGridPair):
    """Initial hidden and cell state from the mean-pooled pair features."""
    p = _pooled(feats)
    h0 = np.tanh(p @ params.w_init_h + params.b_init_h)
    c0 = np.tanh(p @ params.w_init_c + params.b_init_c)
    return h0, c0


class _Runtime:
    """Per-sentence precomputation: flat feature matrix, attention feature
    projection, and the tiled mask over both grids."""

    def __init__(self, params: DecoderParams, feats: FeatureGridPair, pmask):
        grid = _as_grid(pmask)
        if grid.shape != (feats.grid_h, feats.grid_w):
            raise InvalidInputError("projected mask shape does not match feature grid")
        self.params = params
        self.feats = _flat_features(feats)                    # (L, D)
        self.fproj = self.feats @ params.w_att_f              # (L, A)
        self.mtile = np.tile(grid.reshape(-1), 2)             # (L,)

    def attend(self, h_prev: np.ndarray):
        p = self.params
        q = h_prev @ p.w_att_h
        u = np.tanh(self.fproj + q)
        scores = u @ p.v_att
        alpha = _softmax(scores)
        masked = alpha * self.mtile
        mass = masked.sum()
        fallback = mass < MASK_MASS_EPS
        wgt = alpha if fallback else masked / mass
        ctx = wgt @ self.feats
        return ctx, wgt, {"u": u, "alpha": alpha, "mass": mass,
                          "fallback": fallback, "wgt": wgt}

    def step(self, x_id: int, h_prev: np.ndarray, c_prev: np.ndarray):
        p = self.params
        hd = p.hidden_dim
        ctx, wgt, att = self.attend(h_prev)
        z = np.concatenate([p.embed[x_id], ctx])
        a = z @ p.w_x + h_prev @ p.w_h + p.b_gates
        gi = _sigmoid(a[:hd])
        gf = _sigmoid(a[hd:2 * hd])
        gg = np.tanh(a[2 * hd:3 * hd])
        go = _sigmoid(a[3 * hd:])
        c = gf * c_prev + gi * gg
        tc = np.tanh(c)
        h = go * tc
        logits = h @ p.w_out + p.b_out
        cache = {"x_id": x_id, "h_prev": h_prev, "c_prev": c_prev, "att": att,
                 "z": z, "gi": gi, "gf": gf, "gg": gg, "go": go,
                 "c": c, "tc": tc, "h": h}
        return h, c, logits, cache

    def attend_backward(self, dctx: np.ndarray, att: dict, h_prev: np.ndarray,
                        grads: dict[str, np.ndarray]) -> np.ndarray:
        p = self.params
        u, alpha, wgt = att["u"], att["alpha"], att["wgt"]
        dwgt = self.feats @ dctx
        if att["fallback"]:
            dalpha = dwgt
        else:
            dmasked = (dwgt - np.dot(dwgt, wgt)) / att["mass"]
            dalpha = dmasked * self.mtile
        ds = alpha * (dalpha - np.dot(dalpha, alpha))
        grads["v_att"] += u.T @ ds
        dpre = ds[:, None] * p.v_att[None, :] * (1.0 - u * u)
        grads["w_att_f"] += self.feats.T @ dpre
        dq = dpre.sum(axis=0)
        grads["w_att_h"] += np.outer(h_prev, dq)
        return dq @ p.w_att_h.T

    def step_backward(self, cache: dict, dh: np.ndarray, dc: np.ndarray,
                      grads: dict[str, np.ndarray]):
        p = self.params
        e = p.embed_dim
        gi, gf, gg, go = cache["gi"], cache["gf"], cache["gg"], cache["go"]
        tc, c_prev, h_prev = cache["tc"], cache["c_prev"], cache["h_prev"]

        do = dh * tc
        dc = dc + dh * go * (1.0 - tc * tc)
        di = dc * gg
        dgg = dc * gi
        df = dc * c_prev
        dc_prev = dc * gf
        da = np.concatenate([di * gi * (1.0 - gi), df * gf * (1.0 - gf),
                             dgg * (1.0 - gg * gg), do * go * (1.0 - go)])
        grads["w_x"] += np.outer(cache["z"], da)
        grads["w_h"] += np.outer(h_prev, da)
        grads["b_gates"] += da
        dz = p.w_x @ da
        dh_prev = p.w_h @ da
        grads["embed"][cache["x_id"]] += dz[:e]
        dh_prev = dh_prev + self.attend_backward(dz[e:], cache["att"], h_prev, grads)
        return dh_prev, dc_prev


def masked_attention(params: DecoderParams, h_t: np.ndarray,
                     feats: FeatureGridPair, pmask):
    """Context vector and attention weights over both grids for query h_t.

    Weights are the softmax of additive scores multiplied by the tiled mask
    and renormalized; if the surviving mass is below 1e-8 the mask is ignored.
    """
    rt = _Runtime(params, feats, pmask)
    ctx, wgt, _ = rt.attend(np.asarray(h_t, dtype=np.float64))
    return ctx, wgt


def _validate_tokens(params: DecoderParams, tokens) -> list[int]:
    toks = [int(t) for t in tokens]
    if len(toks) < 1:
        raise InvalidInputError("sentence must contain at least one token")
    if any(t < 0 or t >= params.vocab_size for t in toks):
        raise InvalidInputError("token id outside vocabulary")
    return toks


def _teacher_forced(params, feats, pmask, tokens):
    """Run teacher forcing over BOS..tokens; return log-prob and step caches."""
    toks = _validate_tokens(params, tokens)
    rt = _Runtime(params, feats, pmask)
    h, c = init_state(params, feats)
    h0, c0 = h, c
    inputs = [BOS_ID] + toks
    targets = toks + [EOS_ID]
    caches = []
    logp = 0.0
    probs_list = []
    for x_id, y_id in zip(inputs, targets):
        h, c, logits, cache = rt.step(x_id, h, c)
        logp += _log_softmax(logits)[y_id]
        probs_list.append(_softmax(logits))
        caches.append(cache)
    return float(logp), rt, caches, probs_list, targets, (h0, c0)


def sentence_log_prob(params: DecoderParams, feats: FeatureGridPair,
                      pmask, tokens) -> float:
    """Teacher-forced log P(tokens, EOS | features, mask)."""
    logp, *_ = _teacher_forced(params, feats, pmask, tokens)
    return logp


def decoder_grad(params: DecoderParams, feats: FeatureGridPair,
                 pmask, tokens) -> dict[str, np.ndarray]:
    """Exact gradient of the negative sentence log-likelihood for every
    parameter array, computed by backpropagation through time."""
    _, rt, caches, probs_list, targets, (h0, c0) = _teacher_forced(
        params, feats, pmask, tokens)
    grads = params.zero_grads()
    dh = np.zeros(params.hidden_dim)
    dc = np.zeros(params.hidden_dim)
    for cache, probs, y_id in zip(reversed(caches), reversed(probs_list),
                                  reversed(targets)):
        dlogits = probs.copy()
        dlogits[y_id] -= 1.0
        grads["w_out"] += np.outer(cache["h"], dlogits)
        grads["b_out"] += dlogits
        dh = dh + params.w_out @ dlogits
        dh, dc = rt.step_backward(cache, dh, dc, grads)
    half = rt.feats.shape[0] // 2
    pooled = np.concatenate([rt.feats[:half].mean(axis=0), rt.feats[half:].mean(axis=0)])
    dpre_h = dh * (1.0 - h0 * h0)
    grads["w_init_h"] += np.outer(pooled, dpre_h)
    grads["b_init_h"] += dpre_h
    dpre_c = dc * (1.0 - c0 * c0)
    grads["w_init_c"] += np.outer(pooled, dpre_c)
    grads["b_init_c"] += dpre_c
    return grads


def greedy_decode(params: DecoderParams, feats: FeatureGridPair,
                  pmask, max_len: int = 40) -> list[int]:
    """Greedy generation: argmax token each step (ties to the lowest id),
    stopping at EOS or max_len. PAD and BOS are never emitted."""
    if max_len < 1:
        raise InvalidInputError("max_len must be >= 1")
    rt = _Runtime(params, feats, pmask)
    h, c = init_state(params, feats)
    out: list[int] = []
    x_id = BOS_ID
    for _ in range(max_len):
        h, c, logits, _ = rt.step(x_id, h, c)
        logits = logits.copy()
        logits[PAD_ID] = -np.inf
        logits[BOS_ID] = -np.inf
        x_id = int(np.argmax(logits))
        if x_id == EOS_ID:
            break
        out.append(x_id)
    return out
