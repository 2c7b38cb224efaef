"""Marginal-likelihood training of the salience prior and decoder jointly.

Each sentence's loss is the negative log of the prior-weighted sum of
per-cluster decoder likelihoods, computed in log space. The per-cluster
attention mask depends on the model mode: per-cluster masks for the latent
alignment models, a single all-ones mask for the plain captioner, and a
single union-of-clusters mask for the masked captioner.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, asdict

import numpy as np

from .errors import EmptyClusterSetError, FormatError, InvalidInputError
from .clustering import ClusterSet
from .corpus import Vocabulary
from .decoder import DecoderParams, sentence_log_prob, decoder_grad
from .encoder import FeatureGridPair
from .prior import prior_distribution

logger = logging.getLogger(__name__)

MODES = ("ddla", "ddla-uniform", "capt", "capt-masked")


@dataclass
class TrainingExample:
    """Preprocessed image pair: features, clusters with projected masks, and
    the token-encoded annotation sentences."""

    img_id: str
    feats: FeatureGridPair
    clusters: ClusterSet
    pmasks: list[np.ndarray]          # one grid per cluster
    pmask_union: np.ndarray           # projection of the union of cluster masks
    sentences: list[list[int]]

    @property
    def k(self) -> int:
        return self.clusters.k


@dataclass
class TrainConfig:
    mode: str = "ddla"
    embed_dim: int = 32
    hidden_dim: int = 64
    attn_dim: int = 32
    max_len: int = 40
    lr: float = 1e-3
    batch_size: int = 8
    epochs: int = 50
    patience: int | None = 5          # None disables validation early stopping
    seed: int = 0
    min_count: int = 5
    split_ratios: tuple = (0.8, 0.1, 0.1)
    video_delim: str = "_"
    delta: float = 30.0
    max_shift: int = 5
    eps: float = 5.0
    min_pts: int = 10
    sigma: float = 2.0
    grid_h: int = 14
    grid_w: int = 14

    def __post_init__(self):
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}")
        self.split_ratios = tuple(float(r) for r in self.split_ratios)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["split_ratios"] = list(self.split_ratios)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        d = dict(d)
        d["split_ratios"] = tuple(d.get("split_ratios", (0.8, 0.1, 0.1)))
        return cls(**d)


@dataclass
class ModelCheckpoint:
    """A trained model: prior weights, decoder parameters, vocabulary, and the
    configuration that produced them. Serializes to canonical JSON so that
    save -> load -> save is byte-identical."""

    mode: str
    config: TrainConfig
    vocab: Vocabulary
    prior_w: np.ndarray
    params: DecoderParams
    version: int = 1

    def save(self, path) -> None:
        payload = {
            "version": self.version,
            "mode": self.mode,
            "config": self.config.to_dict(),
            "vocab": self.vocab.tokens,
            "prior_w": self.prior_w.tolist(),
            "decoder": {k: v.tolist() for k, v in self.params.named_arrays().items()},
        }
        text = json.dumps(payload, sort_keys=True, separators=(",", ":"),
                          allow_nan=False)
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        try:
            with open(path, "r", encoding="utf-8") as fh:
                payload = json.load(fh)
            return cls(
                version=int(payload["version"]),
                mode=payload["mode"],
                config=TrainConfig.from_dict(payload["config"]),
                vocab=Vocabulary(tokens=list(payload["vocab"])),
                prior_w=np.asarray(payload["prior_w"], dtype=np.float64),
                params=DecoderParams.from_named(payload["decoder"]),
            )
        except (KeyError, ValueError, TypeError) as exc:
            raise FormatError(f"malformed checkpoint {path}: {exc}") from exc


def _logsumexp(x: np.ndarray) -> float:
    m = x.max()
    return float(m + np.log(np.exp(x - m).sum()))


def component_masks(model: ModelCheckpoint, example: TrainingExample):
    """Mixture components for one example under the model's mode: log prior
    weights and the attention mask used by each component."""
    k = example.k
    if k == 0:
        raise EmptyClusterSetError(f"example {example.img_id} has no clusters")
    mode = model.mode
    if mode == "capt":
        ones = np.ones((example.feats.grid_h, example.feats.grid_w))
        return np.zeros(1), [ones]
    if mode == "capt-masked":
        return np.zeros(1), [example.pmask_union]
    if mode == "ddla-uniform":
        return np.full(k, -np.log(k)), list(example.pmasks)
    p = prior_distribution(model.prior_w, example.clusters)
    return np.log(p), list(example.pmasks)


def _component_terms(model, example, i):
    log_prior, masks = component_masks(model, example)
    logps = np.array([sentence_log_prob(model.params, example.feats, m,
                                        example.sentences[i]) for m in masks])
    return log_prior + logps, masks


def marginal_sentence_nll(model: ModelCheckpoint, example: TrainingExample,
                          i: int) -> float:
    """Negative log of the prior-weighted cluster mixture for sentence i."""
    terms, _ = _component_terms(model, example, i)
    return -_logsumexp(terms)


def marginal_sentence_grads(model: ModelCheckpoint, example: TrainingExample, i: int):
    """Loss plus its exact gradients: the decoder gradient is the
    posterior-weighted sum of per-cluster gradients; the prior gradient is
    the prior expectation of the features minus the posterior expectation."""
    terms, masks = _component_terms(model, example, i)
    nll = -_logsumexp(terms)
    post = np.exp(terms + nll)        # softmax over components
    grads = model.params.zero_grads()
    for r_k, mask in zip(post, masks):
        g_k = decoder_grad(model.params, example.feats, mask, example.sentences[i])
        for name in grads:
            grads[name] += r_k * g_k[name]
    if model.mode == "ddla":
        g = example.clusters.feature_matrix()
        p = prior_distribution(model.prior_w, example.clusters)
        grad_w = p @ g - post @ g
    else:
        grad_w = np.zeros(4)
    return nll, grad_w, grads


def perplexity(model: ModelCheckpoint, examples: list[TrainingExample]) -> float:
    """exp(total marginal NLL / total token count); tokens include each
    sentence's EOS. Examples without clusters are skipped."""
    total_nll = 0.0
    total_tokens = 0
    for ex in examples:
        if ex.k == 0:
            continue
        for i, sent in enumerate(ex.sentences):
            total_nll += marginal_sentence_nll(model, ex, i)
            total_tokens += len(sent) + 1
    if total_tokens == 0:
        raise InvalidInputError("no scoreable sentences")
    return float(np.exp(total_nll / total_tokens))


class Adam:
    """Adam over a dict of named parameter arrays; updates in place."""

    def __init__(self, arrays: dict[str, np.ndarray], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.t = 0
        self.m = {k: np.zeros_like(v) for k, v in arrays.items()}
        self.v = {k: np.zeros_like(v) for k, v in arrays.items()}

    def step(self, arrays: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        for k, p in arrays.items():
            g = grads[k]
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * (g * g)
            m_hat = self.m[k] / (1.0 - self.beta1 ** self.t)
            v_hat = self.v[k] / (1.0 - self.beta2 ** self.t)
            p -= self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def _validation_cider(model: ModelCheckpoint, examples: list[TrainingExample]) -> float:
    from .inference import decode_multi
    from .metrics import cider
    hyps, refs = [], []
    for ex in examples:
        if ex.k == 0:
            continue
        sents = decode_multi(model, ex, len(ex.sentences))
        hyp = [t for s in sents for t in s]
        ref = [t for s in ex.sentences for t in s]
        hyps.append(hyp)
        refs.append([ref])
    if len(hyps) < 2:
        raise InvalidInputError("validation CIDEr needs at least 2 usable examples")
    return cider(hyps, refs)


def train(train_examples: list[TrainingExample], val_examples: list[TrainingExample],
          vocab: Vocabulary, config: TrainConfig) -> ModelCheckpoint:
    """Stochastic gradient training of the marginal sentence likelihood.

    Minimizes the mean marginal NLL per sentence with Adam, shuffling
    examples each epoch from a seeded generator. With patience set, each
    epoch ends with a validation CIDEr evaluation via multi-sentence
    decoding; the best-scoring parameters are kept and training stops after
    ``patience`` epochs without improvement. With patience None the final
    parameters are returned and validation decoding is skipped.
    """
    if not train_examples or not val_examples:
        raise InvalidInputError("train and validation splits must be nonempty")
    usable = [ex for ex in train_examples if ex.k >= 1]
    skipped = len(train_examples) - len(usable)
    if skipped:
        logger.info("skipping %d training examples with no clusters", skipped)
    if not usable:
        raise InvalidInputError("no training examples with clusters")

    feat_dim = usable[0].feats.dim
    params = DecoderParams.create(
        vocab_size=len(vocab), feat_dim=feat_dim, embed_dim=config.embed_dim,
        hidden_dim=config.hidden_dim, attn_dim=config.attn_dim, seed=config.seed)
    model = ModelCheckpoint(mode=config.mode, config=config, vocab=vocab,
                            prior_w=np.zeros(4), params=params)

    arrays = {"prior_w": model.prior_w, **model.params.named_arrays()}
    adam = Adam(arrays, lr=config.lr)
    rng = np.random.default_rng(config.seed)

    best_score = None
    best_state = None
    stale = 0
    for epoch in range(config.epochs):
        order = rng.permutation(len(usable))
        epoch_loss, epoch_sentences = 0.0, 0
        for start in range(0, len(order), config.batch_size):
            batch = [usable[j] for j in order[start:start + config.batch_size]]
            grads = {"prior_w": np.zeros(4), **model.params.zero_grads()}
            n_sent = 0
            batch_loss = 0.0
            for ex in batch:
                for i in range(len(ex.sentences)):
                    nll, gw, gt = marginal_sentence_grads(model, ex, i)
                    grads["prior_w"] += gw
                    for name, g in gt.items():
                        grads[name] += g
                    batch_loss += nll
                    n_sent += 1
            for g in grads.values():
                g /= n_sent
            adam.step(arrays, grads)
            epoch_loss += batch_loss
            epoch_sentences += n_sent
        logger.info("epoch %d mean sentence nll %.4f", epoch,
                    epoch_loss / max(epoch_sentences, 1))
        if config.patience is None:
            continue
        score = _validation_cider(model, val_examples)
        logger.info("epoch %d validation cider %.4f", epoch, score)
        if best_score is None or score > best_score:
            best_score = score
            best_state = (model.prior_w.copy(), model.params.copy())
            stale = 0
        else:
            stale += 1
            if stale >= config.patience:
                break
    if best_state is not None:
        model.prior_w, model.params = best_state
    return model
