"""Sentence generation, latent-alignment prediction, and the nearest-neighbor
baseline."""
from __future__ import annotations

import numpy as np

from .errors import EmptyClusterSetError, InvalidInputError
from .decoder import greedy_decode, sentence_log_prob
from .encoder import FeatureGridPair
from .prior import prior_distribution
from .training import ModelCheckpoint, TrainingExample


def _mode_mask(model: ModelCheckpoint, example: TrainingExample, k: int):
    """Attention mask used when decoding for cluster k under the model mode."""
    if model.mode == "capt":
        return np.ones((example.feats.grid_h, example.feats.grid_w))
    if model.mode == "capt-masked":
        return example.pmask_union
    return example.pmasks[k]


def _require_clusters(example: TrainingExample) -> int:
    if example.k == 0:
        raise EmptyClusterSetError(f"example {example.img_id} has no clusters")
    return example.k


def _cluster_order(model: ModelCheckpoint, example: TrainingExample) -> np.ndarray:
    """Clusters ranked for multi-sentence output: by decreasing prior
    probability, except the uniform-prior mode which falls back to decreasing
    bounding-box area. Ties go to the lowest cluster id."""
    if model.mode == "ddla-uniform":
        areas = [(c.bbox[2] - c.bbox[0] + 1) * (c.bbox[3] - c.bbox[1] + 1)
                 for c in example.clusters.clusters]
        return np.argsort(-np.asarray(areas, dtype=np.float64), kind="stable")
    p = prior_distribution(model.prior_w, example.clusters)
    return np.argsort(-p, kind="stable")


def decode_single(model: ModelCheckpoint, example: TrainingExample,
                  rng: np.random.Generator | None = None) -> list[int]:
    """One sentence for the most salient cluster (argmax of the prior, ties to
    the lowest id). The uniform-prior mode instead samples the cluster from
    the run's seeded generator."""
    k = _require_clusters(example)
    if model.mode == "ddla-uniform":
        rng = rng if rng is not None else np.random.default_rng(0)
        z = int(rng.integers(k))
    else:
        p = prior_distribution(model.prior_w, example.clusters)
        z = int(np.argmax(p))
    return greedy_decode(model.params, example.feats, _mode_mask(model, example, z),
                         max_len=model.config.max_len)


def decode_multi(model: ModelCheckpoint, example: TrainingExample,
                 t: int, rng: np.random.Generator | None = None) -> list[list[int]]:
    """One sentence each for the top min(t, K) distinct clusters in rank order."""
    if t < 1:
        raise InvalidInputError("sentence count must be >= 1")
    k = _require_clusters(example)
    order = _cluster_order(model, example)[:min(t, k)]
    return [greedy_decode(model.params, example.feats,
                          _mode_mask(model, example, int(z)),
                          max_len=model.config.max_len)
            for z in order]


def predict_alignment(model: ModelCheckpoint, example: TrainingExample, i: int) -> int:
    """Posterior-mode cluster for sentence i: argmax over clusters of
    prior probability times decoder likelihood (ties to the lowest id)."""
    _require_clusters(example)
    if model.mode == "ddla-uniform":
        log_prior = np.zeros(example.k)
    else:
        log_prior = np.log(prior_distribution(model.prior_w, example.clusters))
    logps = np.array([sentence_log_prob(model.params, example.feats,
                                        example.pmasks[z], example.sentences[i])
                      for z in range(example.k)])
    return int(np.argmax(log_prior + logps))


def pooled_pair_vector(feats: FeatureGridPair) -> np.ndarray:
    """Mean-pool each grid over its cells and concatenate the two vectors."""
    d = feats.dim
    return np.concatenate([feats.f1.reshape(-1, d).mean(axis=0),
                           feats.f2.reshape(-1, d).mean(axis=0)])


def nn_baseline(train_features: list[FeatureGridPair], annotations: list,
                query: FeatureGridPair):
    """Annotation of the training pair closest to the query in pooled feature
    space (L2; ties to the lowest training index)."""
    if not train_features or len(train_features) != len(annotations):
        raise InvalidInputError("need a nonempty training index with matching annotations")
    q = pooled_pair_vector(query)
    dists = np.array([np.linalg.norm(pooled_pair_vector(f) - q)
                      for f in train_features])
    return annotations[int(np.argmin(dists))]


def nn_pick_sentence(annotation: list, rng: np.random.Generator):
    """Single-sentence variant: pick one sentence of the retrieved annotation
    with the run's seeded generator."""
    if not annotation:
        raise InvalidInputError("annotation has no sentences")
    return annotation[int(rng.integers(len(annotation)))]
