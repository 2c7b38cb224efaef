"""diffcap: describe object-level differences between near-identical images.

The pipeline registers an image pair by translation search, marks changed
pixels, segments them into difference clusters, and generates one sentence
per salient cluster with a masked-attention recurrent decoder trained by
exact marginalization over a latent cluster-alignment variable.
"""

from .errors import DiffcapError, EmptyClusterSetError, FormatError, InvalidInputError
from .imaging import ImagePair, PixelDiffMask, align_pair, compute_diff_mask, load_image
from .clustering import (ClusterSet, DifferenceCluster, ProjectedMask,
                         cluster_features, dbscan_cluster, project_mask)
from .encoder import FeatureGridPair, encode_pair, load_precomputed_features, save_features
from .prior import prior_distribution, prior_log_grad
from .decoder import (DecoderParams, decoder_grad, greedy_decode, init_state,
                      masked_attention, sentence_log_prob)
from .corpus import (AnnotationRecord, DatasetSplit, Vocabulary, build_vocab,
                     extract_frame_pairs, split_by_video, tokenize)
from .training import (Adam, ModelCheckpoint, TrainConfig, TrainingExample,
                       marginal_sentence_grads, marginal_sentence_nll, perplexity, train)
from .inference import (decode_multi, decode_single, nn_baseline,
                        nn_pick_sentence, predict_alignment)
from .metrics import bleu, cider, rouge_l

__version__ = "0.1.0"

__all__ = [
    "DiffcapError", "EmptyClusterSetError", "FormatError", "InvalidInputError",
    "ImagePair", "PixelDiffMask", "align_pair", "compute_diff_mask", "load_image",
    "ClusterSet", "DifferenceCluster", "ProjectedMask", "cluster_features",
    "dbscan_cluster", "project_mask",
    "FeatureGridPair", "encode_pair", "load_precomputed_features", "save_features",
    "prior_distribution", "prior_log_grad",
    "DecoderParams", "decoder_grad", "greedy_decode", "init_state",
    "masked_attention", "sentence_log_prob",
    "AnnotationRecord", "DatasetSplit", "Vocabulary", "build_vocab",
    "extract_frame_pairs", "split_by_video", "tokenize",
    "Adam", "ModelCheckpoint", "TrainConfig", "TrainingExample",
    "marginal_sentence_grads", "marginal_sentence_nll", "perplexity", "train",
    "decode_multi", "decode_single", "nn_baseline", "nn_pick_sentence",
    "predict_alignment",
    "bleu", "cider", "rouge_l",
    "__version__",
]
