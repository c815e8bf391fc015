"""Contrastive vs triplet metric learning, from hand-written gradients up."""

from .analysis import (
    GreedinessReport,
    VarianceReport,
    greediness_report,
    loss_decay_epoch,
    paired_t_test,
    pca_project,
    variance_report,
)
from .datagen import Dataset, SyntheticConfig, generate_synthetic, load_embeddings, load_idx, save_embeddings
from .evaluate import RetrievalResult, knn_classify, recall_at_k
from .losses import LossOutput, PairBatch, TripletBatch, contrastive_loss, sample_pairs, sample_triplets, triplet_loss
from .model import Architecture, encode, encode_backward, init_params
from .numcore import RngStream
from .trainer import DiagnosticsTrace, TrainConfig, batch_diagnostics, train

__version__ = "0.1.0"
