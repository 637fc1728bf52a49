"""Trainable embedding network over feature bundles (from-scratch numpy)."""

from airbone.net.arch import Architecture, STREAMS
from airbone.net.model import (
    EmbeddingVector,
    NetworkParams,
    build_inputs,
    forward,
    embed_bundles,
    init_network,
)
from airbone.net.loss import loss_and_grad
from airbone.net.gradcheck import gradient_check
from airbone.net.train import TrainConfig, train
from airbone.net.checkpoint import load_checkpoint, save_checkpoint

__all__ = [
    "Architecture",
    "EmbeddingVector",
    "NetworkParams",
    "STREAMS",
    "TrainConfig",
    "build_inputs",
    "embed_bundles",
    "forward",
    "gradient_check",
    "init_network",
    "load_checkpoint",
    "loss_and_grad",
    "save_checkpoint",
    "train",
]
