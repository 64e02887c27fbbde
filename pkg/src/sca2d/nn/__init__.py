"""From-scratch convolutional network: layers, Adam, training loop."""

from .gradcheck import gradient_check, layer_gradient_check
from .layers import (BatchNorm, Conv2D, Dense, Dropout, Flatten, MaxPool, ReLU, Softmax,
                     conv2d_forward, softmax)
from .network import (Network, cnn1d_network, cross_entropy_loss, predict_proba,
                      two_block_network)
from .optim import Adam, AdamState, adam_step
from .train import TrainConfig, TrainResult, accuracy, train

__all__ = [
    "Adam", "AdamState", "BatchNorm", "Conv2D", "Dense", "Dropout", "Flatten", "MaxPool",
    "Network", "ReLU", "Softmax", "TrainConfig", "TrainResult", "accuracy", "adam_step",
    "cnn1d_network", "conv2d_forward", "cross_entropy_loss", "gradient_check",
    "layer_gradient_check", "predict_proba", "softmax", "train", "two_block_network",
]
