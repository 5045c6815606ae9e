"""Fully-convolutional melody network trained from scratch with numpy."""
from .checkpoint import load_checkpoint, save_checkpoint
from .model import Architecture, ModelParams, forward, init_params, loss_and_grad, predict_batch
from .optim import OptimizerState, adadelta_step
from .train import TrainConfig, augment, train

__all__ = [
    "Architecture", "ModelParams", "OptimizerState", "TrainConfig",
    "adadelta_step", "augment", "forward", "init_params", "load_checkpoint",
    "loss_and_grad", "predict_batch", "save_checkpoint", "train",
]
