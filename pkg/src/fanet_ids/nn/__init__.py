from .checkpoint import load_weights, save_weights
from .fewshot import PairwiseModel, pair_probability, pairwise_distance
from .models import Sequential, bce, build_cnn, build_mlp, build_model, forward, from_arch, grad, loss_and_grad, sigmoid
from .optim import AdamState, adam_step
from .scaler import Scaler, fit_scaler, transform
from .train import TrainConfig, Trainer, batches, train_epochs
