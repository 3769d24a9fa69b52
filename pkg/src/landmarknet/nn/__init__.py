"""Layers, propagation, initialisation and SGD training."""

from .init import init_params, xavier_limit
from .layers import (Constant, Conv, FullyConnected, Gaussian, LayerSpec,
                     MaxPool, PretrainedByName, ReLU, Xavier, output_shape,
                     param_count)
from .network import (Activations, Gradients, LayerParams, NetworkSpec,
                      Parameters, SUPPORTED_DEPTHS, backward, build_vgg_x_fc,
                      copy_params, forward, layer_forward)
from .train import (LossHistory, TrainConfig, effective_rates, evaluate_loss,
                    iterations_per_epoch, predict, predict_batch, sgd_step,
                    squared_loss, train)
