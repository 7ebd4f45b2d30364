from kws.nn.layers import (
    INFER,
    TRAIN,
    Conv1d,
    Dense,
    Dropout,
    Flatten,
    Layer,
    MaxPool1d,
    ReLU,
    Sequential,
    conv1d,
    conv1d_backward,
    dense,
    dense_backward,
    dropout,
    layer_from_config,
    maxpool1d,
    maxpool1d_backward,
    relu,
    relu_backward,
)
from kws.nn.losses import softmax, softmax_cross_entropy
from kws.nn.optim import Adam, AdamState, adam_step
from kws.nn.gradcheck import grad_check, loss_grad_check
