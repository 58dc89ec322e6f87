from .tensor import (
    Param,
    Tensor,
    as_tensor,
    default_dtype,
    concat,
    conv1d,
    gru_cell,
    gru_direction,
    log_softmax,
    max_last,
    relu,
    sigmoid,
    softmax,
    softmax_rows,
    tanh,
    zeros,
)
from .layers import (
    BatchNorm1d,
    Conv1d,
    Dense,
    GruCell,
    MaxPool1dGlobal,
    ReLU,
    SoftmaxRows,
    layer_forward_backward,
)
from .optim import Adam
from .gradcheck import gradient_check
from .checkpoint import CheckpointError, check_shapes, load_checkpoint, save_checkpoint

__all__ = [
    "Adam",
    "BatchNorm1d",
    "CheckpointError",
    "Conv1d",
    "Dense",
    "GruCell",
    "MaxPool1dGlobal",
    "Param",
    "ReLU",
    "SoftmaxRows",
    "Tensor",
    "as_tensor",
    "check_shapes",
    "concat",
    "conv1d",
    "default_dtype",
    "gradient_check",
    "gru_cell",
    "gru_direction",
    "layer_forward_backward",
    "load_checkpoint",
    "log_softmax",
    "max_last",
    "relu",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "softmax_rows",
    "tanh",
    "zeros",
]
