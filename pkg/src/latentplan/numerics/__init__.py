from .tensor import (
    Tensor,
    NumericsError,
    set_default_dtype,
    get_default_dtype,
    concat,
    stack,
)
from .nn import (
    Linear,
    MLP,
    LayerNorm,
    AdaLN,
    MultiHeadSelfAttention,
    MultiHeadCrossAttention,
    MixerBlock,
    TransformerBlock,
    Module,
    ParameterDict,
    softmax,
    layer_norm,
)
from .optim import AdamW
from .gradcheck import grad_check
from .checkpoint import save_checkpoint, load_checkpoint, CheckpointError
from .rng import make_rng

__all__ = [
    "Tensor",
    "NumericsError",
    "set_default_dtype",
    "get_default_dtype",
    "concat",
    "stack",
    "Linear",
    "MLP",
    "LayerNorm",
    "AdaLN",
    "MultiHeadSelfAttention",
    "MultiHeadCrossAttention",
    "MixerBlock",
    "TransformerBlock",
    "Module",
    "ParameterDict",
    "softmax",
    "layer_norm",
    "AdamW",
    "grad_check",
    "save_checkpoint",
    "load_checkpoint",
    "CheckpointError",
    "make_rng",
]
