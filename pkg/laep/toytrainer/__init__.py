from .task import SyntheticTask
from .model import (
    ToyMoEState,
    ForwardPass,
    ACTIVATIONS,
    init_state,
    route,
    forward,
    apply_decision,
    save_state,
    load_state,
)
from .aux_losses import (
    AuxLoss,
    NoAuxLoss,
    TokenLevelAuxLoss,
    SequenceWiseAuxLoss,
    AUX_LOSSES,
    get_aux_loss,
    aux_loss_token_level,
    aux_loss_sequence_wise,
)
from .train import (
    TrainConfig,
    TrainResult,
    TRAIN_CONFIG_FIELDS,
    train,
    compute_loss,
    grad_check,
    load_train_config,
)
from .io import write_loss_curve, LOSS_HEADER
