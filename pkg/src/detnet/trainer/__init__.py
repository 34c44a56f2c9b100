from .checkpoint import (
    Checkpoint,
    CheckpointError,
    load_weights,
    read_checkpoint,
    save_weights,
    write_checkpoint,
)
from .data import Dataset, hflip, synth_dataset
from .loop import TrainingDiverged, TrainReport, evaluate, train_loop
from .optim import SGD, SgdConfig, lr_at, sgd_step
