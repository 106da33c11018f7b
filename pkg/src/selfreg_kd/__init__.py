"""Self-regulated training and data-efficient knowledge distillation on numpy."""
from .architectures import build
from .checkpoint import load_checkpoint, save_checkpoint
from .data import BatchPlan, Dataset, class_partition, load_cifar10, load_idx, synthetic_blobs
from .distill import DistillConfig, TrainReport, distill, distill_loss, train_teacher
from .functional import cross_entropy, softmax_with_temperature
from .metrics import aggregate, efficiency, evaluate
from .nn import SequentialModel, conv2d, dense, flatten, maxpool2x2, mlp, relu
from .optim import Adam
from .regulation import ParticipationLedger, gate, margin, threshold
from .significance import compute_significance, histogram

__version__ = "0.1.0"

__all__ = [
    "Adam", "BatchPlan", "Dataset", "DistillConfig", "ParticipationLedger", "SequentialModel",
    "TrainReport", "aggregate", "build", "class_partition", "compute_significance", "conv2d",
    "cross_entropy", "dense", "distill", "distill_loss", "efficiency", "evaluate", "flatten",
    "gate", "histogram", "load_checkpoint", "load_cifar10", "load_idx", "margin", "maxpool2x2",
    "mlp", "relu", "save_checkpoint", "softmax_with_temperature", "synthetic_blobs", "threshold",
    "train_teacher",
]
