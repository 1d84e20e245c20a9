from .layers import BatchNorm, Conv3x3, Dense, Flatten, MaxPool2x2, ReLU, ShapeError
from .model import LayerSpec, Model, ModelSpec, NumericError, cnn2, cnn5, cnn10, model_spec
from .optim import AdamState, adam_step
from .train import TrainConfig, TrainingDiverged, TrainResult, evaluate, train
from .checkpoint import checkpoint_bytes, load_checkpoint, save_checkpoint
from .weights import dump_first_layer_weights, export_weights, uniformity_scores
