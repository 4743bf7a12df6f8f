"""LightFFDNet v1/v2: lightweight CNNs for real-vs-fake face classification.

Everything numerical (convolution, batch norm, pooling, softmax, Adam) is
implemented in this package on top of numpy; the hot loops have a compiled
Cython backend with a numpy fallback (see :mod:`lightffd.kernels`).
"""
from .data import (DatasetManifest, SplitSpec, decode_and_resize, make_batches, normalize_pixels,
                   scan_dataset, stratified_split)
from .metrics import EvalReport, aggregate_trials, argmax_predict, confusion, scores
from .models import (ArchSpec, Model, build_arch, init_params, load_checkpoint, model_backward,
                     model_forward, param_count, save_checkpoint)
from .optim import AdamState, Hyperparams, adam_step, cross_entropy_loss, softmax_ce_grad
from .trainer import TrainConfig, benchmark, evaluate, run_trials, train_model

__version__ = "0.1.0"
