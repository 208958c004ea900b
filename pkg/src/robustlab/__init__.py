"""Desk-scale adversarial robustness laboratory.

A latent-embedding classifier (encoder + latent classifier + clipped
critic) trained by a three-step min-max procedure, white-box attacks
(FGSM, l-inf PGD, l2 C&W), adversarial-training baselines, and
maximum-likelihood intrinsic dimension estimation, all on MNIST-class
data.
"""

from .attacks import (AttackConfig, AttackResult, cw_l2, fgsm, l2_distortion,
                      linf_distortion, pgd_linf, run_attack)
from .checkpoint import load_checkpoint, save_checkpoint
from .dataio import Dataset, gen_blobs, load_idx
from .evaluation import RobustnessCurve, accuracy, evaluate_curve, export_embeddings
from .idim import IdimConfig, gen_manifold, mle_idim, sample_cloud
from .nets import (Mlp, MlpSpec, Pipeline, PlainClassifier, PriorSpec, build_pipeline,
                   build_plain, sample_prior)
from .tensor import (AdamParams, AdamState, GradientMap, Tape, Tensor, adam_step, backward,
                     clip_weights, constant, leaf, softmax_cross_entropy)
from .training import TrainConfig, TrainState, adv_step, ecla_step, ecla_train, otc_step, train

__version__ = "0.1.0"
