"""Desk-scale laboratory for parametric contrastive losses on long-tailed data."""

from .errors import (ConfigError, ContractViolation, DegenerateInputError,
                     TrainingDiverged)
from .numerics import Schedule, cosine_lr, l2_normalize, log_softmax, make_rng
from .queue import (ContrastSet, EncoderParams, MomentumQueue, build_contrast_set,
                    enqueue_batch, expected_positives, momentum_update)
from .losses import (CenterBank, LossBreakdown, LossGrads, PacoConfig,
                     cross_entropy_loss, decompose_paco, infonce_loss,
                     multitask_loss, paco_loss, supcon_loss)
from .theory import (OptimaReport, extra_loss, extra_loss_curve, extra_loss_minimizer,
                     center_gradient_formula, paco_optimum, simplex_oracle,
                     supcon_intensity, supcon_optimum)
from .data import (LongTailProfile, SyntheticDataset, class_frequency,
                   exponential_profile, pareto_profile, sample_gaussian_mixture)
from .trainer import (LinearProbe, ProbeConfig, TrainConfig, TrainTrace, TrainedModel,
                      grad_norm_profile, linear_probe, sgd_momentum_step, train)
from .evaluation import (BucketReport, balance_metric, bucket_accuracy,
                         nearest_center_classify)

__all__ = [name for name in dir() if not name.startswith("_")]
