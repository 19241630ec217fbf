"""Cross-model latent bridge between two toy transformer language models."""
from .evaluation import (AlignmentReport, SteeringReport, alignment_report, asymmetry, cosine,
                         effect_size, random_baseline, steering_metrics, summarize)
from .injection import InjectionPolicy, apply_policy, blend
from .losses import LossWeights, composite, loss_contrast, loss_cycle, loss_dist, loss_trans
from .toymodel import ToyModel, ToyModelConfig, extract_vector, generate, train_lm
from .trainer import (PairDataset, TrainConfig, TrainHistory, build_pair_dataset,
                      train_bidirectional, train_translator)
from .translator import TranslatorConfig, TranslatorParams, cycle, init_translator, translate

__version__ = "0.1.0"
