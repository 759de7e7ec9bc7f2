"""Scribble-driven online-learning segmentation for 3-D volumes."""

__version__ = "0.1.0"

from .volume import (LabelMask, PhantomSpec, Volume3D, VolumeError,
                     generate_phantom, load_mask, load_volume,
                     normalize_intensity, save_mask, save_volume)
from .scribbles import (InsufficientScribblesError, PatchBatch, ScribbleSet,
                        class_weights, extract_patches, merge_scribbles)
from .model import (EcoNet, EcoNetConfig, LikelihoodMap, TrainingDivergedError,
                    build_model, infer_likelihood, load_checkpoint,
                    save_checkpoint, segment_by_argmax, train_online)
from .haarlike import HaarBank, default_bank, haar_feature_volume, haar_features
from .graphcut import FlowGraph, build_energy, cut_value, max_flow, regularize
from .metrics import UndefinedMetricError, assd, dice, mean_std
from .scribbler import (InteractionTrace, missegmented_regions, run_protocol,
                        sample_count)
