"""sprayeval: post-spray evaluation of precision-spraying systems from
segmentation-model outputs -- inference-only fusion, gradient-free CAMs,
Deletion/Insertion faithfulness, segmentation metrics, and weakly
supervised deposition estimation.
"""

from .cams import Cam, TargetRegion, ablation_cam, predicted_region, score_cam, target_score
from .engines import (CachedEngine, EngineDescriptor, ExternalEngine,
                      InferenceEngine, ModelOutput, ToyFcnEngine, splitmix64,
                      uniform_weights)
from .errors import (ClassAbsentError, ConfigError, ContractError, DataError,
                     EngineLostError, SprayEvalError, TensorCorruptionError,
                     TensorFormatError, TransportError)
from .faithfulness import (FaithfulnessCurve, auc, class_averaged_scores,
                           deletion_curve, insertion_curve, morf_order)
from .fusion import FusionMode, fuse
from .segmetrics import (ConfusionTally, dice_per_class, iou_per_class,
                         micro_f1, miou, pixel_accuracy_per_class, tally)
from .tensors import (DEFAULT_CLASSES, ClassTable, argmax_mask,
                      bilinear_resize, minmax_normalize, percentile,
                      read_mask, read_tensor, softmax_channels, write_mask,
                      write_tensor)
from .wsde import (DepositionReport, Island, KeyPointSet, SprayerSpec,
                   affinity_propagation, cluster_affinity, cluster_centres,
                   cluster_threshold, connected_components, coverage,
                   deposition_report, estimate_deposition, extract_islands,
                   hit_miss_rate, island_points, pointing_game)

__version__ = "0.1.0"
