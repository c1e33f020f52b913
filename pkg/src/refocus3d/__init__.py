"""Focus analysis and refocused inference for robust point-cloud classification.

The package is organized around a small pipeline:

* :mod:`refocus3d.geometry`, :mod:`refocus3d.shapes`, :mod:`refocus3d.io` —
  cloud containers, synthetic dataset, file formats
* :mod:`refocus3d.corruptions` — seven corruption families, five severities
* :mod:`refocus3d.network` — max-pool point classifier with exact hand-written
  gradients
* :mod:`refocus3d.influence`, :mod:`refocus3d.focus` — per-point influence
  maps and the normalized-entropy focus measure
* :mod:`refocus3d.refocus` — adaptive-threshold refocused inference/training
* :mod:`refocus3d.baselines`, :mod:`refocus3d.evaluation` — SRS/SOR/outlier
  removal and the OA/CE/mCE benchmark harness
"""

from .baselines import influence_outlier_removal, precision_recall, sor, srs
from .corruptions import (CorruptionSpec, Schedule, apply as corrupt,
                          corrupt_dataset, corruption_suite)
from .errors import (DegenerateInfluenceError, InvalidCloudError,
                     InvalidDistributionError, NumericOverflowError, ParseError,
                     UndefinedCEError)
from .evaluation import (EvalReport, ExperimentConfig, corruption_error,
                         focus_success_curve, make_pipeline, mean_corruption_error,
                         overall_accuracy, run_experiment, write_report)
from .focus import (FocusStats, classify_focus, entropy, focus, focus_stats,
                    normalized_entropy)
from .geometry import Dataset, LabeledCloud, PointCloud, knn, normalize_unit_sphere
from .influence import argmax_count_influence, l1_feature_influence, normalize_influence
from .io import (load_cache, load_dataset, load_xyz, save_cache, save_dataset,
                 save_xyz)
from .network import (EncoderParams, ForwardTrace, TrainConfig, forward,
                      init_params, load_checkpoint, loss_and_grads, predict,
                      save_checkpoint, train)
from .refocus import (RefocusConfig, RefocusResult, adaptive_k,
                      feature_space_filter, refocus_infer, refocus_train_sampler,
                      select_lowest)
from .shapes import SHAPE_KINDS, build_dataset, synth_shape

__version__ = "0.1.0"
