"""Significance-guided sparse temporal fusion for center-based BEV detection.

Sample information-rich locations from per-frame heatmaps, keep only sparse
feature patches across frames, learn explicit object-centric offset
distributions, and warp-and-fuse past features into the current frame.
"""

from .grid import (FeatureMap, GridCoord, GridSpec, Heatmap, Pose2,
                   WindowShape, transform_coord, window_cells)
from .sim import ObjectState, SimConfig, SimFrame, simulate, truth_heatmap
from .sample import (CircularWindow, RectangleWindow, Sample, SamplingConfig,
                     SignificantSet, SquareWindow, build_significant_set,
                     coarse_sample, refine_sample, relax)
from .geonet import (GeoNetParams, TrainConfig, TransformDistribution,
                     TransformLabel, forward, loss_and_grad, make_label, train)
from .fuse import (Blend, Concat, FusedFrame, SparseBank, WarpedState,
                   dense_cascade_oracle, ego_align, merge, run_sequence, warp)
from .evaluate import (Detection, EvalConfig, EvalReport, MatchResult,
                       compare_single_vs_fused, detect_peaks, match)

__version__ = "0.1.0"
