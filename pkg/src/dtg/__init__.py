"""Dense teacher supervision for semi-supervised object detection.

Reads a teacher's dense predictions, rebuilds its NMS clusters, derives dense
student labels from them and computes the classification, regression and
rank-matching losses with analytic gradients.
"""

from .correspondence import CorrespondenceMap, FpnConfig, assign_fpn_level, match_rcnn, match_rpn
from .geometry import AugTransform, Box, apply_transform, cross_space, invert, iou
from .labels import (
    RegressionDelta,
    SampleLabel,
    TrainingLabelSet,
    decode_delta,
    derive_labels,
    encode_delta,
    sparse_to_dense_assign,
)
from .losses import (
    LossConfig,
    LossReport,
    combine_total,
    combine_unlabeled,
    focal_loss,
    rank_distribution,
    rank_matching_loss,
    smooth_l1,
)
from .nms import Candidate, Cluster, ClusterSet, clustered_nms, filter_active, reserved_boxes
from .pipeline import RunConfig, supervise_image
from .prediction import DensePrediction, Sample

__version__ = "0.1.0"
