"""LiDAR place recognition via 2-D projections and descriptor retrieval."""

from .aggregation import (
    GlobalDescriptor,
    VladCodebook,
    init_codebook,
    l2_normalize,
    load_codebook,
    load_descriptors,
    mean_std_pool,
    save_codebook,
    save_descriptors,
    vlad_aggregate,
)
from .cloud import (
    Box,
    PointCloud,
    PointRecord,
    PoseTrack,
    SensorProfile,
    crop_filter,
    estimate_curvature,
    load_poses,
    load_sensor_profile,
    parse_csv,
    parse_kitti_bin,
    serialize_csv,
)
from .features import (
    FeatureMap,
    FeatureSource,
    baseline_encode,
    flatten_tokens,
    load_feature_map,
    save_feature_map,
    unflatten_tokens,
)
from .metrics import (
    EvalReport,
    PRCurve,
    build_report,
    max_f1,
    pr_auc,
    pr_curve,
    recall_at_1,
)
from .projections import (
    BevExtent,
    PolarExtent,
    ProjectionConfig,
    ProjectionImage,
    ProjectionKind,
    load_pprj,
    project,
    render_png,
    save_pprj,
)
from .retrieval import (
    DescriptorIndex,
    GroundTruthConfig,
    QueryRecord,
    Regime,
    RegimeConfig,
    TemporalUnit,
    build_index,
    compute_positives,
    run_regime,
    search_topk,
)

__version__ = "0.1.0"
