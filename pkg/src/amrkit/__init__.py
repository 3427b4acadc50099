"""Meter-reading pipeline toolkit.

Everything around the CNN forward pass: dataset and annotation management,
balanced permutation augmentation, anchor-based detection decoding with NMS
and margin expansion, three counter-recognition decoders, and the evaluation
protocol.  Network outputs enter through the ``InferenceProvider`` interface,
so the pipeline runs against trained-model dumps or the ground-truth oracle
alike.
"""

from .augment import (
    AppliedJitter,
    AugmentedSample,
    JitterRanges,
    generate_set,
    plan_permutations,
    render_sample,
    write_augmented_set,
)
from .config import (
    DEFAULT_CRNET_SPEC,
    DEFAULT_DETECTOR_SPEC,
    PipelineConfig,
    config_from_dict,
    config_to_dict,
    load_config,
    save_config,
)
from .dataset import (
    Box,
    DatasetSplit,
    DatasetStats,
    MeterAnnotation,
    Violation,
    compute_stats,
    load_annotations,
    load_split,
    parse_annotation,
    resolve_transition_digit,
    save_split,
    serialize_annotation,
    split_dataset,
    validate_dataset,
)
from .detect import (
    Anchor,
    DecodedBox,
    GridSpec,
    decode_grid,
    expand_margin,
    filter_count,
    iou,
    iou_wh,
    kmeans_anchors,
    load_anchors,
    nms,
    save_anchors,
    select_counter,
)
from .metrics import (
    DetectionEval,
    RecognitionEval,
    RunSummary,
    TTestResult,
    eval_detection,
    eval_recognition,
    paired_t_test,
    render_report,
    summarize_runs,
    t_critical,
    t_two_tailed_p,
)
from .oracle import OracleNoise, OracleProvider, oracle_provider, synthesize_grid
from .recognize import (
    CtcFrameMatrix,
    PipelineImage,
    PipelineTrace,
    ReadingResult,
    decode_crnet,
    decode_ctc_greedy,
    decode_multitask,
    run_pipeline,
)
from .tensorio import (
    DirectoryProvider,
    InferenceProvider,
    InferenceRequest,
    PredictionTensor,
    read_tensor,
    read_tensor_file,
    write_tensor,
    write_tensor_file,
)

__version__ = "0.1.0"
