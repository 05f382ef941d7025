"""Joint-angle based refinement of noisy 2D human pose keypoint sequences."""

from .conditioning import (
    LimbSolveResult,
    RatioTable,
    SavGolConfig,
    TrustRegionConfig,
    estimate_ratios,
    limb_loss_gradient,
    limb_objective,
    optimize_limb_lengths,
    savgol_smooth,
    smooth_base_trajectory,
)
from .dataset import (
    DatasetManifest,
    NoiseEvents,
    NoiseSpec,
    SamplePair,
    generate_dataset,
    inject_noise,
    inject_noise_events,
    iter_records,
    load_split,
    read_shard,
    record_coords,
    record_events,
    write_shard,
)
from .errors import (
    CorruptModelError,
    DegenerateLimbError,
    DegenerateSamplingError,
    GenerationError,
    InsufficientDataError,
    InvalidRangeError,
    ModelFormatError,
    PoseRefineError,
    SchemaError,
    ShapeError,
    TrainingDivergedError,
)
from .fourier import (
    FourierCoeffs,
    FourierMotionTemplate,
    RandomizeRanges,
    eval_fourier,
    fit_fourier,
    randomize_template,
    reference_templates,
    segment_windows,
    synthesize_truth,
)
from .pipeline import (
    MetricsReport,
    PipelineConfig,
    RefinedMotion,
    evaluate_metrics,
    export_series,
    load_erroneous_frames,
    parse_keypoints,
    refine_keypoint_file,
    refine_pose_sequence,
    write_keypoints,
)
from .refiner import (
    RefinerModel,
    attention_head,
    batch_gradients,
    bigru_layer_forward,
    gru_cell_forward,
    load_model,
    mse_loss,
    param_gradients,
    parameter_shapes,
    refine_batch,
    refine_window,
    save_model,
)
from .skeleton import (
    EDGES,
    EDGE_NAMES,
    KEYPOINT_NAMES,
    N_KEYPOINTS,
    N_LIMBS,
    PoseSequence,
    angles_from_pose,
    limb_length,
    limb_lengths_from_pose,
    limb_orientation,
    pose_to_angles,
    pose_to_limb_lengths,
    reconstruct_pose,
    reconstruct_sequence,
    unwrap_joint_angles,
    velocity_series,
    wrap_angle,
)
from .training import (
    Adam,
    EpochStats,
    TrainConfig,
    TrainLog,
    save_train_log,
    train_model,
    train_on_arrays,
)
from .windows import (
    MergeConfig,
    WindowPlan,
    merge_plan,
    merge_windows,
    plan_windows,
    refine_sequence,
)

__version__ = "0.1.0"
