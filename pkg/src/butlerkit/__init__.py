"""butlerkit: desk-scale service-robot skills.

Three capabilities, wired together by a rule-based manager:

* movement learning from kinesthetic-style demonstrations (trim, align,
  Gaussian mixture fit with K-means init and BIC order selection, mixture
  regression playback with adjustable speed),
* perception fusion (mask mean-depth distances, pinhole bearings, planar
  world positions, chair occupancy, raised-hand detection, and a calibrated
  depth-noise model),
* a blackboard manager with shortest-job-first scheduling that executes
  scripted scenarios such as the five-stage hotel butler.

Everything runs on synthetic or recorded data; no robot hardware involved.
"""

from .errors import (
    DegenerateComponent,
    EmptyAfterTrim,
    FormatError,
    MixedDimensions,
    MixedLabels,
    NoValidDepth,
    OutOfRange,
    StubMissing,
    TaskActionFailed,
    ToolkitError,
    TooFewDistinctPoints,
)
from .gmm import (
    FitReport,
    GmmModel,
    bic_score,
    em_fit,
    kmeans_init,
    load_model,
    save_model,
    select_model,
)
from .gmr import (
    LearnConfig,
    LearnedMovement,
    MovementStore,
    generate_trajectory,
    gmr_regress,
    learn_movement,
    learn_movement_detailed,
    load_movement,
    save_movement,
)
from .manager import (
    Blackboard,
    Event,
    EventLog,
    ScenarioScript,
    Stage,
    StubKit,
    Task,
    TaskAction,
    load_scenario,
    run_scenario,
    save_scenario,
    schedule_next,
)
from .perception import (
    CameraModel,
    ChairStatus,
    DepthImage,
    DetectionMask,
    LocalizationResult,
    PerceptionFrame,
    PersonKeypoints,
    RobotPose2D,
    WaveDetection,
    WorldObject,
    apply_depth_noise,
    chair_occupancy,
    detect_waving,
    localize_objects,
    mask_mean_depth,
    pixel_bearing,
    project_to_world,
)
from .trajectories import (
    AlignedDemoSet,
    Demonstration,
    Source,
    TimedSample,
    align_to_reference,
    load_demo_csv,
    load_demo_dir,
    resample,
    save_demo_csv,
    save_demo_set,
    trim_idle,
)

__version__ = "0.1.0"
