"""Standalone, protocol-transparent RIS beam selection toolkit.

Layers: wideband geometric channels (channel), reflection-beam codebooks
and selection solvers (beams), synthetic scenes + camera detections
(scene), the permutation-invariant beam-set network (setnet), the 5G
initial-access simulator (protocol), and experiment orchestration
(experiments, cli).
"""

from .beams import (
    BeamSet,
    PhaseCodebook,
    ReferenceVector,
    ReflectBeam,
    achievable_rate,
    best_rate_in_set,
    codebook_hash,
    decoupled_bs_beam,
    decoupled_ue_beam,
    dft_upa_codebook,
    equal_gain_rate,
    export_codebook,
    joint_beam_search,
    load_codebook,
    los_optimality_gap,
    optimal_beam_set,
    quantized_all_codebook,
)
from .channel import (
    ArrayGeometry,
    Box,
    FreqChannel,
    LinkBudget,
    PathCluster,
    WidebandParams,
    array_response,
    clusters_from_geometry,
    delay_domain_channel,
    freq_channel,
)
from .experiments import (
    ExperimentConfig,
    ResultTable,
    evaluate,
    generate_dataset,
    load_config,
    run_datafrac,
    run_protocol_experiments,
    save_config,
    train_models,
)
from .protocol import (
    AccessSimulation,
    ClockConfig,
    SweepPolicy,
    inject_stop_event,
    overhead_report,
    run_initial_access,
)
from .scene import (
    CameraModel,
    DetectedUE,
    DetectorNoise,
    Scene,
    SceneConfig,
    encode_ue_info,
    generate_scene,
    project_detect,
)
from .setnet import (
    Batch,
    NetParams,
    TrainConfig,
    eval_metrics,
    forward,
    grad,
    init_net_params,
    loss,
    multi_hot,
    predict_set,
    train,
)

__version__ = "0.1.0"
