"""Black-box grid-perturbation evasion attacks against object detectors.

The pipeline: model a square grid of binary cells over a target box, encode
it as a bitstring, search the bitstring with a small genetic algorithm
against a query-only detector oracle, optionally average fitness over random
image transforms, and harden exported textures with thin-plate warping.
"""

from .config import ConfigError, IoConfig, RunConfig, parse_config
from .dataset import DatasetSample, ingest_dataset, parse_annotation
from .evaluate import (
    AblationRow,
    AblationSweep,
    EvaluationReport,
    SampleOutcome,
    Scene,
    ablate,
    asr,
    derive_seed,
    read_report,
    run_suite,
    write_report,
)
from .grid import (
    BlockGeometry,
    DegenerateGeometryError,
    Genome,
    GridConfig,
    GridSpec,
    decode_genome,
    encode_genome,
    genome_length,
    grid_geometry,
    random_genome,
)
from .imaging import (
    AdversarialSample,
    BBox,
    Image,
    Mask,
    compose,
    image_from_png,
    load_image,
    mask_from_bbox,
    png_bytes,
    save_image,
    splice_pattern,
)
from .optimizer import (
    AttackResult,
    FitnessRecord,
    GaConfig,
    Population,
    crossover,
    evaluate_fitness,
    init_population,
    mutate,
    random_search,
    run_attack,
    select,
)
from .oracle import (
    BudgetExhaustedError,
    Detection,
    HttpOracle,
    MonotoneOracle,
    OracleConfig,
    OracleError,
    OracleTransportError,
    QueryLedger,
    RuggedOracle,
    SubprocessOracle,
    detect,
    iou,
    make_backend_oracle,
    make_synthetic_oracle,
    target_confidence,
)
from .robustness import (
    EotConfig,
    FoldConfig,
    TpsFitError,
    TpsWarp,
    TransformSample,
    apply_transform,
    fit_tps,
    identity_tps,
    sample_transforms,
    simulate_folds,
    transform_bbox,
    warp_image,
)

__version__ = "0.1.0"
