"""Time-series causal discovery for segmented industrial process data."""

from .ci import CIQuery, CITestResult, CMIknn, GPDC, ParCorrWLS, RobustParCorr, make_test
from .dataset import (
    FOUNDRY_SCHEMA,
    StandardizationReport,
    TimeSeriesDataset,
    VariableMeta,
    drop_sparse_variables,
    load_csv,
    standardize,
    write_csv,
)
from .errors import (
    ConfigError,
    DataError,
    DegenerateConditioningError,
    EmptyDatasetError,
    InsufficientSamplesError,
    MeltcauseError,
    SchemaMismatchError,
    UnstableSpecError,
)
from .graph import CausalGraph, LaggedAdjacency, Link, LinkInfo
from .hybrid import HybridResult, integrate, resolve_bidirectional
from .pcmci import DiscoveryConfig, ParentsMap, PCMCIPlus, boundary_mask, run_pcmci_plus
from .posthoc import common_and_specific, detect_feedback_pairs, lag_summary, pair_frequency
from .sampling import (
    RepresentativeSequence,
    SamplerConfig,
    ValidationReport,
    concatenate,
    emd_1d,
    mmd_squared,
    remove_outlier_cycles,
    sample_and_validate,
)
from .segmentation import (
    ClusterPartition,
    CycleStats,
    MeltingCycle,
    SegmentationRules,
    baseline_cluster,
    compute_cycle_stats,
    ingest_cluster_labels,
    segment_cycles,
)
from .synthetic import Edge, GroundTruthGraph, SCMSpec, generate, run_benchmark, score

__version__ = "0.1.0"
