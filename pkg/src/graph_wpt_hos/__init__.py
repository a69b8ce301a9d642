"""Graph-spectral wavelet-packet and higher-order-statistics anomaly detection.

Sensor windows (M sensors x L samples) are projected onto the Laplacian
eigenbasis of the sensor graph, summarized by sub-band energies and
|skewness| / |kurtosis| per graph mode, scored with a shrinkage Mahalanobis
distance and tracked with a one-sided CUSUM.
"""

from .channel import (
    AnomalyParams,
    ChannelParams,
    SignalModelParams,
    apply_channel,
    generate_nominal,
    inject_anomaly,
    rayleigh_gains,
)
from .config import REGIME_PRESETS, VARIANTS, ConfigError, RegimeSpec, RunConfig, load_config
from .features import (
    DegenerateSequenceError,
    HosPair,
    extract_features,
    extract_features_raw,
    feature_dimension,
    hos_features,
    layout_slices,
)
from .graph_spectral import (
    ContractViolation,
    GraphConstructionError,
    LaplacianSpectrum,
    RewiringError,
    SensorGraph,
    build_random_geometric_graph,
    eigendecompose,
    gft,
    igft,
    laplacian,
    load_graph,
    rewire_edges,
    save_graph,
    spectrum_of,
)
from .harness import (
    BenchReport,
    TrialResult,
    complexity_report,
    run_benchmark,
    run_trial,
    variant_features,
)
from .metrics import (
    LatencySummary,
    OperatingPoint,
    average_precision,
    f1_optimal_point,
    latency_stats,
    roc_auc,
)
from .scoring import (
    CusumState,
    NominalModel,
    cusum_path,
    cusum_step,
    fit_nominal,
    ledoit_wolf_shrinkage,
    load_model,
    mahalanobis_score,
    run_detector,
    save_model,
    tune_threshold,
)
from .wavelet_packet import SubbandSet, WaveletFilterPair, daubechies4_filters, wpt_decompose

__version__ = "0.1.0"
