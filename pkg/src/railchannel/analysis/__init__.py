"""Channel statistics: delay-domain metrics, angular spread, MCD, clustering, tracking and fitting."""

from .angular import angular_spread, circular_mean, mcd, mcd_angle, mcd_delay, rms_spread
from .clustering import ClusterTrack, kpowermeans, lifetime_stats, select_k, track_clusters
from .delay import (
    InfiniteKFactorError,
    Pdp,
    StationaryRegion,
    apdp,
    extract_large_scale,
    fit_path_loss,
    instantaneous_pdp,
    rice_k_factor,
    rms_delay_spread,
    smooth_pdps,
    stationarity_per_anchor,
    stationarity_regions,
    tpcc,
    tpcc_matrix,
)
from .fitting import (
    MEASURED_TRANSITION_MATRIX,
    FitResult,
    cdf_table,
    fit_distribution,
    fit_markov,
    sample_markov_states,
    stationary_distribution,
)
from .records import MpcRecord
