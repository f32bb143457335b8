"""Dynamic wrapped skew Gaussian processes for space-time directional data."""

from .circular import (
    TWO_PI,
    CircularSummary,
    UndefinedDirectionError,
    atan_star,
    circ_distance,
    circ_summary,
    wrap,
)
from .distributions import (
    BivariatePairParams,
    SkewNormalParams,
    TrigMoments,
    bwsn_pdf,
    circ_mean_conc,
    j_function,
    sn_pdf,
    sn_sample,
    trig_moments_closed,
    trig_moments_mc,
    wsn_pdf,
    wsn_sample,
)
from .evaluation import (
    ScoreTable,
    ValidationSplit,
    crps_circular,
    make_splits,
    rayleigh_test,
    score_models,
)
from .mcmc import (
    ChainConfig,
    GibbsSampler,
    LatentState,
    PosteriorDraws,
    Priors,
    diagnostics,
    fit,
)
from .prediction import (
    ForecastRequest,
    PredictiveDraws,
    forecast,
    krige_many,
    krige_spacetime,
    krige_static,
)
from .spacetime import (
    ModelParams,
    NumericalError,
    SimTruth,
    SiteSet,
    SpaceTimeDataset,
    circ_corr_mc,
    increment_loglik,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "BivariatePairParams",
    "ChainConfig",
    "CircularSummary",
    "ForecastRequest",
    "GibbsSampler",
    "LatentState",
    "ModelParams",
    "NumericalError",
    "PosteriorDraws",
    "PredictiveDraws",
    "Priors",
    "ScoreTable",
    "SimTruth",
    "SiteSet",
    "SkewNormalParams",
    "SpaceTimeDataset",
    "TWO_PI",
    "TrigMoments",
    "UndefinedDirectionError",
    "ValidationSplit",
    "atan_star",
    "bwsn_pdf",
    "circ_corr_mc",
    "circ_distance",
    "circ_mean_conc",
    "circ_summary",
    "crps_circular",
    "diagnostics",
    "fit",
    "forecast",
    "increment_loglik",
    "j_function",
    "krige_many",
    "krige_spacetime",
    "krige_static",
    "make_splits",
    "rayleigh_test",
    "score_models",
    "simulate",
    "sn_pdf",
    "sn_sample",
    "trig_moments_closed",
    "trig_moments_mc",
    "wrap",
    "wsn_pdf",
    "wsn_sample",
]
