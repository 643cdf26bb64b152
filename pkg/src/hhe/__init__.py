"""Asymptotic and Monte Carlo analysis of household SIR epidemics."""

from .asymptotics import (
    AsymptoticSummary,
    clt_variance,
    final_size,
    outbreak_probability,
    r_star,
    summarize,
    sweep,
    z_hom,
    z_star_threshold,
)
from .contact_models import (
    Constant,
    ContactModel,
    Exponential,
    Gamma,
    IndependentBinomial,
    IndependentPoisson,
    JointTable,
    MixedPoisson,
    PointMass,
    SwappedModel,
    joint_pgf,
    load_model,
    local_pgf,
    log_convexity_report,
    model_from_dict,
    moments,
    swap,
    weighted_local_pgf,
)
from .gontcharoff import (
    Mode,
    NumericalInstability,
    emanating_pgf,
    gont_polys,
    household_moments,
    susceptibility_pmf,
)
from .simulator import EpidemicOutcome, OutcomeBatch, PopulationSpec, run_batch, run_epidemic
from .stats import BatchSummary, classify_and_estimate, ks_statistic

__version__ = "0.1.0"
