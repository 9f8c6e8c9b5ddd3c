"""Locally private subset-count estimation.

Randomized-index protocols (one sampled position of the category encoding
per user, with adaptive dummy padding) alongside value-perturbation
baselines, an exact privacy auditor, and a reproducible benchmark harness.
"""

from .audit import AuditVerdict, audit, audit_cri, audit_criad, audit_rr_index, default_battery
from .baselines import NVP_VARIANTS, PspRunResult, nvp_run, psp_run, rr_index_run
from .bench import (
    ALL_METHODS,
    ConfigError,
    EstimateRecord,
    ExperimentConfig,
    SummaryRow,
    load_dataset,
    mre,
    param_study,
    parse_config,
    run_experiment,
    summarize,
    write_results,
)
from .core import (
    Category,
    Dataset,
    ItemDomain,
    RngStream,
    category_counts,
    category_size,
    derive_generator,
    filter_and_encode,
    generate_synthetic,
    load_transactions,
    normalize_itemset,
    pi_distribution,
    save_transactions,
    true_subset_count,
)
from .cri import CriParams, CriReport, cri_aggregate, cri_client, cri_sample_reports, cri_variance_bound
from .criad import (
    CriadReport,
    CriadRunResult,
    ParamTriple,
    criad_aggregate,
    criad_client,
    criad_run,
    estimate_pi_pipeline,
    expected_bias,
    implied_epsilon,
    select_params,
    variance_bound,
)

__version__ = "0.1.0"

__all__ = [
    "ALL_METHODS",
    "AuditVerdict",
    "Category",
    "ConfigError",
    "CriParams",
    "CriReport",
    "CriadReport",
    "CriadRunResult",
    "Dataset",
    "EstimateRecord",
    "ExperimentConfig",
    "ItemDomain",
    "NVP_VARIANTS",
    "ParamTriple",
    "PspRunResult",
    "RngStream",
    "SummaryRow",
    "audit",
    "audit_cri",
    "audit_criad",
    "audit_rr_index",
    "category_counts",
    "category_size",
    "cri_aggregate",
    "cri_client",
    "cri_sample_reports",
    "cri_variance_bound",
    "criad_aggregate",
    "criad_client",
    "criad_run",
    "default_battery",
    "derive_generator",
    "estimate_pi_pipeline",
    "expected_bias",
    "filter_and_encode",
    "generate_synthetic",
    "implied_epsilon",
    "load_dataset",
    "load_transactions",
    "mre",
    "normalize_itemset",
    "nvp_run",
    "param_study",
    "parse_config",
    "pi_distribution",
    "psp_run",
    "rr_index_run",
    "run_experiment",
    "save_transactions",
    "select_params",
    "summarize",
    "true_subset_count",
    "variance_bound",
    "write_results",
]
