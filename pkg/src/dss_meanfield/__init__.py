"""Mean-field download-time analysis for storage systems with replicated and
erasure-coded files under server failures."""
from ._backend import BACKEND
from .distributions import (DistributionError, PhaseTypeDist, ShiftedDist, hyperexp_from, ph_ccdf,
                            ph_mean, ph_pdf, ph_sample)
from .meanfield import (SolverError, StepSizeError, UnconvergedTailError, UnstableSystemError,
                        WorkloadCurve, default_step, h_kernel, mean_workload, solve_dde, solve_ide)
from .response import (ResponseCurve, class_response_ccdf, class_shares, conditional_weights,
                       mean_response, order_stat_ccdf, overall_response_ccdf, response_ccdf_jk)
from .storage_model import (ConfigError, FileClass, SystemConfig, availability_pmf, loss_probability,
                            stability_check, system_load)

__version__ = "0.1.0"
