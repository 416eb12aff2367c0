"""Retrospective estimation of a volatility change point in a discretely
observed Ito process by quasi-maximum likelihood."""
from .contrast import ContrastProfile, contrast_profile, g_increment, segment_contrast
from .estimate import EstimationConfig, TwoStageFit, changepoint_argmin, fit_theta_segment, two_stage_estimate
from .limitlaw import cdf_F, density_f, sample_caseA, sample_caseB, studentize
from .mc import McSummary, run_studentized_experiment, run_table_experiment
from .model import VolatilityModel, cir, eval_Q, eval_S, eval_Xi, get_model, model1
from .simulate import ObservedSeries, Scenario, read_csv, simulate_path, table_scenario, write_csv

__version__ = "0.1.0"
