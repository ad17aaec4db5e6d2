"""Data-driven thermal predictors and heat-pump energy models for demand flexibility."""

__version__ = "0.1.0"

from .errors import (AlignmentError, DimensionError, EmptyDataError, FlexDemandError,
                     InsufficientDataError, OrderingError, SchemaError, SingularMatrixError)
from .trajectory import TrajectoryData, build_trajectory_data, hankel
from .predictors import (FLPredictor, MultiStepPredictor, OneStepPredictor, fit_fl, fit_multi_step,
                         fit_one_step, fl_predict, load_predictor, predict_multi_step,
                         predict_one_step, rollout_one_step, save_predictor)
from .solvers import least_squares, pinball_loss, quantile_regression, solve_l1l2_equality
from .energy import EnergyModel, HourlyRecord, HPSetting, feature, fit_energy, predict_energy
from .economics import PenaltySchedule, PriceSeries, peak_penalty, spot_cost, total_cost
from .evaluation import ErrorStats, EvalConfig, error_histogram, report, rolling_eval
from .synthetic import LTISystem, prbs, random_stable_lti, rc_house, simulate
from .ingest import IOTable, SignalSeries, align, parse_csv, resample
