"""Certified H2-norm upper bounds from noisy trajectory data.

Builds the exact LFT parametrization of every LTI system consistent with
finitely many noisy samples (errors-in-variables: bounded noise on both
regressor and regressand) and certifies an H2-norm upper bound for the whole
set, hence for the unknown true system, by solving a single SDP.
"""

from .analysis import (AnalysisLft, H2Certificate, VerificationReport,
                       assemble_analysis_lft, assemble_h2_sdp,
                       build_analysis_regression, solve_h2_bound,
                       verify_certificate, weighted_right_inverse)
from .bench import (ExperimentConfig, RunRecord, SummaryRow, SummaryTable,
                    emit_csv, run_montecarlo, run_single, summarize)
from .data import (CleanTrajectory, NoiseBounds, NoiseRecord, NoisyDataset,
                   read_dataset, read_system, write_dataset, write_system)
from .exceptions import (DataFormatError, EivError, RankDeficientError,
                         UnstableSystemError, WellPosednessError)
from .lti import LtiSystem, h2_norm, spectral_radius, true_h2
from .regression import (RegressionLft, StructuredRegression, build_lft,
                         check_data_rank, check_signal_to_noise, close_lft,
                         consistency_residual, right_inverse_moore_penrose,
                         right_inverse_weighted)
from .sdp import (ConicProblem, CongruenceTerm, LmiConstraint, Solution,
                  StandardConicProgram, lower, smat, solve, svec)
from .simulate import closed_loop_h2, corrupt, example_system, simulate
from .uncertainty import (MembershipReport, MultiplierFamily, QmiSource,
                          UncertaintySet, membership, multiplier_matrix,
                          reduce_source, sample_delta, scalar_interval,
                          spectral_ball, stack_sources)

__version__ = "0.1.0"
