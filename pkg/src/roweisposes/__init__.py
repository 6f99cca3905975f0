"""Roweisposes: Roweis discriminant analysis pose subspaces and discrete HMMs
for 3D skeletal action recognition."""

from .errors import (
    ConfigError,
    DataError,
    DegenerateSkeletonError,
    FitError,
    IndefiniteConstraintError,
    InvalidDimensionError,
    NumericalError,
    ParseError,
    ProtocolError,
    RoweisposesError,
    SchemaError,
)
from .geigen import GeneralizedEigenResult, center_columns, centering_matrix, regularize, solve_generalized_eig
from .hmm import ActionModelBank, DiscreteHmm, TrainReport, baum_welch, classify_action, forward_loglik, viterbi
from .pose import PoseDecision, WindowingConfig, recognize_pose, window_filter
from .rda import LabeledMatrix, LabelKernel, RdaModel, RoweisFactors, fit, project, supervision_level
from .skeleton import Frame, PreprocessConfig, Sequence, preprocess, vectorize

__version__ = "0.1.0"
