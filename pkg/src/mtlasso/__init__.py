"""Group-sparse solvers and width reduction for shallow ReLU layers.

The package provides: multi-task lasso solvers (penalized and exactly
constrained), the convex-combination support reduction that realizes the
rank-product width bound, variation-norm utilities for networks viewed
as atomic measures, an exhaustive-search oracle with randomized
support-size experiments, a deterministic shallow-network trainer, and a
layer-by-layer network compressor. All randomness flows through keyed
counter streams, so every result is reproducible from explicit seeds.
"""

from .caratheodory import (BoundsReport, ReductionError, ReductionTrace, check_bounds,
                           column_space_check, general_position_check, reduce)
from .container import (ContainerError, TensorContainer, TensorRecord, export_csv,
                        read_container, write_container)
from .linalg import (NonFiniteError, RankReport, ShapeError, SvdError, as_matrix,
                     frobenius_norm, matmul, numerical_rank, row_space_contained,
                     stack_rows, svd)
from .nets import (ABS, LINEAR, RELU, Activation, AtomicMeasure, AtomicNet, Neuron,
                   ZeroInputWeightError, augment, evaluate, leaky_relu, measure_norm,
                   merge_neurons, net_from_container, net_to_container, normalize,
                   objective, path_norm, rebalance, to_measure, variation_norm,
                   weight_cost)
from .oracle import (ExperimentError, HistogramResult, InstanceSpec, OracleResult,
                     exhaustive_min_support, histogram_experiment, random_instance)
from .rng import Stream, derive_key, mix64
from .solver import (ConstrainedSolveError, InfeasibleError, MtlProblem, Solution,
                     SolverConfig, SolverDivergedError, block_soft_threshold,
                     kkt_residual, solve_constrained, solve_regularized, support)
from .trainer import (TeacherSpec, TrainConfig, TrainingDivergedError, active_neurons,
                      balance_gap, generate_teacher_data, init_student,
                      neuron_coordinates, shared_fraction, train)
from .compressor import (CompressionReport, LayerSnapshot, VerificationReport,
                         compress_layer, compress_network, extract_features,
                         make_probe_inputs, snapshots_from_network, verify_compression)
from .network import (Network, init_network, make_blob_dataset, network_from_container,
                      network_to_container, train_network)

__version__ = "0.1.0"
