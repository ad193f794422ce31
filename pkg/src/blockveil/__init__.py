"""blockveil: block-sparsity based private communication, simulated end to end.

A transmitter hides a message's support pattern inside a secret partition
of the signal indices.  The legitimate receiver decodes with a block-aware
program; a structure-blind receiver provably struggles in the same regime.
Reusing the secret across many transmissions leaks it through fourth-order
output moments, which the bundled spectral-clustering attack exploits.
"""

from ._version import __version__
from .channel import (ChannelMatrix, CoherenceReport, FourthOrderMatrices,
                      coherence_check, fourth_order_matrices,
                      fourth_order_naive, gamma_constant,
                      gen_gaussian_channel, gen_isotropic_channel,
                      load_channel, save_channel)
from .protocol import (BPSK, GAUSSIAN, BlockStructure, SignalSpec,
                       TransmissionConfig, activation_for_beta, encode,
                       indicator_matrix, load_signals, random_block_structure,
                       redundancy_beta, save_signals, sigma2_for_snr,
                       snapshot_seeds, snapshots, snr, snr_db, transmit)
from .recovery import (RecoverySolution, SolverOptions, basis_pursuit,
                       ber_bpsk, block_basis_pursuit, block_greedy,
                       recovery_success)
from .eavesdrop import (CovarianceModel, DebiasContext, MomentEstimate,
                        analytic_covariance, debias, eavesdrop,
                        empirical_covariance, greedy_kmeans,
                        hadamard_square_transform, leading_eigenvectors,
                        load_moment_estimate, mean_z, sample_mean_covariance,
                        save_moment_estimate, structure_free_term,
                        structures_equal)
from .baseline import (HoeffdingCurve, OutputMixture, gaussian_kl_matrix,
                       hoeffding_rate, output_mixture, swap_candidates,
                       variational_kl)
from .experiments import (ChartSpec, ExperimentConfig, ResultTable,
                          emit_charts, load_config, make_config,
                          parse_config_text, preset, run_scenario,
                          write_outputs)

__all__ = [name for name in dir() if not name.startswith("_")]
