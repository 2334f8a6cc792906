"""SU(2)-resolved exact diagonalization of Heisenberg chains, with the full
statistics of reduced matrix elements in the joint eigenbasis."""

from .spin_algebra import (CgKey, HalfInt, SpinDomainError,
                           UpsilonUndefinedError, cg, cg_asymptotic, cg_exact,
                           upsilon, upsilon_asymptotic)
from .coupled_basis import (CoupledBasisVector, CouplingPath, SectorBasis,
                            SectorLayout, build_basis_vector, enumerate_paths,
                            multiplicity, sector_basis, sector_codes,
                            spin_sectors)
from .model_ops import (ModelSpec, PauliStringOperator, TensorFamily,
                        TensorOpSpec, build_hamiltonian, builtin_tensor_family,
                        builtin_tensor_op, commutator, compose_tensor,
                        spin_vector_family, total_spin_operators)
from .spectral import (BlockSpectrum, ReducedElementTable, SpectrumCache,
                       block_matrix, compute_block_spectrum, diagonalize_block,
                       matrix_element, reduced_elements)
from .eth_stats import (DosTable, EnergyWindow, FScanResult, GapRatioResult,
                        VarianceRatioResult, VarianceSweep, band_data,
                        diag_residual_stats, f_magnitude, gap_ratios,
                        offdiag_window_stats, p_goe, sample_goe,
                        variance_ratio, variance_ratio_sector)
from .consistency import (IdentityReport, cg_asymptotic_scan,
                          check_composition_identity,
                          check_upsilon_independence, check_wigner_eckart)
from .cli_pipeline import PipelineConfig

__version__ = "0.1.0"
