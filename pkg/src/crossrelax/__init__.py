"""Cross-relaxation between NV and P1 centers in diamond.

Spin Hamiltonians and a Jacobi eigensolver, level-crossing resonance search
and peak clustering, NV-P1 pair polarization dynamics, and ODMR lineshape
fitting.
"""

__version__ = "0.1.0"

from .spin import (FieldVector, NV_PARAMS, OFF_AXIS, ON_AXIS, Orientation, P1_PARAMS, SpinSystemParams,
                   electronic_hamiltonian, hamiltonian, nv_hamiltonian, p1_hamiltonian, rotate_field)
from .eigen import (ConvergenceError, EigenSystem, LevelSweep, TransitionLine, eigensolve, find_gslac,
                    jacobi_eigh, level_sweep, transition_table)
from .resonance import (LevelPair, PeakCluster, ResonanceConfig, ResonanceMatch, classify_delta_m,
                        cluster_peaks, match_resonance, nv_nv_resonances, resonance_table)
from .dynamics import (DipoleGeometry, DriveParams, DynamicsResult, dipolar_hamiltonian, evolve,
                       evolve_full_oracle, initial_state, rotating_frame, thermal_polarization,
                       total_hamiltonian, cw_hamiltonian)
from .odmr import (FitError, LorentzianPeaksRegressor, OdmrSpectrum, PeakProfileFit, TripleLorentzianFit,
                   TripleLorentzianRegressor, contrast, fit_peak_profile, fit_triple_lorentzian,
                   hyperfine_spacing, synthesize_spectrum)
