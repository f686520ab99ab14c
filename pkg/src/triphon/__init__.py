"""triphon: flux-mediated tripartite transmon-beam circuit simulation.

Two transmon qubits couple through a capacitor shunting a SQUID with an
embedded mechanical beam; an in-plane field makes the coupler Josephson
energy motion-dependent, producing a tuneable three-body interaction.  The
package derives all coupling strengths from the raw circuit values, evolves
the open system under a Lindblad model, and executes/plans ground-state
cooling and multi-phonon state-synthesis protocols.
"""

from .circuit import (CircuitParams, CouplingSet, DerivedQuantities,
                      cancellation_capacitance, coupling_sweep, couplings,
                      derive_static, ej_from_frequency, josephson_energy,
                      mass_from_xzpf)
from .fock import (DensityState, Operator, SpaceDescriptor, default_space,
                   destroy, embed, expectation, ket, number, parity, projector,
                   pure_state, thermal_state)
from .hamiltonian import (DrivePulse, PulseSchedule, Segment, TermFlags,
                          TimeDependentHamiltonian, build_static, ideal_gate,
                          swap_matrix_element)
from .lindblad import (DissipationSet, Trajectory, apply_excite, apply_gate,
                       apply_measurement, apply_reset, evolve, make_dissipators)
from .analysis import (WignerGrid, density_matrix_export, fidelity,
                       partial_trace, state_fidelity, wigner, wigner_laguerre)
from .protocols import (CoolingConfig, ProtocolResult, SimContext,
                        make_context, plan_arbitrary_state,
                        plan_distribution_state, recursion_step,
                        robustness_sweep, run_cooling, run_fock,
                        run_superposition)

__version__ = "0.1.0"
