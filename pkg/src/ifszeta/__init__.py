"""Matrix-valued Gibbs measures, pressure, dynamical zeta functions and
Lyapunov-weighted orbit counts for affine iterated function systems."""

from .errors import (BudgetError, ConfigError, DegenerateCylinderError,
                     NonconvergenceError, NondegeneracyError, NumericRangeError)
from .exterior import (PushForwardFamily, QFormBasis, SymBasis, hilbert_metric,
                       hs_inner, hs_norm, product_hilbert_metric,
                       pullback_matrix, push_forward, push_forward_family,
                       push_forward_t, qform_basis, sym_basis)
from .ifs import (AffineMap, CodedPoint, IfsSpec, NdEstimate, affine_map,
                  attractor_diameter, check_nd, code_point, dyadic_interval,
                  harmonic_gasket, ifs_spec, rotation_family, rotation_pair)
from .lyapunov import (CocycleState, LyapEstimate, OseledetsResult,
                       cocycle_product, hs_angle, lyap_matrix,
                       oseledets_projection)
from .orbits import (CountingTables, EulerZeta, OrbitData, OrbitRecord,
                     RationalZeta, SeriesZeta, asymptotic_report,
                     counting_tables, enumerate_orbits, find_real_pole,
                     fit_geometric_error, fix_sum, line_scan, orbit_record,
                     rescale_counts, zeta_euler, zeta_minus_v,
                     zeta_minus_v_logderiv, zeta_rational, zeta_series)
from .symbolic import (HolderFamily, Potential, birkhoff_sum, birkhoff_sums,
                       fix_points, fix_points_block, lyndon_count,
                       lyndon_words, rotate, tail_weighted_family,
                       truncate_to_memory, words_array)
from .transfer import (BlockOperator, CylinderMeasure, SpectralResult,
                       VariationalReport, build_block_operator,
                       cone_contraction_sample, conditional_prob, cylinder_kappa,
                       cylinder_mu, density_m, perron, pressure, pressure_root,
                       sample_kappa, solve, variational_value)

__version__ = "0.1.0"
