"""Balance-law residuals and covariance experiments."""

from .free import (free_balance_report, micro_covariance_experiment, residual_angular_free,
                   residual_doyle_ericksen, residual_linear_momentum, residual_mass,
                   residual_micro_doyle_ericksen, residual_micro_inertia,
                   residual_micro_linear_momentum, spatial_covariance_experiment)
from .gnr import GNRResult, bracket, gnr_experiment
from .material import MaterialTensors, material_covariance_conditions, material_transform_tensors
from .quadrature import SubBody, flux_integral, volume_integral
from .report import (BalanceReport, BodyLoads, FlowSpec, LawResult, general_spatial, micro_flow,
                     polynomial_field, random_polynomial_coeffs, rigid_rotation, rigid_translation)
from .scs import (generalized_report, residual_connection_identity, residual_generalized_covariance,
                  residual_micro_tensor_momentum, residual_scs_angular, residual_scs_doyle_ericksen,
                  residual_scs_linear_momentum, scs_balance_report, scs_rhs, scs_tensor)
