"""Fractional Laplacian ball kernels, Dirichlet solvers and verification checks."""
from .errors import (CensoringExcess, DiagonalError, DomainError, EmptyDomain, FracLapError,
                     IntegrabilityError, NoContraction, NonConvergence, NotOnBoundary,
                     SingularPoint, ToleranceNotMet)
from .kernels import FracParams, make_params
from .domain import Ball, Domain, domain_from_json
from .fields import ScalarField
from .quadrature import QuadConfig
from .solver import WalkConfig, WalkEstimate, UniquenessVerdict

__version__ = "0.1.0"

__all__ = [
    "Ball", "CensoringExcess", "DiagonalError", "Domain", "DomainError", "EmptyDomain", "FracLapError",
    "FracParams", "IntegrabilityError", "NoContraction", "NonConvergence", "NotOnBoundary", "QuadConfig",
    "ScalarField", "SingularPoint", "ToleranceNotMet", "UniquenessVerdict", "WalkConfig", "WalkEstimate",
    "domain_from_json", "make_params",
]
