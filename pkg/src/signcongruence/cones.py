"""Nulls of the form ``(mu1, mu2) in C or -C`` for a full-dimensional origin cone ``C``.

With ``C`` spanned by ``b1`` and ``b2``, the base change ``A = [b1 b2]^-1`` maps
``C`` onto the positive quadrant, so the null becomes ``nu1 * nu2 >= 0`` for
``nu = A mu`` and the quadrant machinery applies with covariance ``A S A'``.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .calibration import CalibrationConfig
from .normal_math import Covariance2
from .procedures import EstimatePair, NullDirection, TestOutcome, recommended_test

__all__ = ["Cone2", "DegenerateCone", "cone_basis_change", "transform_estimates", "cone_test"]


class DegenerateCone(ValueError):
    """Spanning vectors are (numerically) collinear."""


@dataclass(frozen=True)
class Cone2:
    b1: tuple[float, float]
    b2: tuple[float, float]
    A: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        b1 = tuple(float(v) for v in self.b1)
        b2 = tuple(float(v) for v in self.b2)
        if len(b1) != 2 or len(b2) != 2:
            raise ValueError("spanning vectors must have two components")
        n1, n2 = np.hypot(*b1), np.hypot(*b2)
        if n1 == 0 or n2 == 0:
            raise DegenerateCone("spanning vectors must be nonzero")
        basis = np.column_stack([b1, b2])
        det = np.linalg.det(basis)
        if abs(det) <= 1e-10 * n1 * n2:
            raise DegenerateCone(f"spanning vectors {b1} and {b2} are collinear (det={det:.3g})")
        object.__setattr__(self, "b1", b1)
        object.__setattr__(self, "b2", b2)
        object.__setattr__(self, "A", np.linalg.inv(basis))

    def contains(self, point) -> bool:
        """Membership in ``C`` via nonnegative coordinates in the spanning basis."""
        coords = self.A @ np.asarray(point, dtype=float)
        return bool(np.all(coords >= 0))


def cone_basis_change(b1, b2) -> Cone2:
    return Cone2(tuple(b1), tuple(b2))


def transform_estimates(est: EstimatePair, cone: Cone2) -> EstimatePair:
    """Estimates and covariance expressed in the cone's coordinates."""
    A = cone.A
    nu = A @ np.array([est.mu1_hat, est.mu2_hat])
    sigma = A @ est.cov.matrix @ A.T
    assert sigma[0, 0] > 0 and sigma[1, 1] > 0, "transformed variance must be positive"
    return replace(est, mu1_hat=float(nu[0]), mu2_hat=float(nu[1]), cov=Covariance2.from_matrix(sigma))


def cone_test(est: EstimatePair, cone: Cone2, alpha: float = 0.05, direction=NullDirection.CONGRUENT,
              config: CalibrationConfig | None = None) -> TestOutcome:
    """Recommended test in the cone's coordinates."""
    nu = transform_estimates(est, cone)
    out = recommended_test(nu, alpha, direction, config)
    diag = dict(out.diagnostics, rho_nu=nu.cov.rho, nu1=nu.mu1_hat, nu2=nu.mu2_hat)
    return replace(out, test_name="cone", diagnostics=diag)
