"""Random direction vectors: sampling, exact moments, and the kernel scale.

Perturbation directions are i.i.d. across coordinates, drawn from one of
three families (gaussian, laplace, student_t).  The fourth moment must be
finite because the shared-direction kernel scale is V[z_i^2] + d*E^2[z_i^2];
for a zero-mean gaussian that evaluates to (d+2)*sigma^4.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, MomentError, UnsupportedError

FAMILIES = ("gaussian", "laplace", "student_t")


class SampleMode(enum.Enum):
    """Whether the loss direction z and the tangent direction zeta are
    drawn separately (INDEPENDENT) or are one and the same vector (SHARED)."""

    INDEPENDENT = "independent"
    SHARED = "shared"


@dataclass(frozen=True)
class DirectionSpec:
    """Distribution of one direction vector with i.i.d. components.

    mean is applied per component (a constant shift of the whole vector).
    scale is sigma for gaussian, the diversity b for laplace, and must be
    1 for student_t, whose only free parameter is dof (> 4 so that the
    fourth moment exists).
    """

    family: str
    dim: int
    mean: float = 0.0
    scale: float = 1.0
    dof: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigError(f"unknown direction family {self.family!r}")
        if self.dim < 1:
            raise ConfigError(f"direction dim must be >= 1, got {self.dim}")
        if not self.scale > 0:
            raise ConfigError(f"direction scale must be > 0, got {self.scale}")
        if self.family == "student_t":
            if self.dof is None or not self.dof > 4:
                raise ConfigError(
                    "student_t directions need dof > 4 for a finite fourth "
                    f"moment, got {self.dof}"
                )
            if self.scale != 1.0:
                raise ConfigError("student_t directions use unit scale; vary dof instead")
        elif self.dof is not None:
            raise ConfigError(f"dof only applies to student_t, not {self.family}")


@dataclass(frozen=True)
class Moments:
    """Exact per-component moments: E[z], E[z^2], E[z^4], and V[z^2]."""

    m1: float
    m2: float
    m4: float

    @property
    def var_sq(self) -> float:
        return self.m4 - self.m2**2


def sample(spec: DirectionSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw one direction vector of length spec.dim from spec.

    Repeating the call with an identically seeded generator reproduces the
    vector bit-for-bit.
    """
    if spec.family == "gaussian":
        return rng.normal(spec.mean, spec.scale, spec.dim)
    if spec.family == "laplace":
        return rng.laplace(spec.mean, spec.scale, spec.dim)
    return rng.standard_t(spec.dof, spec.dim) + spec.mean


def exact_moments(spec: DirectionSpec) -> Moments:
    """Closed-form m1, m2, m4 for one component of spec.

    Central moments used: gaussian (s^2, 3s^4); laplace (2b^2, 24b^4);
    student_t with unit scale (v/(v-2), 3v^2/((v-2)(v-4))).  A nonzero mean
    shifts them through the binomial expansion; odd central moments vanish
    for all three (symmetric) families.
    """
    mu = spec.mean
    if spec.family == "gaussian":
        c2 = spec.scale**2
        c4 = 3.0 * spec.scale**4
    elif spec.family == "laplace":
        c2 = 2.0 * spec.scale**2
        c4 = 24.0 * spec.scale**4
    else:
        v = spec.dof
        if v is None or v <= 4:
            raise MomentError(f"student_t fourth moment undefined for dof={v}")
        c2 = v / (v - 2.0)
        c4 = 3.0 * v**2 / ((v - 2.0) * (v - 4.0))
    m2 = c2 + mu**2
    m4 = c4 + 6.0 * mu**2 * c2 + mu**4
    return Moments(m1=mu, m2=m2, m4=m4)


def kernel_scale(spec: DirectionSpec, d: int | None = None) -> float:
    """V[z_i^2] + d * E^2[z_i^2]: the factor multiplying the Gram matrix
    when a single shared direction drives both perturbation and tangent
    estimation.  Requires a zero-mean spec; gaussian gives (d+2)*sigma^4.
    """
    if spec.mean != 0.0:
        raise UnsupportedError("kernel scale is defined for zero-mean directions only")
    if d is None:
        d = spec.dim
    m = exact_moments(spec)
    return m.var_sq + d * m.m2**2


def match_scale(target: float, family: str, d: int) -> DirectionSpec:
    """Invert kernel_scale: return the zero-mean spec of the given family
    whose kernel scale at dimension d equals target.

    gaussian: (d+2)*s^4 = target; laplace: (20+4d)*b^4 = target.
    student_t is not supported (dof moves second and fourth moments
    together, so a single closed-form inversion does not exist).
    """
    if not target > 0:
        raise ConfigError(f"target kernel scale must be > 0, got {target}")
    if family == "gaussian":
        s = (target / (d + 2.0)) ** 0.25
        return DirectionSpec("gaussian", dim=d, mean=0.0, scale=s)
    if family == "laplace":
        b = (target / (20.0 + 4.0 * d)) ** 0.25
        return DirectionSpec("laplace", dim=d, mean=0.0, scale=b)
    raise UnsupportedError(f"match_scale supports gaussian and laplace, not {family!r}")
