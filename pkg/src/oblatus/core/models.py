from __future__ import annotations

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Literal, Optional

import numpy as np

if TYPE_CHECKING:
    from oblatus.core.rng import RngStream

SampleMethod = Literal["parameter", "rejection", "ball-scaling", "circle-diagnostic", "disk-diagnostic"]
ConstantMethod = Literal["mc5d", "reduced3d"]
ExponentMode = Literal["circle", "interior", "ball"]
CurveKind = Literal["tail", "overlap"]


@dataclass(frozen=True)
class ShapeParam:
    """Vertical semi-axis ``a`` of E = {x1²+x2²+x3²/a² <= 1}.

    a = 0 and a = 1 are the degenerate diagnostic shapes (disk / unit ball).
    """

    a: float

    def __post_init__(self) -> None:
        a = float(self.a)
        if not np.isfinite(a) or a < 0.0 or a > 1.0:
            raise ValueError(f"invalid shape a={self.a}")
        object.__setattr__(self, "a", a)

    @property
    def degenerate(self) -> bool:
        return self.a == 0.0 or self.a == 1.0

    def require_interior(self) -> None:
        if self.degenerate:
            raise ValueError(f"shape a={self.a} is degenerate, need 0<a<1")


@dataclass(frozen=True)
class Point3:
    x1: float
    x2: float
    x3: float

    def as_array(self) -> np.ndarray:
        return np.array([self.x1, self.x2, self.x3], dtype=np.float64)

    @classmethod
    def from_array(cls, v) -> Point3:
        return cls(float(v[0]), float(v[1]), float(v[2]))


@dataclass(frozen=True)
class EquatorialCoords:
    theta: float  # [0, 2π)
    delta: float  # radial defect 1-(x1²+x2²)
    w: float      # x3 / a, |w| <= sqrt(delta)


@dataclass(frozen=True)
class LocalCoords:
    s: float
    sp: float
    y: float
    yp: float
    tau: float

    def in_region(self) -> bool:
        return self.s >= 0.0 and self.sp >= 0.0 and self.y * self.y <= self.s and self.yp * self.yp <= self.sp


@dataclass(frozen=True)
class PairDeficit:
    value: float
    pair: tuple[int, int]


@dataclass(frozen=True, eq=False)
class SampleBatch:
    points: np.ndarray  # (n, 3) float64
    shape: ShapeParam
    method: SampleMethod
    stream: RngStream
    proposals: Optional[int] = None  # rejection sampler only

    def __len__(self) -> int:
        return int(self.points.shape[0])

    @property
    def acceptance_rate(self) -> Optional[float]:
        if not self.proposals:
            return None
        return len(self) / self.proposals


@dataclass(frozen=True)
class DiameterResult:
    m_n: float
    pair: tuple[int, int]
    pairs_examined: int
    n: int

    @property
    def deficit(self) -> float:
        return 2.0 - self.m_n


@dataclass(frozen=True)
class NearDiametralCount:
    t: float
    eps: float
    count: int
    pairs: list[tuple[int, int]] = field(default_factory=list)
    deficits: list[PairDeficit] = field(default_factory=list)  # same order as pairs


@dataclass(frozen=True)
class ConstantEstimate:
    value: float
    std_error: float
    method: ConstantMethod
    a: float
    budget: int
    error_estimate: float = 0.0   # reduced3d: |Q(2g) - Q(g)|
    converged: bool = True
    shell_hits: int = 0           # mc5d: hits within 1e-9 of the box boundary

    @property
    def error_bar(self) -> float:
        return self.std_error + self.error_estimate


@dataclass(frozen=True)
class LimitLaw:
    lambda_a: float
    a: float

    @property
    def k_a(self) -> float:
        return 2.0 * self.lambda_a


@dataclass(frozen=True)
class ConstantCertificate:
    mc5d: ConstantEstimate
    reduced3d: ConstantEstimate
    difference: float
    combined_error: float
    agree: bool
    law: LimitLaw


@dataclass(frozen=True, eq=False)
class TailCurve:
    kind: CurveKind
    a: float
    eps_grid: np.ndarray
    prob_estimates: np.ndarray
    std_errors: np.ndarray
    hits: np.ndarray
    n_pairs: int
    fitted_slope: float
    fitted_intercept: float
    excluded: list[float] = field(default_factory=list)
    clipped: int = 0
    n_outer: int = 0
    n_inner: int = 0
    joint_hits: np.ndarray | None = None  # overlap only: sum of k(k-1) over outer points


@dataclass(frozen=True, eq=False)
class PoissonSummary:
    a: float
    n: int
    t_grid: np.ndarray
    replications: int
    counts: np.ndarray          # (replications, len(t_grid))
    mean_count: np.ndarray
    var_count: np.ndarray
    zero_fraction: np.ndarray
    pmf_table: list[list[float]]
    lambda_theory: np.ndarray
    tv_distance: np.ndarray
    rescaled_deficits: np.ndarray
    chain_check: bool


@dataclass(frozen=True, eq=False)
class LimitLawReport:
    a: float
    n: int
    replications: int
    rescaled_deficits: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    theory: LimitLaw
    empirical_median: float
    theory_median: float
    ks_statistic_tail_lambda: Optional[float] = None


@dataclass(frozen=True, eq=False)
class ExponentReport:
    a_mode: ExponentMode
    a: float
    n_grid: np.ndarray
    replications: int
    mean_deficits: np.ndarray
    fitted_exponent: float
    expected_exponent: float


@dataclass(frozen=True, eq=False)
class ChenSteinRecord:
    a: float
    t: float
    n_grid: np.ndarray
    eps_n: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    b1_scaled: np.ndarray      # b1 * n
    b2_scaled: np.ndarray      # b2 * n^(1/7)
    b1_spread: float           # max/min of b1_scaled
    b2_spread: float
