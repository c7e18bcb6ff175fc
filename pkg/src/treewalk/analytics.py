"""
Trial-count model of the movement search and the step-schedule regression.

The trial model assumes each measurement lands on the live root->F path
with probability ``p`` and, given that, uniformly on one of its edges.
Measuring coordinate x leaves a path of M - x + 2 edges.

The step model is eps(N, M) = A(M) * N**B(M) degrees with
A(M) = alpha * M**beta and B(M) = rho + gamma * M, and U(N, M) = 90 / eps.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import InsufficientData, InvalidParameters, InvalidSequence


@dataclass(frozen=True)
class TrialModel:
    M: int
    p: float

    def __post_init__(self):
        if self.M < 1:
            raise InvalidParameters("M must be >= 1")
        if not 0.0 < self.p <= 1.0:
            raise InvalidParameters("p must lie in (0, 1]")

    @property
    def log_ratio(self) -> float:
        """ln((M+2)/2), the integral of 1/(M-x+2) over [0, M]."""
        return math.log((self.M + 2) / 2)


def p_sequence(model: TrialModel, xs: Sequence[int]) -> float:
    """Probability of measuring the on-path coordinates ``xs`` in order."""
    M, p = model.M, model.p
    xs = list(xs)
    if not xs:
        raise InvalidSequence("empty measurement sequence")
    if any(x < 1 or x > M + 1 for x in xs):
        raise InvalidSequence(f"coordinates must lie in [1, {M + 1}]")
    if any(b < a for a, b in zip(xs, xs[1:])):
        raise InvalidSequence("coordinates must be non-decreasing")
    prob = p ** len(xs) / (M + 1)
    for x in xs[:-1]:
        prob /= M - x + 2
    return prob


def _nested_sums(M: int, depth: int) -> tuple[float, float]:
    """(mantissa, log-scale) of sum_{x1<=...<=xk<=M} prod 1/(M - x_j + 2) for k = depth."""
    if depth == 0:
        return 1.0, 0.0
    inv = 1.0 / (M + 2 - np.arange(1, M + 1, dtype=float))
    h = inv.copy()
    log_scale = 0.0
    for _ in range(depth - 1):
        h = np.cumsum(h) * inv
        top = h.max()
        h /= top
        log_scale += math.log(top)
    return float(h.sum()), log_scale


def p_succ(model: TrialModel, y: int, mode: str = "exact") -> float:
    """Probability the edge into F is first measured on trial ``y``.

    ``exact`` evaluates the nested sums by a cumulative-sum recurrence;
    ``closed`` is the integral approximation, both evaluated in log space.
    """
    if y < 1:
        raise InvalidParameters("trial index y must be >= 1")
    M, p = model.M, model.p
    if mode == "exact":
        mant, log_scale = _nested_sums(M, y - 1)
        if mant == 0.0:
            return 0.0
        return math.exp(y * math.log(p) - math.log(M + 1) + log_scale + math.log(mant))
    if mode == "closed":
        if y == 1:
            return p / (M + 1)
        return math.exp(
            y * math.log(p) + (y - 1) * math.log(model.log_ratio)
            - math.lgamma(y) - math.log(M + 1)
        )
    raise InvalidParameters(f"unknown mode {mode!r}")


def p_find(model: TrialModel, z: int, mode: str = "exact") -> float:
    """Probability of finding F within ``z`` trials; ``asymptotic`` gives p(M+2)/(2(M+1))."""
    if mode == "asymptotic":
        return model.p * (model.M + 2) / (2 * (model.M + 1))
    if z < 0:
        raise InvalidParameters("z must be >= 0")
    if mode == "exact":
        return math.fsum(p_succ_series(model, z))
    return math.fsum(p_succ(model, y, mode) for y in range(1, z + 1))


def p_succ_series(model: TrialModel, z: int) -> np.ndarray:
    """Exact P_succ(1..z) from one pass of the nested-sum recurrence."""
    M, p = model.M, model.p
    out = np.zeros(z)
    if z == 0:
        return out
    out[0] = p / (M + 1)
    inv = 1.0 / (M + 2 - np.arange(1, M + 1, dtype=float))
    h = inv.copy()
    log_scale = 0.0
    for y in range(2, z + 1):
        if y > 2:
            h = np.cumsum(h) * inv
        top = h.max()
        if top == 0.0:
            break
        h /= top
        log_scale += math.log(top)
        out[y - 1] = math.exp(y * math.log(p) - math.log(M + 1) + log_scale + math.log(h.sum()))
    return out


def plateau_trials(M: int, factor: float = 5.0) -> int:
    return math.ceil(factor * math.log((M + 2) / 2))


def simulate_trials(model: TrialModel, runs: int, max_trials: int, rng) -> np.ndarray:
    """Monte Carlo of the idealised trial model.

    Returns, per run, the trial on which F was found, or 0 if an off-path
    measurement occurred first or F was not found within ``max_trials``.
    """
    M, p = model.M, model.p
    out = np.zeros(runs, dtype=np.int64)
    for r in range(runs):
        lo = 1
        for trial in range(1, max_trials + 1):
            if rng.random() >= p:
                break
            x = lo + int(rng.integers(M + 2 - lo))
            if x == M + 1:
                out[r] = trial
                break
            lo = x
    return out


def analytics_table(Ms: Iterable[int], ps: Iterable[float], max_y: int) -> list[dict]:
    rows = []
    for M in Ms:
        for p in ps:
            model = TrialModel(M, p)
            for y in range(1, max_y + 1):
                rows.append({
                    "M": M, "p": p, "y": y,
                    "p_succ_exact": p_succ(model, y, "exact"),
                    "p_succ_closed": p_succ(model, y, "closed"),
                })
    return rows


def analytics_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    cols = ["M", "p", "y", "p_succ_exact", "p_succ_closed"]
    w.writerow(cols)
    for row in rows:
        w.writerow([row[c] if isinstance(row[c], int) else repr(float(row[c])) for c in cols])
    return buf.getvalue()


# -- step model ---------------------------------------------------------------

@dataclass(frozen=True)
class StepModel:
    alpha: float
    beta: float
    rho: float
    gamma: float
    max_n: int = 15
    max_m: int = 15
    residuals: dict = field(default_factory=dict, compare=False, repr=False)

    def epsilon(self, N: float, M: float) -> float:
        """Dominant eigenangle in degrees."""
        return self.alpha * M ** self.beta * N ** (self.rho + self.gamma * M)

    def steps(self, N: int, M: int) -> int:
        return u_steps(self, N, M)


REFERENCE_STEP_MODEL = StepModel(alpha=47.87, beta=-0.551, rho=0.077, gamma=-0.498)


def u_steps(sm: StepModel, N: int, M: int) -> int:
    """Prescribed unitary steps before a path measurement, round(90 / eps), at least 1."""
    return max(1, int(round(90.0 / sm.epsilon(N, M))))


def _linfit(x, y) -> tuple[float, float]:
    """Unweighted least squares y = a + b x; returns (a, b)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.unique(x).size < 2:
        raise InsufficientData("need at least two distinct abscissae for a fit")
    A = np.column_stack([np.ones_like(x), x])
    (a, b), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(a), float(b)


def fit_step_model(samples: Iterable[tuple[int, int, float]]) -> StepModel:
    """Two-stage power-law fit of (N, M, theta in degrees) samples."""
    by_m: dict[int, list[tuple[int, float]]] = {}
    for N, M, theta in samples:
        if theta <= 0:
            raise InvalidParameters("eigenangles must be positive")
        by_m.setdefault(int(M), []).append((int(N), float(theta)))
    if len(by_m) < 2:
        raise InsufficientData("need at least two distinct M values")
    Ms = sorted(by_m)
    A, B = [], []
    for M in Ms:
        pts = by_m[M]
        logA, b = _linfit([math.log(n) for n, _ in pts], [math.log(t) for _, t in pts])
        A.append(math.exp(logA))
        B.append(b)
    log_alpha, beta = _linfit(np.log(Ms), np.log(A))
    rho, gamma = _linfit(Ms, B)
    model = StepModel(
        alpha=math.exp(log_alpha), beta=beta, rho=rho, gamma=gamma,
        max_n=max(n for pts in by_m.values() for n, _ in pts), max_m=max(Ms),
    )
    resid = {
        f"{N},{M}": model.epsilon(N, M) / theta - 1.0
        for M in Ms for N, theta in by_m[M]
    }
    return StepModel(model.alpha, model.beta, model.rho, model.gamma,
                     model.max_n, model.max_m, resid)


def fit_report(model: StepModel, grid: dict) -> dict:
    res = model.residuals
    return {
        "schema_version": 1,
        "units": "degrees",
        "alpha": model.alpha,
        "beta": model.beta,
        "rho": model.rho,
        "gamma": model.gamma,
        "grid": grid,
        "residuals": res,
        "max_abs_relative_residual": max((abs(v) for v in res.values()), default=0.0),
    }


def eigenangle_samples(Ns: Iterable[int], Ms: Iterable[int]) -> list[tuple[int, int, float]]:
    from .reduced import eigensystem, reduced_engine

    out = []
    for M in Ms:
        for N in Ns:
            _, op = reduced_engine(N, M)
            out.append((N, M, eigensystem(op).theta_lambda_degrees))
    return out
