"""Randomized verification sweeps for the pointwise and algebraic inequalities.

Each sweep draws a large batch of random tensors or scalars, evaluates both
sides of one inequality, and counts violations at a relative slack of 1e-12.
Margins are measured relative to the larger side so the checks are scale
free; the sampling mixes standard normal draws with clipped heavy-tailed ones
to probe near-degenerate regimes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "InequalitySweep",
    "check_appendix",
    "check_tensor_lipschitz",
    "check_young_type",
    "check_mu_bounds",
    "sweeps_to_csv",
]

REL_SLACK = 1e-12


@dataclass(frozen=True)
class InequalitySweep:
    name: str
    samples: int
    violations: int
    worst_slack: float
    empirical_constant: float | None
    seed: int
    details: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        out = {
            "name": self.name,
            "samples": self.samples,
            "violations": self.violations,
            "worst_slack": self.worst_slack,
            "empirical_constant": self.empirical_constant,
            "seed": self.seed,
        }
        if self.details:
            out["details"] = self.details
        return out


def sweeps_to_csv(sweeps: list[InequalitySweep]) -> str:
    lines = ["name,samples,violations,worst_slack,empirical_constant"]
    for s in sweeps:
        c = "" if s.empirical_constant is None else f"{s.empirical_constant:.17g}"
        lines.append(f"{s.name},{s.samples},{s.violations},{s.worst_slack:.17g},{c}")
    return "\n".join(lines) + "\n"


def _mixed_normal(rng: np.random.Generator, shape: tuple[int, ...]) -> np.ndarray:
    """Half standard normal, half clipped Cauchy, to hit heavy-tailed regimes."""
    out = rng.standard_normal(shape)
    heavy = rng.random(shape[0]) < 0.5
    cauchy = np.clip(rng.standard_cauchy(shape), -1e3, 1e3)
    out[heavy] = cauchy[heavy]
    return out


def _rel_margins(lhs: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """(rhs - lhs) / max(|lhs|, |rhs|, tiny): negative means a violation."""
    scale = np.maximum(np.maximum(np.abs(lhs), np.abs(rhs)), 1e-300)
    return (rhs - lhs) / scale


def check_appendix(samples: int, seed: int, N: int = 2, n: int = 3) -> InequalitySweep:
    """Check |sum_i cubic_i lap_i| <= |grad|^2 |hess| |lap| on random tensors.

    Also checks the intermediate bound |b|^2 <= |lap|^2 |grad|^2 for the
    vector b_j = (d_j v) . lap v.  Hessian draws are symmetrized in their two
    spatial slots before use.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    G = _mixed_normal(rng, (samples, N, n))
    H = _mixed_normal(rng, (samples, N, n, n))
    H = 0.5 * (H + np.swapaxes(H, -1, -2))
    lap = np.einsum("skjj->sk", H)

    contracted = np.einsum("skl,skjl->sj", G, H)
    cubic = np.einsum("sj,sij->si", contracted, G)
    I = np.einsum("si,si->s", cubic, lap)

    g2 = np.einsum("skl,skl->s", G, G)
    hmag = np.sqrt(np.einsum("skjl,skjl->s", H, H))
    lmag = np.sqrt(np.einsum("sk,sk->s", lap, lap))
    main = _rel_margins(np.abs(I), g2 * hmag * lmag)

    b = np.einsum("skj,sk->sj", G, lap)
    b2 = np.einsum("sj,sj->s", b, b)
    inter = _rel_margins(b2, lmag**2 * g2)

    margins = np.concatenate([main, inter])
    with np.errstate(invalid="ignore", divide="ignore"):
        const = float(np.nanmax(np.abs(I) / np.maximum(g2 * hmag * lmag, 1e-300)))
    return InequalitySweep(
        name="appendix_cubic_bound",
        samples=samples,
        violations=int((margins < -REL_SLACK).sum()),
        worst_slack=float(margins.min()),
        empirical_constant=const,
        seed=seed,
        details={"N": N, "n": n},
    )


def check_tensor_lipschitz(
    samples: int,
    seed: int,
    p: float,
    mu_list: list[float],
    scale: float = 1.0,
) -> InequalitySweep:
    """Track the best constant in the flux difference bound across mu values.

    For random tensor pairs (A, B) the ratio
    |(mu+|A|)^{p-2}A - (mu+|B|)^{p-2}B| * (mu+|A|+|B|)^{2-p} / |A-B|
    is recorded per mu; the per-mu suprema must agree within a factor 2 for
    the constant to count as mu-independent.  ``scale`` jointly rescales
    (A, B, mu), under which the ratio is exactly invariant.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    rng = np.random.default_rng(seed)
    N, n = 2, 3
    A = _mixed_normal(rng, (samples, N, n)) * scale
    B = _mixed_normal(rng, (samples, N, n)) * scale
    na = np.sqrt(np.einsum("sij,sij->s", A, A))
    nb = np.sqrt(np.einsum("sij,sij->s", B, B))
    diff = np.sqrt(np.einsum("sij,sij->s", A - B, A - B))
    ok = diff > 1e-300

    per_mu: dict[float, float] = {}
    for mu in mu_list:
        mu_s = mu * scale
        WA = (mu_s + na)[:, None, None] ** (p - 2.0) * A
        WB = (mu_s + nb)[:, None, None] ** (p - 2.0) * B
        lhs = np.sqrt(np.einsum("sij,sij->s", WA - WB, WA - WB))
        ratio = lhs[ok] * (mu_s + na + nb)[ok] ** (2.0 - p) / diff[ok]
        per_mu[mu] = float(ratio.max())

    sups = list(per_mu.values())
    stability = max(sups) / min(sups)
    return InequalitySweep(
        name="flux_difference_lipschitz",
        samples=samples,
        violations=int(stability > 2.0),
        worst_slack=float(2.0 - stability),
        empirical_constant=float(max(sups)),
        seed=seed,
        details={
            "p": p,
            "scale": scale,
            "per_mu_suprema": {repr(mu): v for mu, v in per_mu.items()},
            "stability_ratio": stability,
        },
    )


def check_young_type(samples: int, seed: int, p: float) -> InequalitySweep:
    """Check x^{2-p} y <= x + y^{1/(p-1)} for log-uniform positive pairs."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    rng = np.random.default_rng(seed)
    x = 10.0 ** rng.uniform(-6, 6, samples)
    y = 10.0 ** rng.uniform(-6, 6, samples)
    lhs = x ** (2.0 - p) * y
    rhs = x + y ** (1.0 / (p - 1.0))
    margins = _rel_margins(lhs, rhs)
    return InequalitySweep(
        name="young_type_product_split",
        samples=samples,
        violations=int((margins < -REL_SLACK).sum()),
        worst_slack=float(margins.min()),
        empirical_constant=None,
        seed=seed,
        details={"p": p},
    )


def check_mu_bounds(samples: int, seed: int, p: float, mu: float) -> InequalitySweep:
    """Check the two mu-dependent scalar bounds on the flux exponent.

    First, (mu+t)^{2-p} <= 1 + t^{2-p} for t >= 0, valid for mu <= 1; second,
    |(mu+|a|)^{2-p} - (mu+|b|)^{2-p}| <= ((2-p)/mu^{p-1}) |a-b|, valid for
    mu > 0.  Both run on the same draw; sub-sweeps are reported separately in
    the details.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    if not 1.0 < p <= 2.0:
        raise ValueError(f"p must lie in (1, 2], got {p}")
    if mu > 1.0:
        raise ValueError(
            f"mu = {mu} > 1: the bound (mu+t)^(2-p) <= 1 + t^(2-p) needs mu <= 1"
        )
    if mu <= 0.0:
        raise ValueError(f"mu = {mu} <= 0: the Lipschitz bound needs mu > 0")
    rng = np.random.default_rng(seed)
    N, n = 2, 3
    a = _mixed_normal(rng, (samples, N, n))
    b = _mixed_normal(rng, (samples, N, n))
    na = np.sqrt(np.einsum("sij,sij->s", a, a))
    nb = np.sqrt(np.einsum("sij,sij->s", b, b))
    dab = np.sqrt(np.einsum("sij,sij->s", a - b, a - b))

    upper = _rel_margins((mu + na) ** (2.0 - p), 1.0 + na ** (2.0 - p))
    lip = _rel_margins(
        np.abs((mu + na) ** (2.0 - p) - (mu + nb) ** (2.0 - p)),
        (2.0 - p) / mu ** (p - 1.0) * dab,
    )

    def sub(name: str, margins: np.ndarray) -> dict:
        return {
            "name": name,
            "samples": samples,
            "violations": int((margins < -REL_SLACK).sum()),
            "worst_slack": float(margins.min()),
        }

    sub_upper = sub("mu_upper_bound", upper)
    sub_lip = sub("mu_lipschitz", lip)
    margins = np.concatenate([upper, lip])
    return InequalitySweep(
        name="mu_bounds",
        samples=samples,
        violations=sub_upper["violations"] + sub_lip["violations"],
        worst_slack=float(margins.min()),
        empirical_constant=None,
        seed=seed,
        details={"p": p, "mu": mu, "sub_sweeps": [sub_upper, sub_lip]},
    )
