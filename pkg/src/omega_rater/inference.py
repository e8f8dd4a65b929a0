"""Dirichlet-multinomial posteriors over a cluster's rating probabilities.

With a Dirichlet prior and multinomial counts the posterior is
``Dirichlet(prior + counts)`` in closed form. A random-walk Metropolis
sampler over that posterior is provided as well; it reproduces the sampled
histograms and is checked against the closed form.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from .errors import InvariantError

DEFAULT_HDI_MASS = 0.94
TARGET_ACCEPT = 0.30  # adaptation aims at the middle of 0.25-0.40


@dataclass(frozen=True)
class RatingCounts:
    counts: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "counts", tuple(int(c) for c in self.counts))
        if len(self.counts) < 2:
            raise ValueError("need at least 2 rating categories")
        if any(c < 0 for c in self.counts):
            raise ValueError("counts must be non-negative")

    @property
    def n(self) -> int:
        return sum(self.counts)

    @property
    def scale(self) -> int:
        return len(self.counts)

    @classmethod
    def from_ratings(cls, ratings, rating_scale: int = 5) -> "RatingCounts":
        counts = [0] * rating_scale
        for r in ratings:
            if r is None:
                continue
            if not 1 <= r <= rating_scale:
                raise ValueError(f"rating {r} outside 1..{rating_scale}")
            counts[r - 1] += 1
        return cls(tuple(counts))


def uniform_prior(rating_scale: int = 5) -> np.ndarray:
    return np.ones(rating_scale)


def _prior(counts: RatingCounts, prior) -> np.ndarray:
    p = uniform_prior(counts.scale) if prior is None else np.asarray(prior, dtype=float)
    if p.shape != (counts.scale,):
        raise ValueError(f"prior has shape {p.shape}, expected ({counts.scale},)")
    if not np.all(p > 0) or not np.all(np.isfinite(p)):
        raise ValueError("prior components must be positive and finite")
    return p


def conjugate_posterior(counts: RatingCounts, prior=None) -> np.ndarray:
    """Posterior Dirichlet parameters ``prior + counts``."""
    return _prior(counts, prior) + np.asarray(counts.counts, dtype=float)


def posterior_mean(params) -> np.ndarray:
    params = np.asarray(params, dtype=float)
    return params / params.sum()


def _log_target(z: np.ndarray, params: np.ndarray) -> np.ndarray:
    # z = log(y) with y_i ~ Gamma(params_i) independent; softmax(z) ~ Dirichlet(params).
    # log Gamma density (params-1)*z - exp(z), plus log|dy/dz| = z.
    return ((params - 1.0) * z - np.exp(z) + z).sum(axis=-1)


def softmax(z: np.ndarray) -> np.ndarray:
    e = np.exp(z - z.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


@dataclass
class MCMCResult:
    samples: np.ndarray  # (n_samples, R), chains stacked in order
    acceptance_rate: list[float]  # per chain, post burn-in
    step_size: list[float]  # per chain, after adaptation
    ess: list[float]  # per rating category, summed over chains
    n_chains: int
    burn_in: int
    thin: int
    seed: int

    def diagnostics(self) -> dict:
        return {
            "n_chains": self.n_chains,
            "burn_in": self.burn_in,
            "thin": self.thin,
            "seed": self.seed,
            "acceptance_rate": self.acceptance_rate,
            "step_size": self.step_size,
            "ess": self.ess,
        }


def mcmc_sample(counts: RatingCounts, prior=None, n_samples: int = 20000, burn_in: int = 2000,
                seed: int = 42, n_chains: int = 4, thin: int = 2) -> MCMCResult:
    """Random-walk Metropolis draws from ``Dirichlet(prior + counts)``.

    The chain lives on R unconstrained log-coordinates mapped to the simplex
    by softmax. Proposals are spherical Gaussians; during burn-in each chain
    tunes its step size toward 30% acceptance, after which the step is
    frozen. ``n_samples`` draws are split evenly over ``n_chains`` chains,
    each with its own seed spawned from ``seed``.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    if burn_in < 0 or thin < 1 or n_chains < 1:
        raise ValueError("burn_in must be >= 0, thin and n_chains >= 1")
    params = conjugate_posterior(counts, prior)
    R = len(params)
    per_chain = -(-n_samples // n_chains)
    n_iter = burn_in + per_chain * thin

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_chains)]
    noise = np.stack([g.standard_normal((n_iter, R)) for g in rngs], axis=1)  # (iter, chain, R)
    log_u = np.log(np.stack([g.random(n_iter) for g in rngs], axis=1))  # (iter, chain)

    z = np.tile(np.log(params), (n_chains, 1))  # mode of each log-Gamma coordinate
    lp = _log_target(z, params)
    # log-Gamma(a) has sd ~ 1/sqrt(a) for large a; start from the tightest coordinate
    log_step = np.full(n_chains, math.log(2.38 / math.sqrt(R) * min(1.0, 1.0 / math.sqrt(params.max()))))
    out = np.empty((per_chain, n_chains, R))
    accepted = np.zeros(n_chains)
    k = 0
    for t in range(n_iter):
        prop = z + np.exp(log_step)[:, None] * noise[t]
        lp_prop = _log_target(prop, params)
        if not np.all(np.isfinite(lp_prop) | (lp_prop == -np.inf)):
            raise InvariantError(f"non-finite log density at iteration {t}")
        acc = log_u[t] < lp_prop - lp
        z = np.where(acc[:, None], prop, z)
        lp = np.where(acc, lp_prop, lp)
        if t < burn_in:
            log_step += (acc - TARGET_ACCEPT) / (1.0 + t) ** 0.6
        else:
            accepted += acc
            if (t - burn_in) % thin == thin - 1:
                out[k] = z
                k += 1

    draws = softmax(out)  # (per_chain, chain, R)
    chains = np.transpose(draws, (1, 0, 2))
    samples = np.concatenate([c[: _chain_share(n_samples, n_chains, i)] for i, c in enumerate(chains)])
    if not np.all(samples >= 0) or np.max(np.abs(samples.sum(axis=1) - 1.0)) > 1e-9:
        raise InvariantError("MCMC draw left the simplex")
    ess = [float(sum(effective_sample_size(c[:, j]) for c in chains)) for j in range(R)]
    n_post = n_iter - burn_in
    return MCMCResult(
        samples=samples,
        acceptance_rate=[float(a) / n_post for a in accepted] if n_post else [0.0] * n_chains,
        step_size=[float(s) for s in np.exp(log_step)],
        ess=ess,
        n_chains=n_chains,
        burn_in=burn_in,
        thin=thin,
        seed=seed,
    )


def _chain_share(n_samples: int, n_chains: int, i: int) -> int:
    base, extra = divmod(n_samples, n_chains)
    return base + (1 if i < extra else 0)


def effective_sample_size(x: np.ndarray) -> float:
    """ESS of one chain via Geyer's initial positive sequence on the autocorrelation."""
    x = np.asarray(x, dtype=float)
    n = len(x)
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = x @ x / n
    if var == 0:
        return float(n)
    f = np.fft.rfft(x, 2 * n)
    acf = np.fft.irfft(f * np.conj(f))[:n] / (n * var)
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0:
            break
        tau += 2.0 * pair
    return float(n / max(tau, 1e-12))


def hdi(x: np.ndarray, mass: float = DEFAULT_HDI_MASS) -> tuple[float, float]:
    """Narrowest interval containing ``mass`` of the draws."""
    s = np.sort(np.asarray(x, dtype=float))
    n = len(s)
    k = max(1, int(math.ceil(mass * n)))
    if k >= n:
        return float(s[0]), float(s[-1])
    widths = s[k - 1:] - s[: n - k + 1]
    i = int(np.argmin(widths))
    return float(s[i]), float(s[i + k - 1])


def beta_hdi(a: float, b: float, mass: float = DEFAULT_HDI_MASS) -> tuple[float, float]:
    """Narrowest interval of ``Beta(a, b)`` holding ``mass`` probability."""
    dist = stats.beta(a, b)
    if a <= 1 or b <= 1:  # monotone or U-shaped density: interval hugs the heavy end
        if a <= 1 and b > 1:
            return 0.0, float(dist.ppf(mass))
        if b <= 1 and a > 1:
            return float(dist.ppf(1 - mass)), 1.0
        if a == 1 and b == 1:
            return 0.0, mass
    res = optimize.minimize_scalar(lambda p: dist.ppf(p + mass) - dist.ppf(p),
                                   bounds=(0.0, 1.0 - mass), method="bounded",
                                   options={"xatol": 1e-10})
    lo = float(dist.ppf(res.x))
    return lo, float(dist.ppf(res.x + mass))


def tail_probabilities(samples: np.ndarray, hi: int = 4, lo: int = 2) -> dict:
    """Posterior probability that a member's rating is ``>= hi`` / ``<= lo``.

    Averages ``sum(theta[r] for r >= hi)`` over the draws (likewise for lo).
    """
    samples = np.asarray(samples, dtype=float)
    R = samples.shape[1]
    for name, v in (("hi", hi), ("lo", lo)):
        if not 1 <= v <= R:
            raise ValueError(f"{name}={v} outside 1..{R}")
    upper = samples[:, hi - 1:].sum(axis=1)
    lower = samples[:, :lo].sum(axis=1)
    return {
        "hi": hi,
        "lo": lo,
        "p_rating_ge_hi": float(upper.mean()),
        "p_rating_le_lo": float(lower.mean()),
        "p_rating_ge_hi_sd": float(upper.std()),
        "p_rating_le_lo_sd": float(lower.std()),
    }


def analytic_tail_probabilities(params, hi: int = 4, lo: int = 2) -> dict:
    params = np.asarray(params, dtype=float)
    R = len(params)
    for name, v in (("hi", hi), ("lo", lo)):
        if not 1 <= v <= R:
            raise ValueError(f"{name}={v} outside 1..{R}")
    total = params.sum()
    return {
        "hi": hi,
        "lo": lo,
        "p_rating_ge_hi": float(params[hi - 1:].sum() / total),
        "p_rating_le_lo": float(params[:lo].sum() / total),
    }


@dataclass
class RatingPosterior:
    prior: np.ndarray
    counts: RatingCounts
    posterior_params: np.ndarray
    summary: dict
    tail_probs: dict
    mcmc: MCMCResult | None = None
    extra: dict = field(default_factory=dict)

    @property
    def samples(self) -> np.ndarray | None:
        return None if self.mcmc is None else self.mcmc.samples

    def to_dict(self) -> dict:
        d = {
            "prior": self.prior.tolist(),
            "counts": list(self.counts.counts),
            "n": self.counts.n,
            "posterior_params": self.posterior_params.tolist(),
            "summary": self.summary,
            "tail_probabilities": self.tail_probs,
        }
        if self.mcmc is not None:
            d["chain_diagnostics"] = self.mcmc.diagnostics()
        d.update(self.extra)
        return d


def infer_ratings(counts: RatingCounts, prior=None, *, hdi_mass: float = DEFAULT_HDI_MASS,
                  hi: int = 4, lo: int = 2, n_samples: int = 20000, burn_in: int = 2000,
                  seed: int = 42, n_chains: int = 4, thin: int = 2,
                  run_mcmc: bool = True) -> RatingPosterior:
    """Closed-form summaries plus (optionally) MCMC draws for one cluster."""
    if not 0 < hdi_mass < 1:
        raise ValueError("hdi_mass must lie in (0, 1)")
    p = _prior(counts, prior)
    params = p + np.asarray(counts.counts, dtype=float)
    mean = posterior_mean(params)
    total = params.sum()
    per_rating = []
    for r, (a, m) in enumerate(zip(params, mean), start=1):
        lo_i, hi_i = beta_hdi(a, total - a, hdi_mass)
        per_rating.append({"rating": r, "mean": float(m), "hdi": [lo_i, hi_i]})
    summary = {"hdi_mass": hdi_mass, "analytic": per_rating}
    tails = {"analytic": analytic_tail_probabilities(params, hi, lo)}
    mc = None
    if run_mcmc:
        mc = mcmc_sample(counts, p, n_samples=n_samples, burn_in=burn_in, seed=seed,
                         n_chains=n_chains, thin=thin)
        summary["mcmc"] = [
            {"rating": r, "mean": float(mc.samples[:, r - 1].mean()),
             "hdi": list(hdi(mc.samples[:, r - 1], hdi_mass))}
            for r in range(1, len(params) + 1)
        ]
        tails["mcmc"] = tail_probabilities(mc.samples, hi, lo)
    return RatingPosterior(p, counts, params, summary, tails, mc)
