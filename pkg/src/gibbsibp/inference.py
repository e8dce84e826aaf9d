"""Blocked MCMC for the linear-Gaussian latent feature model.

Data model: Y = (W o Z) A + eps with eps_{ij} ~ N(0, sigma_Y^2), weights
W_{ik} ~ N(0, sigma_W^2), loadings A_{kj} ~ N(0, sigma_{A,j}^2), and Z a
Gibbs-type feature allocation.  The sampler touches the allocation prior
only through PrimitiveCache values, so every model variant runs through
the same sweep: per-element Z updates, a Metropolis-Hastings move on each
row's singleton dishes, conjugate W/A updates, a conjugate gamma update,
and slice moves for the remaining hyperparameters.
"""

import csv
import json
import math
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from scipy import special

from .gibbs_weights import (
    GibbsModel,
    NggWeightSampler,
    build_primitive_cache,
    primitive_cache_content_hash,
    weight_table_content_hash,
    weight_table_from_sampler,
)
from .ibp import FeatureAllocation, simulate_ibp
from .ibp import log_joint as allocation_log_joint
from .special_functions import build_gfc_table, log_rising_factorial

_LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Priors:
    """Hyperpriors: gamma ~ Gamma(lambda1, rate=lambda2); alpha ~ uniform(0,1);
    theta + alpha ~ Exp(1) (beta ~ Exp(1) for the tilted variants); variances
    ~ inverse-gamma(1, 1)."""

    lambda1: float = 1.0
    lambda2: float = 1.0


@dataclass
class ChainConfig:
    """Sweep counts, initial scales, and which blocks to update.

    update_theta covers the second model parameter: theta for DP/PY, beta
    for NGG/NIG.  mc_samples sizes the frozen-draw sampler behind NGG/NIG
    weight rebuilds.
    """

    iterations: int = 1000
    burn_in: int = 0
    thin: int = 1
    seed: int = 0
    priors: Priors = field(default_factory=Priors)
    update_gamma: bool = True
    update_alpha: bool = False
    update_theta: bool = False
    update_scales: bool = False
    sigma_y: float = 1.0
    sigma_w: float = 1.0
    sigma_a: float = 1.0
    gamma_init: float = None
    mc_samples: int = 20_000
    chain_id: int = 0


class LatentFactorState:
    """Mutable chain state; Z is kept raw (columns in arbitrary order) and
    exposed as an order-of-appearance FeatureAllocation on demand.

    Invariants: W is n x K, A is K x p, all scales strictly positive.
    """

    def __init__(self, model, z, w, a, sigma_y, sigma_w, sigma_a, gamma, rng):
        z = np.array(z, dtype=np.uint8, order="C")  # owned, writable copy
        w = np.asarray(w, dtype=float)
        a = np.asarray(a, dtype=float)
        if z.ndim != 2:
            raise ValueError("Z must be a matrix")
        n, k = z.shape
        if w.shape != (n, k):
            raise ValueError(f"W must be {n} x {k}, got {w.shape}")
        if a.ndim != 2 or a.shape[0] != k:
            raise ValueError(f"A must have {k} rows, got {a.shape}")
        sigma_a = np.asarray(sigma_a, dtype=float)
        if sigma_a.shape != (a.shape[1],):
            raise ValueError("sigma_A must hold one scale per data column")
        if sigma_y <= 0 or sigma_w <= 0 or np.any(sigma_a <= 0):
            raise ValueError("scales must be strictly positive")
        if gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {gamma}")
        self.model = model
        self.z = z
        self.w = w
        self.a = a
        self.sigma_y = float(sigma_y)
        self.sigma_w = float(sigma_w)
        self.sigma_a = sigma_a.copy()
        self.gamma = float(gamma)
        self.rng = rng
        self.mc_samples = 20_000
        self.cache = None
        self.sampler = None
        self.table = None
        self.gfc = None

    @property
    def n(self):
        return self.z.shape[0]

    @property
    def dishes(self):
        return self.z.shape[1]

    @property
    def p(self):
        return self.a.shape[1]

    @property
    def allocation(self):
        return FeatureAllocation.from_matrix(self.z, self.gamma)

    def refresh_cache(self, sampler_seed=None):
        """Rebuild tables/caches for the current (alpha, theta-or-beta).

        For the Monte Carlo variants a sampler_seed redraws the frozen
        auxiliary draws; otherwise the existing ones are reused.
        """
        n = self.n
        if self.model.is_closed_form:
            self.cache = build_primitive_cache(self.model, n)
            return
        alpha = self.model.stable_index
        if self.gfc is None or abs(self.gfc.alpha - alpha) > 1e-15:
            self.gfc = build_gfc_table(max(n - 1, 1), alpha)
        if self.sampler is None or sampler_seed is not None or self.sampler.alpha != alpha:
            if sampler_seed is None:
                sampler_seed = int(self.rng.integers(2 ** 63))
            self.sampler = NggWeightSampler(alpha, n, self.mc_samples, sampler_seed)
        self.table = weight_table_from_sampler(self.sampler, self.model.beta)
        self.cache = build_primitive_cache(self.model, n, table=self.table, gfc=self.gfc)


def log_likelihood(y, z, w, a, sigma_y):
    """Gaussian log likelihood of Y given the factorization.

    -(np/2) log(2 pi) - np log sigma_Y - ||Y - (W o Z) A||_F^2 / (2 sigma_Y^2).

    Args:
        y: n x p data matrix.
        z: FeatureAllocation or binary matrix.
        w: n x K weights.
        a: K x p loadings.
        sigma_y: noise scale, > 0.
    """
    if sigma_y <= 0:
        raise ValueError(f"sigma_y must be positive, got {sigma_y}")
    z = getattr(z, "matrix", z)
    y = np.asarray(y, dtype=float)
    n, p = y.shape
    resid = y - (w * z) @ a
    return float(
        -0.5 * n * p * _LOG_2PI
        - n * p * math.log(sigma_y)
        - float((resid * resid).sum()) / (2.0 * sigma_y ** 2)
    )


def synthesize_data(n, p, z_true, scales, seed):
    """Draw Y = (W o Z) A + eps from the generative model at a fixed Z.

    Args:
        n, p: data dimensions (must match z_true's rows).
        z_true: FeatureAllocation or binary matrix with n rows.
        scales: mapping with sigma_y, sigma_w, sigma_a (scalar or p-vector).
        seed: RNG seed.
    """
    z = np.asarray(getattr(z_true, "matrix", z_true), dtype=float)
    if z.shape[0] != n:
        raise ValueError(f"z_true must have {n} rows, got {z.shape[0]}")
    k = z.shape[1]
    sigma_a = np.broadcast_to(np.asarray(scales["sigma_a"], dtype=float), (p,))
    rng = np.random.default_rng(seed)
    w = rng.normal(0.0, scales["sigma_w"], size=(n, k))
    a = rng.standard_normal((k, p)) * sigma_a
    return (w * z) @ a + rng.normal(0.0, scales["sigma_y"], size=(n, p))


def gamma_posterior(k_n, priors, cache):
    """(shape, rate) of the conjugate gamma update given K_n dishes."""
    rate = priors.lambda2 + float(cache.g11[: cache.n].sum())
    return priors.lambda1 + k_n, rate


def _z_log_prior(counts, n, gamma, model, cache):
    # same quantity as ibp.log_joint, taken from raw dish counts
    k_n = len(counts)
    if k_n == 0:
        base = 0.0
    elif gamma == 0.0:
        return -math.inf
    else:
        base = k_n * math.log(gamma)
    total = base - gamma * float(cache.g11[:n].sum())
    alpha = model.stable_index
    for s in sorted(int(s) for s in counts):
        total += log_rising_factorial(1.0 - alpha, s - 1) + cache.log_gs1_for(s)
    return total


def slice_sample(log_density, x0, rng, width=1.0, max_steps=100):
    """One univariate slice-sampling update (stepping out, then shrinkage)."""
    f0 = log_density(x0)
    if not np.isfinite(f0):
        raise ValueError(f"slice sampler started outside the support (f({x0}) = {f0})")
    log_level = f0 - rng.exponential()
    left = x0 - width * rng.random()
    right = left + width
    steps = int(max_steps)
    while steps > 0 and log_density(left) > log_level:
        left -= width
        steps -= 1
    steps = int(max_steps)
    while steps > 0 and log_density(right) > log_level:
        right += width
        steps -= 1
    while True:
        x1 = left + (right - left) * rng.random()
        if log_density(x1) > log_level:
            return x1
        if x1 < x0:
            left = x1
        else:
            right = x1


def _resample_z(state, y):
    # per-element conditional for dishes some other row also takes;
    # row singletons belong to the singleton move
    n = state.n
    if n < 2 or state.dishes == 0:
        return
    alpha = state.model.stable_index
    g10 = state.cache.g10_for(n)
    counts = state.z.sum(axis=0).astype(np.int64)
    resid = y - (state.w * state.z) @ state.a
    inv_two_var = 1.0 / (2.0 * state.sigma_y ** 2)
    for i in range(n):
        row_resid = resid[i]
        for k in range(state.dishes):
            s_minus = counts[k] - state.z[i, k]
            if s_minus == 0:
                continue
            prior_take = (s_minus - alpha) * g10
            if not 0.0 <= prior_take <= 1.0:
                raise ValueError(
                    "dish-take prior left [0, 1]; the primitives are corrupt"
                )
            shift = state.w[i, k] * state.a[k]
            if state.z[i, k]:
                r_on = row_resid
                r_off = row_resid + shift
            else:
                r_off = row_resid
                r_on = row_resid - shift
            log_odds = (
                math.log(prior_take)
                - math.log1p(-prior_take)
                + (float(r_off @ r_off) - float(r_on @ r_on)) * inv_two_var
            ) if prior_take < 1.0 else math.inf
            take = state.rng.random() < special.expit(log_odds)
            if take != bool(state.z[i, k]):
                counts[k] += 1 if take else -1
                state.z[i, k] = take
            row_resid = r_on if take else r_off
        resid[i] = row_resid


def _singleton_move(state, y):
    # replace each row's solely-owned dishes with a Poisson-many fresh set;
    # the prior and proposal cancel, leaving the likelihood ratio
    n = state.n
    rate = state.gamma * state.cache.g11_for(n)
    inv_two_var = 1.0 / (2.0 * state.sigma_y ** 2)
    p = state.p
    for i in range(n):
        counts = state.z.sum(axis=0)
        own = (counts == 1) & (state.z[i] == 1)
        k_new = int(state.rng.poisson(rate))
        if not own.any() and k_new == 0:
            continue
        w_new = state.rng.normal(0.0, state.sigma_w, size=k_new)
        a_new = state.rng.standard_normal((k_new, p)) * state.sigma_a
        row_resid = y[i] - (state.w[i] * state.z[i]) @ state.a
        without_own = row_resid + (state.w[i][own] @ state.a[own])
        proposed = without_own - (w_new @ a_new if k_new else 0.0)
        log_ratio = (
            float(row_resid @ row_resid) - float(proposed @ proposed)
        ) * inv_two_var
        if math.log(state.rng.random()) >= log_ratio:
            continue
        keep = ~own
        fresh_z = np.zeros((n, k_new), dtype=np.uint8)
        fresh_z[i] = 1
        fresh_w = state.rng.normal(0.0, state.sigma_w, size=(n, k_new))
        fresh_w[i] = w_new
        state.z = np.ascontiguousarray(
            np.concatenate([state.z[:, keep], fresh_z], axis=1)
        )
        state.w = np.concatenate([state.w[:, keep], fresh_w], axis=1)
        state.a = np.concatenate([state.a[keep], a_new], axis=0)


def _resample_w(state, y):
    n = state.n
    var_y = state.sigma_y ** 2
    for i in range(n):
        active = np.nonzero(state.z[i])[0]
        inactive = state.z[i] == 0
        if inactive.any():
            state.w[i, inactive] = state.rng.normal(
                0.0, state.sigma_w, size=int(inactive.sum())
            )
        if active.size == 0:
            continue
        a_act = state.a[active]
        precision = a_act @ a_act.T / var_y + np.eye(active.size) / state.sigma_w ** 2
        chol = np.linalg.cholesky(precision)
        mean = np.linalg.solve(precision, a_act @ y[i] / var_y)
        noise = np.linalg.solve(chol.T, state.rng.standard_normal(active.size))
        state.w[i, active] = mean + noise


def _resample_a(state, y):
    k = state.dishes
    if k == 0:
        return
    var_y = state.sigma_y ** 2
    x = state.w * state.z
    xtx = x.T @ x / var_y
    xty = x.T @ y / var_y
    eye = np.eye(k)
    for j in range(state.p):
        precision = xtx + eye / state.sigma_a[j] ** 2
        chol = np.linalg.cholesky(precision)
        mean = np.linalg.solve(precision, xty[:, j])
        noise = np.linalg.solve(chol.T, state.rng.standard_normal(k))
        state.a[:, j] = mean + noise


def _resample_gamma(state, priors):
    shape, rate = gamma_posterior(state.dishes, priors, state.cache)
    state.gamma = float(state.rng.gamma(shape, 1.0 / rate))


def _set_model(state, model, sampler_seed=None):
    state.model = model
    state.refresh_cache(sampler_seed=sampler_seed)


def _update_model_params(state, config):
    # slice moves on transformed coordinates; each evaluation rebuilds the
    # primitive cache for the trial parameters
    counts = state.z.sum(axis=0).astype(np.int64)
    n = state.n
    variant = state.model.variant

    def z_prior_for(model):
        if model.is_closed_form:
            cache = build_primitive_cache(model, n)
        else:
            table = weight_table_from_sampler(state.sampler, model.beta)
            cache = build_primitive_cache(model, n, table=table, gfc=state.gfc)
        return _z_log_prior(counts, n, state.gamma, model, cache)

    if not state.model.is_closed_form:
        # redraw the auxiliary weight draws, then move beta on them
        state.refresh_cache(sampler_seed=int(state.rng.integers(2 ** 63)))
        if config.update_theta:
            def beta_target(log_beta):
                beta = math.exp(log_beta)
                trial = replace(state.model, beta=beta)
                return z_prior_for(trial) - beta + log_beta

            new_log_beta = slice_sample(
                beta_target, math.log(state.model.beta), state.rng
            )
            _set_model(state, replace(state.model, beta=math.exp(new_log_beta)))
        if config.update_alpha and variant == "NGG":
            seed = int(state.rng.integers(2 ** 63))
            samples = state.sampler.samples

            def alpha_target(logit_alpha):
                alpha = float(special.expit(logit_alpha))
                if not 0.0 < alpha < 1.0:
                    return -math.inf
                trial = replace(state.model, alpha=alpha)
                sampler = NggWeightSampler(alpha, n, samples, seed)
                table = weight_table_from_sampler(sampler, trial.beta)
                gfc = build_gfc_table(max(n - 1, 1), alpha)
                cache = build_primitive_cache(trial, n, table=table, gfc=gfc)
                prior = _z_log_prior(counts, n, state.gamma, trial, cache)
                return prior + math.log(alpha) + math.log1p(-alpha)

            new_logit = slice_sample(
                alpha_target, float(special.logit(state.model.alpha)), state.rng
            )
            new_alpha = float(special.expit(new_logit))
            state.model = replace(state.model, alpha=new_alpha)
            state.gfc = None
            state.sampler = None
            state.refresh_cache(sampler_seed=seed)
        return

    if config.update_alpha and variant == "PY":
        theta = state.model.theta

        def alpha_target(logit_alpha):
            alpha = float(special.expit(logit_alpha))
            if not 0.0 < alpha < 1.0 or theta <= -alpha:
                return -math.inf
            return (
                z_prior_for(GibbsModel.py(alpha, theta))
                + math.log(alpha)
                + math.log1p(-alpha)
            )

        new_logit = slice_sample(
            alpha_target, float(special.logit(state.model.alpha)), state.rng
        )
        _set_model(state, GibbsModel.py(float(special.expit(new_logit)), theta))

    if config.update_theta:
        alpha = state.model.stable_index

        def theta_target(log_shifted):
            shifted = math.exp(log_shifted)  # theta + alpha ~ Exp(1)
            theta = shifted - alpha
            model = (
                GibbsModel.dp(theta) if variant == "DP" else GibbsModel.py(alpha, theta)
            )
            return z_prior_for(model) - shifted + log_shifted

        start = math.log(state.model.theta + alpha)
        new_log = slice_sample(theta_target, start, state.rng)
        theta = math.exp(new_log) - alpha
        model = GibbsModel.dp(theta) if variant == "DP" else GibbsModel.py(alpha, theta)
        _set_model(state, model)


def _update_scales(state, y):
    # log-variance slice moves under inverse-gamma(1,1) priors
    n, p = state.n, state.p

    resid = y - (state.w * state.z) @ state.a
    ssq_y = float((resid * resid).sum())

    def sigma_y_target(log_var):
        var = math.exp(log_var)
        return -0.5 * n * p * log_var - ssq_y / (2.0 * var) - log_var - 1.0 / var

    state.sigma_y = math.sqrt(
        math.exp(slice_sample(sigma_y_target, 2.0 * math.log(state.sigma_y), state.rng))
    )

    count_w = state.w.size
    ssq_w = float((state.w * state.w).sum())

    def sigma_w_target(log_var):
        var = math.exp(log_var)
        return -0.5 * count_w * log_var - ssq_w / (2.0 * var) - log_var - 1.0 / var

    state.sigma_w = math.sqrt(
        math.exp(slice_sample(sigma_w_target, 2.0 * math.log(state.sigma_w), state.rng))
    )

    k = state.dishes
    for j in range(p):
        ssq_a = float((state.a[:, j] * state.a[:, j]).sum())

        def sigma_a_target(log_var, ssq=ssq_a):
            var = math.exp(log_var)
            return -0.5 * k * log_var - ssq / (2.0 * var) - log_var - 1.0 / var

        state.sigma_a[j] = math.sqrt(
            math.exp(
                slice_sample(sigma_a_target, 2.0 * math.log(state.sigma_a[j]), state.rng)
            )
        )


def gibbs_sweep(state, y, config):
    """One full sweep over all enabled blocks; mutates and returns state."""
    _resample_z(state, y)
    _singleton_move(state, y)
    _resample_w(state, y)
    _resample_a(state, y)
    if config.update_gamma:
        _resample_gamma(state, config.priors)
    if config.update_alpha or config.update_theta:
        _update_model_params(state, config)
    if config.update_scales:
        _update_scales(state, y)
    return state


def initial_state(model, y, config, z_init=None):
    """Prior-flavored starting point for a chain on data y."""
    y = np.asarray(y, dtype=float)
    n, p = y.shape
    rng = np.random.default_rng(config.seed)
    gamma = config.gamma_init
    if gamma is None:
        gamma = config.priors.lambda1 / config.priors.lambda2
    if z_init is None:
        z = simulate_ibp(model, gamma, n, seed=int(rng.integers(2 ** 63))).matrix
    else:
        z = np.asarray(getattr(z_init, "matrix", z_init), dtype=np.uint8)
    k = z.shape[1]
    sigma_a = np.broadcast_to(np.asarray(config.sigma_a, dtype=float), (p,)).copy()
    w = rng.normal(0.0, config.sigma_w, size=(n, k))
    a = rng.standard_normal((k, p)) * sigma_a
    state = LatentFactorState(
        model, z, w, a, config.sigma_y, config.sigma_w, sigma_a, gamma, rng
    )
    state.mc_samples = config.mc_samples
    state.refresh_cache(sampler_seed=config.seed)
    return state


def _record(state, y, iteration):
    lj = allocation_log_joint(state.allocation, state.model, state.gamma, cache=state.cache)
    ll = log_likelihood(y, state.z, state.w, state.a, state.sigma_y)
    row = {
        "iteration": iteration,
        "chain": 0,
        "dishes": state.dishes,
        "total_takes": int(state.z.sum()),
        "gamma": state.gamma,
        "alpha": state.model.stable_index,
        "Theta": state.model.beta if state.model.beta is not None else state.model.theta,
        "sigma_y": state.sigma_y,
        "sigma_w": state.sigma_w,
        "log_joint": lj + ll,
    }
    for j, value in enumerate(state.sigma_a, start=1):
        row[f"sigma_a_{j}"] = float(value)
    if math.isnan(row["log_joint"]):
        raise RuntimeError(
            f"log joint diverged at iteration {iteration}: "
            f"dishes={state.dishes} gamma={state.gamma} sigma_y={state.sigma_y}"
        )
    return row


class SampleArchive:
    """Retained chain samples plus the run manifest."""

    def __init__(self, records, manifest):
        self.records = list(records)
        self.manifest = dict(manifest)

    def column(self, name):
        return np.array([record[name] for record in self.records])

    def extend(self, other):
        """Append another chain's records (per-chain ordering preserved)."""
        self.records.extend(other.records)
        chains = self.manifest.setdefault("merged_chains", [])
        chains.append(other.manifest)

    def to_csv(self, path):
        path = str(path)
        names = list(self.records[0].keys()) if self.records else ["iteration"]
        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=names)
            writer.writeheader()
            writer.writerows(self.records)
        return path

    def manifest_to_json(self, path):
        path = str(path)
        with open(path, "w") as fh:
            json.dump(self.manifest, fh, indent=2, sort_keys=True)
        return path


def run_chain(y, model, config, z_init=None):
    """Run one chain and return the archive of retained samples.

    A zero-iteration config archives the initial state only.  A NaN in the
    recorded log joint aborts with diagnostics.
    """
    y = np.asarray(y, dtype=float)
    state = initial_state(model, y, config, z_init=z_init)
    records = []
    if config.iterations == 0:
        row = _record(state, y, 0)
        row["chain"] = config.chain_id
        records.append(row)
    for iteration in range(1, config.iterations + 1):
        gibbs_sweep(state, y, config)
        if iteration > config.burn_in and (iteration - config.burn_in) % config.thin == 0:
            row = _record(state, y, iteration)
            row["chain"] = config.chain_id
            records.append(row)
    manifest = {
        "config": asdict(config),
        "model": state.model.to_payload(),
        "cache_hash": primitive_cache_content_hash(state.cache),
    }
    if state.table is not None:
        manifest["weight_table_hash"] = weight_table_content_hash(state.table, state.model)
    return SampleArchive(records, manifest)


def _emit_data(state, rng):
    noise = rng.standard_normal((state.n, state.p)) * state.sigma_y
    return (state.w * state.z) @ state.a + noise


def _geweke_statistics(state, y):
    wz = state.w * state.z
    return np.array(
        [
            float(state.dishes),
            float(state.z.sum()),
            state.gamma,
            float(wz.sum()),
            float((state.a * state.a).sum()),
            float(y.mean()),
            float((y * y).mean()),
        ]
    )


GEWEKE_STATISTIC_NAMES = (
    "dishes",
    "total_takes",
    "gamma",
    "weighted_take_sum",
    "loading_sq_norm",
    "data_mean",
    "data_sq_mean",
)


def _prior_state(model, n, p, config, rng, cache=None):
    gamma = float(rng.gamma(config.priors.lambda1, 1.0 / config.priors.lambda2))
    if config.update_scales:
        # variances ~ inverse-gamma(1, 1)
        sigma_y = math.sqrt(1.0 / rng.gamma(1.0))
        sigma_w = math.sqrt(1.0 / rng.gamma(1.0))
        sigma_a = np.sqrt(1.0 / rng.gamma(1.0, size=p))
    else:
        sigma_y = config.sigma_y
        sigma_w = config.sigma_w
        sigma_a = np.broadcast_to(np.asarray(config.sigma_a, dtype=float), (p,)).copy()
    z = simulate_ibp(
        model, gamma, n, seed=int(rng.integers(2 ** 63)), cache=cache
    ).matrix
    k = z.shape[1]
    w = rng.normal(0.0, sigma_w, size=(n, k))
    a = rng.standard_normal((k, p)) * sigma_a
    return LatentFactorState(model, z, w, a, sigma_y, sigma_w, sigma_a, gamma, rng)


def _batch_means_se(draws, batches=50):
    draws = np.asarray(draws, dtype=float)
    usable = (draws.size // batches) * batches
    means = draws[:usable].reshape(batches, -1).mean(axis=1)
    return float(means.std(ddof=1) / math.sqrt(batches))


def geweke_check(model, n, p, config, rounds=100_000, seed=0):
    """Joint-distribution sampler test (prior draws vs sweep-then-emit chain).

    The marginal-conditional side draws (state, Y) from the prior; the
    successive-conditional side alternates gibbs_sweep with re-emitting Y.
    Matching joints means every statistic's two means agree; z-scores use
    batch means on the chain side to absorb autocorrelation.

    Returns:
        dict mapping statistic name -> z-score.
    """
    if config.update_alpha or config.update_theta:
        raise ValueError("the joint-distribution test runs with fixed model parameters")
    if not model.is_closed_form:
        raise ValueError("the joint-distribution test needs closed-form primitives")
    rng = np.random.default_rng(seed)
    cache = build_primitive_cache(model, n)

    marginal = np.empty((rounds, len(GEWEKE_STATISTIC_NAMES)))
    for r in range(rounds):
        state = _prior_state(model, n, p, config, rng, cache=cache)
        y = _emit_data(state, rng)
        marginal[r] = _geweke_statistics(state, y)

    state = _prior_state(model, n, p, config, rng, cache=cache)
    state.cache = cache
    y = _emit_data(state, rng)
    successive = np.empty_like(marginal)
    for r in range(rounds):
        gibbs_sweep(state, y, config)
        y = _emit_data(state, rng)
        successive[r] = _geweke_statistics(state, y)

    scores = {}
    for idx, name in enumerate(GEWEKE_STATISTIC_NAMES):
        se_m = marginal[:, idx].std(ddof=1) / math.sqrt(rounds)
        se_s = _batch_means_se(successive[:, idx])
        gap = marginal[:, idx].mean() - successive[:, idx].mean()
        scores[name] = float(gap / math.hypot(se_m, se_s))
    return scores
