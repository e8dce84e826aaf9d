"""Stick-breaking and Poisson-superposition views of the feature process.

Round i contributes Poisson(gamma) atoms whose weights are independent
copies of the i-th stick P_i = W_i prod_{j<i}(1-W_j); customers then keep
each atom by an independent uniform comparison.  DP sticks use iid
beta(1, theta) fractions, PY independent beta(1-alpha, theta + j alpha)
ones.  The module also evaluates structural densities (all variants) and
the per-round Poisson intensities (DP/PY).
"""

import csv
import math

import numpy as np
from scipy import integrate, special

from .ibp import FeatureAllocation
from .special_functions import positive_stable_density

DEFAULT_RESIDUAL_MASS = 1e-3


def _stick_beta_params(model, j):
    # fraction W_j of the j-th break
    if model.variant == "DP":
        return 1.0, model.theta
    if model.variant == "PY":
        alpha = model.alpha
        return 1.0 - alpha, model.theta + j * alpha
    raise ValueError(
        f"{model.variant} has no independent stick representation; "
        "use the sequential sampler"
    )


def sample_sticks(model, count, rng, size=None):
    """Stick weights P_1..P_count, one independent path per row.

    Args:
        model: DP or PY GibbsModel.
        count: number of sticks per path, >= 1.
        rng: numpy Generator.
        size: optional number of independent paths.

    Returns:
        array of shape (count,) or (size, count).
    """
    if count < 1:
        raise ValueError(f"count must be >= 1, got {count}")
    rows = 1 if size is None else int(size)
    fractions = np.empty((rows, count))
    for j in range(1, count + 1):
        a, b = _stick_beta_params(model, j)
        fractions[:, j - 1] = rng.beta(a, b, size=rows)
    remaining = np.cumprod(1.0 - fractions, axis=1)
    sticks = fractions.copy()
    sticks[:, 1:] *= remaining[:, :-1]
    return sticks[0] if size is None else sticks


def expected_stick_mass(model, i):
    """E[P_i]; the fractions are independent so the means multiply."""
    if i < 1:
        raise ValueError(f"i must be >= 1, got {i}")
    total = 1.0
    for j in range(1, i + 1):
        a, b = _stick_beta_params(model, j)
        mean = a / (a + b)
        if j == i:
            return total * mean
        total *= 1.0 - mean
    raise AssertionError("unreachable")


def suggest_rounds(model, tol=DEFAULT_RESIDUAL_MASS, max_rounds=100_000):
    """Smallest round count I with E[P_I] < tol."""
    if not 0 < tol < 1:
        raise ValueError(f"tol must lie in (0, 1), got {tol}")
    total = 1.0
    for j in range(1, max_rounds + 1):
        a, b = _stick_beta_params(model, j)
        mean = a / (a + b)
        if total * mean < tol:
            return j
        total *= 1.0 - mean
    raise ValueError(f"expected stick mass stays >= {tol} through {max_rounds} rounds")


class TruncatedProcess:
    """Atoms of a stick-breaking construction truncated after `rounds` rounds.

    Labels are uniforms on [0, 1] standing in for a non-atomic base measure;
    only the weights matter downstream.
    """

    def __init__(self, labels, weights, rounds, gamma):
        labels = np.asarray(labels, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if labels.shape != weights.shape or labels.ndim != 1:
            raise ValueError("labels and weights must be equal-length vectors")
        if weights.size and (weights.min() <= 0.0 or weights.max() > 1.0):
            raise ValueError("atom weights must lie in (0, 1]")
        labels.flags.writeable = False
        weights.flags.writeable = False
        self.labels = labels
        self.weights = weights
        self.rounds = int(rounds)
        self.gamma = float(gamma)

    @property
    def atoms(self):
        return list(zip(self.labels.tolist(), self.weights.tolist()))


def construct_truncated(model, gamma, rounds, rng):
    """Draw the first `rounds` rounds of the stick construction.

    Round i holds Poisson(gamma) atoms, each with a fresh stick path
    truncated at its own P_i.
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if rounds < 0:
        raise ValueError(f"rounds must be >= 0, got {rounds}")
    labels, weights = [], []
    for i in range(1, rounds + 1):
        count = int(rng.poisson(gamma))
        if count == 0:
            continue
        paths = sample_sticks(model, i, rng, size=count)
        weights.append(paths[:, i - 1])
        labels.append(rng.random(count))
    labels = np.concatenate(labels) if labels else np.empty(0)
    weights = np.concatenate(weights) if weights else np.empty(0)
    return TruncatedProcess(labels, weights, rounds, gamma)


def draw_bernoulli(process, n, rng):
    """Thin the atoms by n customers of independent uniform comparisons.

    Returns:
        FeatureAllocation over the dishes taken at least once, columns in
        order of first appearance.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if process.weights.size == 0:
        return FeatureAllocation(np.zeros((n, 0), dtype=np.uint8), process.gamma)
    matrix = (rng.random((n, process.weights.size)) < process.weights).astype(np.uint8)
    matrix = matrix[:, matrix.any(axis=0)]
    return FeatureAllocation.from_matrix(matrix, process.gamma)


def sample_truncated_feature_counts(model, gamma, n, rounds, replicates, seed):
    """Dish totals K_n from `replicates` truncated constructions.

    An atom with weight p survives n customers with probability
    1 - (1-p)^n independently of everything else, so K_n needs only the
    per-atom weights; those are drawn in lockstep across replicates.

    Returns:
        int array of shape (replicates,).
    """
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    rng = np.random.default_rng(seed)
    totals = np.zeros(replicates, dtype=np.int64)
    counts = rng.poisson(gamma, size=(replicates, rounds))
    for i in range(1, rounds + 1):
        round_counts = counts[:, i - 1]
        atoms = int(round_counts.sum())
        if atoms == 0:
            continue
        paths = sample_sticks(model, i, rng, size=atoms)
        appear = -np.expm1(n * np.log1p(-paths[:, i - 1]))
        kept = rng.random(atoms) < appear
        owners = np.repeat(np.arange(replicates), round_counts)
        totals += np.bincount(owners[kept], minlength=replicates)
    return totals


def structural_density(model, p):
    """Density of the limiting frequency of the first dish, at p.

    DP/PY evaluate the beta(1-alpha, theta+alpha) density; NGG/NIG the
    quadrature [alpha/Gamma(1-alpha)] p^{-alpha}
    int t^{-alpha} e^{beta^alpha - beta t} f_alpha(t(1-p)) dt.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    alpha = model.stable_index
    if model.variant in ("DP", "PY"):
        theta = model.theta
        log_norm = (
            special.gammaln(theta + 1.0)
            - special.gammaln(1.0 - alpha)
            - special.gammaln(theta + alpha)
        )
        return float(
            np.exp(log_norm + (-alpha) * math.log(p) + (theta + alpha - 1.0) * math.log1p(-p))
        )
    beta = model.beta

    def integrand(t):
        return (
            t ** -alpha
            * math.exp(beta ** alpha - beta * t)
            * positive_stable_density(alpha, t * (1.0 - p))
        )

    head, _ = integrate.quad(integrand, 0.0, 1.0 / (1.0 - p))
    tail, _ = integrate.quad(integrand, 1.0 / (1.0 - p), np.inf)
    return alpha / math.gamma(1.0 - alpha) * p ** -alpha * (head + tail)


def superposition_intensity(model, depth, p):
    """Per-round Poisson intensity (per unit base-measure mass) at depth n.

    [Gamma(1+theta)/(Gamma(1-alpha) Gamma(theta+alpha))]
    p^{-alpha} (1-p)^{theta+alpha+n-1}; round n of the superposition view
    sees the atoms no earlier customer took.  DP/PY only.
    """
    if model.variant not in ("DP", "PY"):
        raise ValueError(f"superposition intensities cover DP/PY, not {model.variant}")
    depth = np.asarray(depth)
    if np.any(depth < 0):
        raise ValueError("depth must be >= 0")
    p = np.asarray(p, dtype=float)
    if np.any(p <= 0.0) or np.any(p >= 1.0):
        raise ValueError("p must lie in (0, 1)")
    alpha = model.stable_index
    theta = model.theta
    log_norm = (
        special.gammaln(theta + 1.0)
        - special.gammaln(1.0 - alpha)
        - special.gammaln(theta + alpha)
    )
    value = np.exp(
        log_norm - alpha * np.log(p) + (theta + alpha + depth - 1.0) * np.log1p(-p)
    )
    return float(value) if value.ndim == 0 else value


def export_structural_density_csv(model, path, grid=None):
    """Write (p, density) rows over a grid in (0, 1)."""
    if grid is None:
        grid = np.linspace(0.005, 0.995, 199)
    path = str(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["p", "density"])
        for p in np.asarray(grid, dtype=float):
            writer.writerow([float(p), structural_density(model, float(p))])
    return path


def export_intensity_csv(model, depths, path, grid=None):
    """Write (depth, p, intensity) rows for the requested depths."""
    if grid is None:
        grid = np.linspace(0.005, 0.995, 199)
    grid = np.asarray(grid, dtype=float)
    path = str(path)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["depth", "p", "intensity"])
        for depth in depths:
            values = superposition_intensity(model, int(depth), grid)
            for p, value in zip(grid, values):
                writer.writerow([int(depth), float(p), float(value)])
    return path
