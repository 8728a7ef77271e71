"""Diagonal-covariance Gaussian mixture fitting by expectation-maximization.

Responsibilities are computed in the log domain (log-sum-exp), which keeps
the E-step stable for the 200-dimensional embedding vectors this is used
on. The M-step updates means, variances, and mixing weights; a
``mean_only`` switch restricts it to means for fidelity experiments.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .errors import DegenerateDataError, InvalidInputError, ParseError

VARIANCE_FLOOR = 1e-6
LOG_2PI = np.log(2.0 * np.pi)


@dataclass
class GaussianMixture:
    """k diagonal Gaussians with mixing weights and a log-likelihood trace."""

    means: np.ndarray        # (k, d)
    variances: np.ndarray    # (k, d), every entry >= VARIANCE_FLOOR
    weights: np.ndarray      # (k,), sums to 1
    log_likelihoods: list = field(default_factory=list)

    @property
    def k(self) -> int:
        return self.means.shape[0]

    @property
    def dim(self) -> int:
        return self.means.shape[1]


@dataclass
class ClusterAssignment:
    """Hard cluster ids (1-based) plus posterior responsibilities."""

    cluster_ids: np.ndarray       # (N,), values in 1..k
    responsibilities: np.ndarray  # (N, k), rows sum to 1
    k: int

    def index_map(self) -> np.ndarray:
        """Vocabulary index -> cluster id; position 0 (PAD) maps to 0."""
        return np.concatenate([[0], self.cluster_ids]).astype(np.intp)


def _log_densities(x, mixture):
    """(N, k) log of weight_c * N(x | mean_c, diag var_c)."""
    n = x.shape[0]
    out = np.empty((n, mixture.k))
    for c in range(mixture.k):
        var = mixture.variances[c]
        diff = x - mixture.means[c]
        quad = (diff * diff) @ (0.5 / var)
        out[:, c] = (
            np.log(mixture.weights[c])
            - 0.5 * np.sum(LOG_2PI + np.log(var))
            - quad
        )
    return out


def _responsibilities(x, mixture):
    logd = _log_densities(x, mixture)
    norm = logsumexp(logd, axis=1)
    return np.exp(logd - norm[:, None]), float(norm.sum())


def _seed_means(x, k, rng):
    """k-means++-style seeding: spread initial means across the data."""
    n = x.shape[0]
    chosen = [int(rng.integers(n))]
    dist = np.sum((x - x[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        total = dist.sum()
        if total <= 0:
            # remaining points coincide with chosen means; pick any new row
            remaining = [i for i in range(n) if i not in chosen]
            chosen.append(remaining[0])
        else:
            r = rng.random() * total
            chosen.append(int(np.searchsorted(np.cumsum(dist), r)))
        dist = np.minimum(dist, np.sum((x - x[chosen[-1]]) ** 2, axis=1))
    return x[chosen].copy()


def em_fit(
    embeddings,
    k,
    max_iters=100,
    tol=1e-6,
    seed=0,
    mean_only=False,
    initial_means=None,
) -> GaussianMixture:
    """Fit a k-component diagonal Gaussian mixture to embedding rows.

    Alternates responsibility computation and parameter updates until the
    total log-likelihood improves by less than ``tol`` or ``max_iters`` is
    reached. The per-iteration log-likelihoods are recorded on the result
    and are non-decreasing (up to numerical slack).
    """
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidInputError("embeddings must be a non-empty 2-D array")
    if k < 1:
        raise InvalidInputError("k must be at least 1")
    distinct = np.unique(x, axis=0).shape[0]
    if distinct == 1:
        raise DegenerateDataError("all embedding rows are identical")
    if k > distinct:
        raise InvalidInputError(
            f"k={k} exceeds the number of distinct embedding rows ({distinct})"
        )

    rng = np.random.default_rng(seed)
    if initial_means is None:
        means = _seed_means(x, k, rng)
    else:
        means = np.asarray(initial_means, dtype=np.float64).copy()
        if means.shape != (k, x.shape[1]):
            raise InvalidInputError("initial_means must have shape (k, d)")
    global_var = np.maximum(x.var(axis=0), VARIANCE_FLOOR)
    mixture = GaussianMixture(
        means=means,
        variances=np.tile(global_var, (k, 1)),
        weights=np.full(k, 1.0 / k),
    )

    prev = -np.inf
    for _ in range(max_iters):
        resp, loglik = _responsibilities(x, mixture)
        mixture.log_likelihoods.append(loglik)
        if loglik - prev < tol:
            break
        prev = loglik

        counts = resp.sum(axis=0)
        safe = np.maximum(counts, 1e-12)
        mixture.means = (resp.T @ x) / safe[:, None]
        if not mean_only:
            for c in range(k):
                diff = x - mixture.means[c]
                var = (resp[:, c] @ (diff * diff)) / safe[c]
                mixture.variances[c] = np.maximum(var, VARIANCE_FLOOR)
            mixture.weights = counts / x.shape[0]
    return mixture


def assign_clusters(mixture: GaussianMixture, embeddings) -> ClusterAssignment:
    """Hard argmax assignment of each row; ties go to the lowest cluster id."""
    x = np.asarray(embeddings, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != mixture.dim:
        raise InvalidInputError(
            f"embedding dimension {x.shape} does not match mixture dim {mixture.dim}"
        )
    resp, _ = _responsibilities(x, mixture)
    return ClusterAssignment(
        cluster_ids=np.argmax(resp, axis=1) + 1,
        responsibilities=resp,
        k=mixture.k,
    )


def cluster_vocabulary(mixture: GaussianMixture, embeddings) -> ClusterAssignment:
    """Assign vocabulary words (embedding rows 1..V; row 0 is PAD)."""
    return assign_clusters(mixture, embeddings.vectors[1:])


# -- serialization -----------------------------------------------------------


def save_mixture(mixture: GaussianMixture, path):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"gmm {mixture.k} {mixture.dim}\n")
        for c in range(mixture.k):
            fh.write(f"component {c + 1}\n")
            fh.write(f"weight {mixture.weights[c]:.17g}\n")
            fh.write("mean " + " ".join(f"{v:.17g}" for v in mixture.means[c]) + "\n")
            fh.write("var " + " ".join(f"{v:.17g}" for v in mixture.variances[c]) + "\n")


def load_mixture(path) -> GaussianMixture:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("gmm "):
        raise ParseError("expected header 'gmm k d'", line=1)
    try:
        _, k_s, d_s = lines[0].split()
        k, d = int(k_s), int(d_s)
    except ValueError:
        raise ParseError("malformed header", line=1) from None
    means = np.zeros((k, d))
    variances = np.zeros((k, d))
    weights = np.zeros(k)
    lineno = 1
    for c in range(k):
        block = lines[lineno : lineno + 4]
        if len(block) < 4:
            raise ParseError("truncated component block", line=lineno + 1)
        try:
            weights[c] = float(block[1].split()[1])
            means[c] = [float(v) for v in block[2].split()[1:]]
            variances[c] = [float(v) for v in block[3].split()[1:]]
        except (IndexError, ValueError) as exc:
            raise ParseError(f"malformed component block ({exc})",
                             line=lineno + 1) from None
        lineno += 4
    return GaussianMixture(means=means, variances=variances, weights=weights)


def save_assignment(assignment: ClusterAssignment, vocab, path):
    """Write 'token<TAB>cluster_id' lines for vocabulary indices 1..V."""
    with open(path, "w", encoding="utf-8") as fh:
        for i in range(1, len(vocab) + 1):
            fh.write(f"{vocab.token(i)}\t{int(assignment.cluster_ids[i - 1])}\n")


def load_assignment(path) -> dict:
    """Read 'token<TAB>cluster_id' lines into a token -> cluster-id dict."""
    mapping = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line:
                continue
            parts = line.split("\t")
            if len(parts) != 2:
                raise ParseError("expected 'token<TAB>cluster_id'", line=lineno)
            try:
                mapping[parts[0]] = int(parts[1])
            except ValueError:
                raise ParseError("cluster id must be an integer", line=lineno) from None
    return mapping
