"""PCA, exact t-SNE, K-Means and diagonal-covariance Gaussian mixtures."""

import csv
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

DEFAULT_PCA_DIMS = 180


@dataclass
class PcaModel:
    mean: np.ndarray
    components: np.ndarray          # (D, k), orthonormal columns
    explained_variance: np.ndarray  # (k,), non-increasing

    @property
    def n_components(self):
        return self.components.shape[1]


@dataclass
class ClusteringResult:
    assignments: np.ndarray
    centroids: np.ndarray           # K-Means centroids or GMM means, (K, d)
    trace: list                     # WCSS per iteration (K-Means) / log-likelihood (GMM)
    iterations: int
    converged: bool
    weights: np.ndarray = None      # GMM only
    variances: np.ndarray = None    # GMM only, (K, d)
    responsibilities: np.ndarray = None

    @property
    def k(self):
        return self.centroids.shape[0]

    @property
    def objective(self):
        return self.trace[-1] if self.trace else float("nan")


def _as_matrix(X):
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ValueError(f"expected an (N, d) matrix, got shape {X.shape}")
    return X


# PCA -----------------------------------------------------------------------

def pca_fit(X, k=None):
    """Principal axes of X via SVD of the centred matrix.

    ``k`` defaults to 180 capped at min(N - 1, D).  Each component's sign is
    fixed so its largest-magnitude entry is positive.
    """
    X = _as_matrix(X)
    n, d = X.shape
    if n < 2:
        raise ValueError("PCA needs at least 2 samples")
    limit = min(n - 1, d)
    if k is None:
        k = min(DEFAULT_PCA_DIMS, limit)
    if not 1 <= k <= limit:
        raise ValueError(f"k={k} outside [1, min(N-1, D)] = [1, {limit}]")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    comps = vt[:k].T
    pivot = np.abs(comps).argmax(axis=0)
    signs = np.sign(comps[pivot, np.arange(k)])
    signs[signs == 0] = 1
    return PcaModel(mean, comps * signs, s[:k] ** 2 / (n - 1))


def pca_transform(model, X):
    X = _as_matrix(X)
    if X.shape[1] != model.mean.shape[0]:
        raise ValueError(f"PCA model expects {model.mean.shape[0]} columns, got {X.shape[1]}")
    return (X - model.mean) @ model.components


def pca_reconstruct(model, Z):
    return np.asarray(Z) @ model.components.T + model.mean


# t-SNE ---------------------------------------------------------------------

def _sq_distances(X):
    sq = (X ** 2).sum(axis=1)
    D = sq[:, None] + sq[None, :] - 2 * X @ X.T
    np.fill_diagonal(D, 0.0)
    return np.maximum(D, 0.0)


def _conditional_rows(D, log_beta):
    """Row-wise Gaussian conditionals and their entropies (nats) for given bandwidths."""
    n = D.shape[0]
    off = ~np.eye(n, dtype=bool)
    dist = D[off].reshape(n, n - 1)
    shifted = dist - dist.min(axis=1, keepdims=True)
    beta = np.exp(log_beta)[:, None]
    w = np.exp(-beta * shifted)
    s = w.sum(axis=1, keepdims=True)
    p = w / s
    H = np.log(s[:, 0]) + beta[:, 0] * (p * shifted).sum(axis=1)
    return p, H


def conditional_affinities(X, perplexity, iters=200):
    """Per-point conditional P(j|i) with bandwidths bisected to match ``perplexity``.

    Returns (P, realized perplexities).  Bisection runs on log-precision
    for all rows at once.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    D = _sq_distances(X)
    target = np.log(perplexity)
    scale = np.log(np.median(D[~np.eye(n, dtype=bool)]) + 1e-300)
    lo = np.full(n, -60.0 - scale)
    hi = np.full(n, 60.0 - scale)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        _, H = _conditional_rows(D, mid)
        too_flat = H > target          # entropy too high -> increase precision
        lo = np.where(too_flat, mid, lo)
        hi = np.where(too_flat, hi, mid)
    p_rows, H = _conditional_rows(D, 0.5 * (lo + hi))
    P = np.zeros((n, n))
    P[~np.eye(n, dtype=bool)] = p_rows.ravel()
    return P, np.exp(H)


@dataclass
class TsneResult:
    embedding: np.ndarray
    kl_trace: list
    perplexity: float
    realized_perplexity: np.ndarray


def _kl(P, num):
    Q = np.maximum(num / num.sum(), 1e-12)
    mask = P > 0
    return float((P[mask] * np.log(P[mask] / Q[mask])).sum())


def tsne(X, out_dims=2, perplexity=None, iterations=1000, seed=0, learning_rate=200.0,
         early_exaggeration=12.0, exaggeration_iters=250, momentum=(0.5, 0.8),
         momentum_switch=250):
    """Exact (all-pairs) t-SNE.

    ``perplexity`` defaults to 30, capped just below (N - 1) / 3; an explicit
    value at or above that bound is rejected.  Updates use momentum with the
    usual per-coordinate adaptive gains.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if n < 5:
        raise ValueError("t-SNE needs at least 5 points")
    bound = (n - 1) / 3
    if perplexity is None:
        perplexity = min(30.0, float(np.nextafter(bound, 0)))
    if not 0 < perplexity < bound:
        raise ValueError(f"perplexity {perplexity} infeasible for N={n}: must be < (N-1)/3 = {bound:.4g}")
    P_cond, realized = conditional_affinities(X, perplexity)
    P = (P_cond + P_cond.T) / (2 * n)
    P = np.maximum(P, 1e-12)
    np.fill_diagonal(P, 0.0)

    rng = np.random.default_rng(seed)
    Y = rng.normal(0.0, 1e-4, size=(n, out_dims))
    update = np.zeros_like(Y)
    gains = np.ones_like(Y)
    trace = []
    for it in range(1, iterations + 1):
        exag = early_exaggeration if it <= exaggeration_iters else 1.0
        mom = momentum[0] if it <= momentum_switch else momentum[1]
        num = 1.0 / (1.0 + _sq_distances(Y))
        np.fill_diagonal(num, 0.0)
        Q = np.maximum(num / num.sum(), 1e-12)
        W = (exag * P - Q) * num
        grad = 4.0 * (W.sum(axis=1)[:, None] * Y - W @ Y)
        same_sign = (grad > 0) == (update > 0)
        gains = np.where(same_sign, gains * 0.8, gains + 0.2)
        gains = np.maximum(gains, 0.01)
        update = mom * update - learning_rate * gains * grad
        Y = Y + update
        Y = Y - Y.mean(axis=0)
        num = 1.0 / (1.0 + _sq_distances(Y))
        np.fill_diagonal(num, 0.0)
        trace.append(_kl(P, num))
    return TsneResult(Y, trace, perplexity, realized)


# K-Means -------------------------------------------------------------------

def _nearest(X, C):
    d2 = ((X[:, None, :] - C[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1), d2


def _wcss(X, assign, C):
    return float(((X - C[assign]) ** 2).sum())


def _init_centroids(X, K, method, rng):
    n = X.shape[0]
    if method == "random-points":
        return X[rng.choice(n, size=K, replace=False)].copy()
    if method == "plus-plus":
        idx = [int(rng.integers(n))]
        d2 = ((X - X[idx[0]]) ** 2).sum(axis=1)
        for _ in range(1, K):
            total = d2.sum()
            nxt = int(rng.choice(n, p=d2 / total)) if total > 0 else int(rng.integers(n))
            idx.append(nxt)
            d2 = np.minimum(d2, ((X - X[nxt]) ** 2).sum(axis=1))
        return X[idx].copy()
    raise ValueError(f"unknown init {method!r}; expected 'random-points' or 'plus-plus'")


def _reseed_empty(X, assign, C, K):
    """Give every empty cluster the point farthest from its own centroid."""
    counts = np.bincount(assign, minlength=K)
    for k in np.flatnonzero(counts == 0):
        dist = ((X - C[assign]) ** 2).sum(axis=1)
        movable = counts[assign] > 1
        if not movable.any():
            break
        far = int(np.where(movable, dist, -1.0).argmax())
        counts[assign[far]] -= 1
        assign[far] = k
        counts[k] = 1
        C[k] = X[far]
    return assign


def _means(X, assign, K, C_prev):
    C = np.zeros((K, X.shape[1]))
    np.add.at(C, assign, X)
    counts = np.bincount(assign, minlength=K)
    nonempty = counts > 0
    C[nonempty] /= counts[nonempty, None]
    C[~nonempty] = C_prev[~nonempty]
    return C


def _kmeans_once(X, K, init, rng, max_iters):
    C = _init_centroids(X, K, init, rng)
    prev = None
    trace = []
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        assign, _ = _nearest(X, C)
        assign = _reseed_empty(X, assign, C, K)
        if prev is not None and np.array_equal(assign, prev):
            converged = True
            it -= 1
            break
        C = _means(X, assign, K, C)
        trace.append(_wcss(X, assign, C))
        prev = assign
    return ClusteringResult(prev, C, trace, it, converged)


def kmeans(X, K, init="random-points", seed=0, max_iters=300, restarts=1):
    """Lloyd's algorithm: assign to nearest centroid, recompute means, repeat.

    Stops when assignments no longer change (or after ``max_iters``).  With
    several restarts the run with the lowest final WCSS wins; earlier runs
    win ties.
    """
    X = _as_matrix(X)
    n = X.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must lie in [1, N={n}]")
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    best = None
    for r in range(restarts):
        res = _kmeans_once(X, K, init, np.random.default_rng([seed, r]), max_iters)
        if best is None or res.objective < best.objective:
            best = res
    return best


# Gaussian mixture ----------------------------------------------------------

def _log_joint(X, weights, means, variances):
    with np.errstate(divide="ignore"):
        log_w = np.log(weights)
    quad = (((X[:, None, :] - means[None]) ** 2) / variances[None]).sum(axis=2)
    log_det = np.log(2 * np.pi * variances).sum(axis=1)
    return log_w[None, :] - 0.5 * (quad + log_det[None, :])


def gmm_fit(X, K, seed=0, max_iters=200, tol=1e-6, var_floor=1e-6, kmeans_restarts=10):
    """Diagonal-covariance mixture fitted by EM, initialised from K-Means.

    The trace holds the log-likelihood evaluated at each E step; fitting
    stops when its improvement falls below ``tol`` or after ``max_iters``
    M steps.
    """
    X = _as_matrix(X)
    n, d = X.shape
    if n < 2 or d < 1:
        raise ValueError("GMM needs at least 2 points of dimension >= 1")
    if not 1 <= K <= n:
        raise ValueError(f"K={K} must lie in [1, N={n}]")
    init = kmeans(X, K, seed=seed, restarts=kmeans_restarts)
    counts = np.bincount(init.assignments, minlength=K)
    weights = counts / n
    means = init.centroids.copy()
    global_var = X.var(axis=0)
    variances = np.empty((K, d))
    for k in range(K):
        members = X[init.assignments == k]
        variances[k] = members.var(axis=0) if len(members) > 1 else global_var
    variances = np.maximum(variances, var_floor)

    trace = []
    converged = False
    m_steps = 0
    tiny = 10 * np.finfo(np.float64).eps
    while True:
        log_joint = _log_joint(X, weights, means, variances)
        log_norm = logsumexp(log_joint, axis=1)
        trace.append(float(log_norm.sum()))
        resp = np.exp(log_joint - log_norm[:, None])
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            converged = True
            break
        if m_steps == max_iters:
            break
        nk = resp.sum(axis=0)
        weights = nk / n
        denom = nk[:, None] + tiny
        means = (resp.T @ X) / denom
        variances = np.empty((K, d))
        for k in range(K):
            variances[k] = (resp[:, k] @ (X - means[k]) ** 2) / denom[k]
        variances = np.maximum(variances, var_floor)
        m_steps += 1
    return ClusteringResult(resp.argmax(axis=1), means, trace, m_steps, converged,
                            weights=weights, variances=variances, responsibilities=resp)


def gmm_assign(result):
    """Hard labels: most responsible component, lowest index on ties."""
    resp = result.responsibilities if isinstance(result, ClusteringResult) else result
    return np.asarray(resp).argmax(axis=1)


# export --------------------------------------------------------------------

def write_points_csv(path, coords, assignments):
    coords = np.asarray(coords)
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["index"] + [f"x{j}" for j in range(coords.shape[1])] + ["assignment"])
        for i, (row, a) in enumerate(zip(coords, assignments)):
            w.writerow([i] + [repr(float(v)) for v in row] + [int(a)])
