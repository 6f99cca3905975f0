import itertools

import numpy as np
import pytest

# Filled by tests/test_acceptance.py, printed at the end of the run.
ACCEPTANCE_RESULTS = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- independent oracles -----------------------------------------------------


def brute_total_scatter(X):
    mu = X.mean(axis=1)
    S = np.zeros((X.shape[0], X.shape[0]))
    for i in range(X.shape[1]):
        v = X[:, i] - mu
        S += np.outer(v, v)
    return S


def brute_between_within(X, labels):
    mu = X.mean(axis=1)
    d = X.shape[0]
    S_B, S_W = np.zeros((d, d)), np.zeros((d, d))
    for c in sorted(set(labels)):
        members = [i for i, l in enumerate(labels) if l == c]
        mu_c = X[:, members].mean(axis=1)
        S_B += len(members) * np.outer(mu_c - mu, mu_c - mu)
        for i in members:
            S_W += np.outer(X[:, i] - mu_c, X[:, i] - mu_c)
    return S_B, S_W


def brute_delta_kernel(labels):
    n = len(labels)
    K = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            K[i, j] = 1.0 if labels[i] == labels[j] else 0.0
    return K


def explicit_H(n):
    return np.eye(n) - np.ones((n, n)) / n


def brute_paths(initial, transition, emission, obs, tie_tol=1e-9):
    """``(best_path, best_logprob, log_total)`` by enumerating every state path.

    Among paths whose log probability is within ``tie_tol`` of the best, the
    one chosen by backtracking with lower-index tie-breaks wins, i.e. the
    smallest path when read from the last state to the first.
    """
    N = len(initial)
    scored = []
    total = 0.0
    for path in itertools.product(range(N), repeat=len(obs)):
        prob = initial[path[0]] * emission[path[0], obs[0]]
        for t in range(1, len(obs)):
            prob *= transition[path[t - 1], path[t]] * emission[path[t], obs[t]]
        total += prob
        scored.append((np.log(prob) if prob > 0 else -np.inf, path))
    best = max(lp for lp, _ in scored)
    if best == -np.inf:
        tied = [p for _, p in scored]
    else:
        tied = [p for lp, p in scored if lp >= best - tie_tol]
    best_path = min(tied, key=lambda p: p[::-1])
    return best_path, best, (np.log(total) if total > 0 else -np.inf)


def random_stochastic(rng, shape):
    M = rng.uniform(0.05, 1.0, size=shape)
    return M / M.sum(axis=-1, keepdims=True)


def random_labeled(rng, d, n, c, spread=3.0):
    """Gaussian classes around random centers; every class gets >= 2 samples."""
    labels = [f"c{k}" for k in range(c)] * 2
    labels += [f"c{k}" for k in rng.integers(0, c, size=n - len(labels))]
    labels = [labels[i] for i in rng.permutation(n)]
    centers = {f"c{k}": spread * rng.normal(size=d) for k in range(c)}
    A = rng.normal(size=(d, d))
    X = np.column_stack([centers[l] + A @ rng.normal(size=d) * 0.5 for l in labels])
    return X, labels


def random_vertical_rotation(angle, vertical=1):
    c, s = np.cos(angle), np.sin(angle)
    a, b = [k for k in range(3) if k != vertical]
    R = np.eye(3)
    R[a, a], R[a, b], R[b, a], R[b, b] = c, -s, s, c
    return R


def corner_reference(X, labels, r1, r2, p):
    """Reference basis for a corner of the Roweis map, built from explicit n x n matrices.

    Returns ``(basis, eigenvalues)`` where the eigenvalues are the full
    descending spectrum of the reference pencil, or ``None`` for a
    non-corner point.
    """
    import scipy.linalg

    n = X.shape[1]
    H = explicit_H(n)
    K = brute_delta_kernel(labels)
    S_T = brute_total_scatter(X)
    _, S_W = brute_between_within(X, labels)
    A = {0.0: S_T, 1.0: X @ H @ K @ H @ X.T}[r1]
    B = {0.0: np.eye(X.shape[0]), 1.0: S_W}[r2]
    w, V = scipy.linalg.eigh(A, B)
    return V[:, ::-1][:, :p], w[::-1]


def well_separated(eigenvalues, p, rel_gap=1e-3):
    """True if the top-p block is separated from the rest of the spectrum."""
    w = np.asarray(eigenvalues)
    if p >= len(w):
        return True
    scale = max(np.abs(w).max(), 1e-300)
    return (w[p - 1] - w[p]) > rel_gap * scale


def largest_angle(U, V):
    import scipy.linalg

    return float(np.max(scipy.linalg.subspace_angles(U, V)))
