"""Discrete-observation hidden Markov models over a pose alphabet.

Likelihoods use the scaled forward recursion (one normalizer per step), so
long sequences do not underflow. Viterbi runs in log space.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

STOCHASTIC_ATOL = 1e-9
DEFAULT_SMOOTHING = 1e-6
CRITERIA = ("viterbi", "forward")
VITERBI_TIE_RTOL = 1e-12


def _check_stochastic(name: str, M: np.ndarray) -> None:
    if np.any(M < 0) or not np.all(np.isfinite(M)):
        raise ConfigError(f"{name} has negative or non-finite entries")
    sums = M.sum(axis=-1)
    if np.any(np.abs(sums - 1.0) > STOCHASTIC_ATOL):
        raise ConfigError(f"{name} rows must sum to 1, got {sums}")


@dataclass(frozen=True, eq=False)
class DiscreteHmm:
    initial: np.ndarray
    transition: np.ndarray
    emission: np.ndarray
    alphabet: tuple

    def __post_init__(self):
        for name in ("initial", "transition", "emission"):
            a = np.array(getattr(self, name), dtype=np.float64)
            a.setflags(write=False)
            object.__setattr__(self, name, a)
        object.__setattr__(self, "alphabet", tuple(self.alphabet))
        n = self.initial.shape[0]
        if n < 1 or self.transition.shape != (n, n) or self.emission.shape != (n, len(self.alphabet)):
            raise ConfigError(
                f"inconsistent HMM shapes: initial {self.initial.shape}, transition "
                f"{self.transition.shape}, emission {self.emission.shape}, alphabet {len(self.alphabet)}"
            )
        _check_stochastic("initial", self.initial)
        _check_stochastic("transition", self.transition)
        _check_stochastic("emission", self.emission)

    @property
    def n_states(self) -> int:
        return self.initial.shape[0]

    def encode(self, seq) -> np.ndarray:
        return encode(seq, self.alphabet)


@dataclass(frozen=True)
class TrainReport:
    log_likelihood_trace: tuple
    iterations: int
    converged: bool


def encode(seq, alphabet) -> np.ndarray:
    """Map symbols to their alphabet positions."""
    lookup = {s: i for i, s in enumerate(alphabet)}
    try:
        return np.array([lookup[s] for s in seq], dtype=np.intp)
    except KeyError as exc:
        raise DataError(f"symbol {exc.args[0]!r} is not in the alphabet") from None


def _forward_scaled(pi, A, B, obs):
    T, N = len(obs), len(pi)
    alpha = np.empty((T, N))
    scale = np.empty(T)
    a = pi * B[:, obs[0]]
    for t in range(T):
        if t:
            a = (alpha[t - 1] @ A) * B[:, obs[t]]
        c = a.sum()
        scale[t] = c
        if c <= 0.0:
            return alpha[:t], scale[: t + 1], False
        alpha[t] = a / c
    return alpha, scale, True


def _backward_scaled(A, B, obs, scale):
    T, N = len(obs), A.shape[0]
    beta = np.empty((T, N))
    beta[-1] = 1.0
    for t in range(T - 2, -1, -1):
        beta[t] = (A @ (B[:, obs[t + 1]] * beta[t + 1])) / scale[t + 1]
    return beta


def _loglik(scale, ok) -> float:
    return float(np.sum(np.log(scale))) if ok else float("-inf")


def _as_observations(hmm: DiscreteHmm, seq) -> np.ndarray:
    obs = hmm.encode(seq)
    if obs.size == 0:
        raise DataError("cannot score an empty sequence")
    return obs


def forward_loglik(hmm: DiscreteHmm, seq) -> float:
    """``log P(seq | hmm)``; ``-inf`` if the sequence is impossible."""
    obs = _as_observations(hmm, seq)
    _, scale, ok = _forward_scaled(hmm.initial, hmm.transition, hmm.emission, obs)
    return _loglik(scale, ok)


def _first_max(scores: np.ndarray) -> np.ndarray:
    # Column-wise argmax that treats scores within rounding of the maximum as
    # tied, so equal-probability paths resolve to the lower state index.
    best = scores.max(axis=0)
    slack = VITERBI_TIE_RTOL * np.where(np.isfinite(best), np.maximum(np.abs(best), 1.0), 0.0)
    return np.argmax(scores >= best - slack, axis=0)


def viterbi(hmm: DiscreteHmm, seq):
    """Most probable state path and its log probability.

    Ties go to the lower state index, both for the final state and for
    every back-pointer. Log scores within ``1e-12`` (relative) of each
    other count as tied. For an impossible sequence the log probability is
    ``-inf`` and the returned path carries no meaning.
    """
    obs = _as_observations(hmm, seq)
    with np.errstate(divide="ignore"):
        log_pi = np.log(hmm.initial)
        log_A = np.log(hmm.transition)
        log_B = np.log(hmm.emission)
    T, N = len(obs), hmm.n_states
    back = np.zeros((T, N), dtype=np.intp)
    delta = log_pi + log_B[:, obs[0]]
    for t in range(1, T):
        scores = delta[:, None] + log_A
        back[t] = _first_max(scores)
        delta = scores[back[t], np.arange(N)] + log_B[:, obs[t]]
    path = np.empty(T, dtype=np.intp)
    path[-1] = int(_first_max(delta[:, None])[0])
    for t in range(T - 1, 0, -1):
        path[t - 1] = back[t, path[t]]
    return path, float(delta[path[-1]])


def _perturbed_rows(rng, shape) -> np.ndarray:
    M = np.full(shape, 1.0 / shape[-1]) * (1.0 + rng.uniform(-0.1, 0.1, size=shape))
    return M / M.sum(axis=-1, keepdims=True)


def init_hmm(n_states: int, alphabet, seed=0) -> DiscreteHmm:
    """Uniform initial vector; transition and emission rows jittered by up to 10%."""
    rng = np.random.default_rng(seed)
    k = len(alphabet)
    return DiscreteHmm(
        initial=np.full(n_states, 1.0 / n_states),
        transition=_perturbed_rows(rng, (n_states, n_states)),
        emission=_perturbed_rows(rng, (n_states, k)),
        alphabet=alphabet,
    )


def smooth(hmm: DiscreteHmm, amount: float = DEFAULT_SMOOTHING) -> DiscreteHmm:
    """Add ``amount`` to every transition and emission entry and renormalize."""
    if amount <= 0:
        return hmm

    def _s(M):
        M = M + amount
        return M / M.sum(axis=-1, keepdims=True)

    return DiscreteHmm(hmm.initial, _s(hmm.transition), _s(hmm.emission), hmm.alphabet)


def _normalized(num, den, fallback):
    # Rows of states never visited keep their previous values.
    out = np.array(fallback, dtype=np.float64, copy=True)
    ok = den > 0
    out[ok] = num[ok] / den[ok, None]
    return out


def baum_welch(
    sequences,
    n_states: int,
    alphabet,
    tol: float = 1e-6,
    max_iter: int = 200,
    seed=0,
    smoothing: float = DEFAULT_SMOOTHING,
):
    """Fit a discrete HMM to several observation sequences with EM.

    Parameters
    ----------
    sequences : iterable of symbol sequences
    n_states : int
    alphabet : sequence
        Emission symbols, in column order.
    tol : float
        Stop once the total log-likelihood improves by less than this.
    max_iter : int
        Maximum number of re-estimation steps.
    seed : int
        Seeds the initial parameter jitter.
    smoothing : float
        Added to the transition and emission rows of the returned model
        (then renormalized) so that symbols unseen in training keep a
        nonzero probability. The EM iterations themselves are unsmoothed,
        which keeps the log-likelihood trace monotone.

    Returns
    -------
    hmm : DiscreteHmm
    report : TrainReport
        ``log_likelihood_trace[k]`` is the total log-likelihood after ``k``
        re-estimation steps (before smoothing).
    """
    if int(n_states) != n_states or n_states < 1:
        raise ConfigError(f"n_states must be a positive integer, got {n_states}")
    if not tol > 0:
        raise ConfigError(f"tol must be positive, got {tol}")
    if max_iter < 0:
        raise ConfigError(f"max_iter must be nonnegative, got {max_iter}")
    alphabet = tuple(alphabet)
    if not alphabet:
        raise ConfigError("alphabet must not be empty")
    observations = [encode(s, alphabet) for s in sequences]
    observations = [o for o in observations if o.size]
    if not observations:
        raise DataError("baum_welch needs at least one non-empty sequence")

    model = init_hmm(int(n_states), alphabet, seed)
    pi, A, B = (np.array(m) for m in (model.initial, model.transition, model.emission))
    N, K = B.shape
    trace = []
    converged = False
    iterations = 0
    while True:
        total = 0.0
        pi_acc = np.zeros(N)
        A_num = np.zeros((N, N))
        A_den = np.zeros(N)
        B_num = np.zeros((N, K))
        for obs in observations:
            alpha, scale, ok = _forward_scaled(pi, A, B, obs)
            if not ok:
                total = float("-inf")
                continue
            total += float(np.sum(np.log(scale)))
            beta = _backward_scaled(A, B, obs, scale)
            gamma = alpha * beta
            pi_acc += gamma[0]
            if len(obs) > 1:
                right = B[:, obs[1:]].T * beta[1:] / scale[1:, None]
                A_num += A * (alpha[:-1].T @ right)
                A_den += gamma[:-1].sum(axis=0)
            np.add.at(B_num.T, obs, gamma)
        trace.append(total)
        if len(trace) > 1 and trace[-1] - trace[-2] < tol:
            converged = True
            break
        if iterations >= max_iter:
            break
        pi = pi_acc / pi_acc.sum()
        A = _normalized(A_num, A_den, A)
        B = _normalized(B_num, B_num.sum(axis=1), B)
        iterations += 1

    fitted = DiscreteHmm(pi, A, B, alphabet)
    return smooth(fitted, smoothing), TrainReport(tuple(trace), iterations, converged)


@dataclass(frozen=True)
class ActionModelBank:
    """One HMM per action, all over the same pose alphabet."""

    models: dict
    alphabet: tuple = field(default=())

    def __post_init__(self):
        if not self.models:
            raise ConfigError("an action model bank needs at least one model")
        alphabets = {m.alphabet for m in self.models.values()}
        if len(alphabets) != 1:
            raise ConfigError("all action models must share one alphabet")
        shared = alphabets.pop()
        if self.alphabet and tuple(self.alphabet) != shared:
            raise ConfigError("bank alphabet differs from its models' alphabet")
        object.__setattr__(self, "alphabet", shared)
        object.__setattr__(self, "models", dict(self.models))

    @property
    def actions(self) -> tuple:
        return tuple(sorted(self.models))


def score(hmm: DiscreteHmm, seq, criterion: str = "viterbi") -> float:
    if criterion == "viterbi":
        return viterbi(hmm, seq)[1]
    if criterion == "forward":
        return forward_loglik(hmm, seq)
    raise ConfigError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")


def classify_action(bank: ActionModelBank, seq, criterion: str = "viterbi"):
    """Action whose model scores ``seq`` highest.

    Returns ``(action, scores)``. An empty sequence is rejected: the action
    is ``None`` and ``scores`` is empty. Ties go to the lexicographically
    smallest action label.
    """
    if criterion not in CRITERIA:
        raise ConfigError(f"unknown criterion {criterion!r}; expected one of {CRITERIA}")
    seq = list(seq)
    if not seq:
        return None, {}
    scores = {a: score(bank.models[a], seq, criterion) for a in bank.actions}
    return best_action(scores), scores


def best_action(scores: dict):
    """Argmax of ``{action: log score}``; ties go to the smallest label."""
    best = None
    for a in sorted(scores):
        if best is None or scores[a] > scores[best]:
            best = a
    return best


def train_bank(sequences_by_action, alphabet, n_states: int = 5, tol: float = 1e-6, max_iter: int = 200,
               seed=0, smoothing: float = DEFAULT_SMOOTHING):
    """Train one HMM per action. Returns ``(bank, {action: TrainReport})``."""
    models, reports = {}, {}
    for action in sorted(sequences_by_action):
        models[action], reports[action] = baum_welch(
            sequences_by_action[action], n_states, alphabet, tol, max_iter, seed, smoothing
        )
    return ActionModelBank(models, tuple(alphabet)), reports
