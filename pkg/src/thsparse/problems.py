"""Seeded generators for sensing matrices, sparse truths, and observations.

Randomness comes from the counter-based Philox generator keyed through
``numpy.random.SeedSequence`` with an explicit spawn path, so any substream
is reproducible independently of scheduling: ``rng_stream(seed, 3, 7)``
always yields the same numbers, on any platform, no matter what other
streams were drawn first.

Two sensing-matrix families are provided:

* correlated Gaussian rows with covariance ``(1 - r) I + r * ones`` — drawn
  as ``sqrt(1-r) * z + sqrt(r) * g`` with a shared per-row factor ``g``
  (exact for this rank-one-plus-identity covariance, and O(m*n) instead of
  a dense Cholesky of the n x n covariance);
* oversampled partial cosine columns ``cos(2*pi*i*gamma/F)/sqrt(m)`` for
  ``i = 1..n`` with one uniform draw ``gamma`` in [0,1]^m per matrix; larger
  ``F`` gives higher column coherence.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .linalg import as_matrix, load_matrix, save_matrix

__all__ = [
    "rng_stream",
    "GenSpec",
    "Problem",
    "gen_gaussian",
    "gen_dct",
    "gen_sparse_truth",
    "gen_decaying_truth",
    "observe",
    "sigma_for_snr",
    "achieved_snr_db",
    "make_problem",
    "save_problem",
    "load_problem",
]


def rng_stream(seed, *path) -> np.random.Generator:
    """Philox generator for the substream at ``path`` under ``seed``."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(p) for p in path))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class GenSpec:
    """One recovery-instance recipe.

    ``kind`` is ``"gaussian"`` (``param`` = row correlation r, 0 <= r < 1) or
    ``"dct"`` (``param`` = oversampling factor F > 0).
    """

    kind: str
    m: int
    n: int
    param: float
    s: int
    sigma: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("gaussian", "dct"):
            raise ValueError(f"unknown matrix kind {self.kind!r}")
        if not (1 <= self.m < self.n):
            raise ValueError(f"need 1 <= m < n, got m={self.m}, n={self.n}")
        if self.kind == "gaussian" and not (0.0 <= self.param < 1.0):
            raise ValueError(f"gaussian correlation must be in [0, 1), got {self.param}")
        if self.kind == "dct" and not self.param > 0.0:
            raise ValueError(f"dct oversampling factor must be positive, got {self.param}")
        if not (0 <= self.s < self.n):
            raise ValueError(f"sparsity must satisfy 0 <= s < n, got {self.s}")
        if self.sigma < 0.0:
            raise ValueError(f"noise level must be nonnegative, got {self.sigma}")


@dataclass
class Problem:
    """Sensing matrix, observation, optional ground truth, noise level."""

    A: np.ndarray
    b: np.ndarray
    truth: np.ndarray | None = None
    sigma: float = 0.0
    spec: GenSpec | None = None
    seed: int | None = None

    def __post_init__(self):
        self.A = as_matrix(self.A)
        self.b = np.asarray(self.b, dtype=np.float64)
        if self.b.shape != (self.A.shape[0],):
            raise ValueError("b must have one entry per matrix row")
        if not np.any(self.b):
            raise ValueError("b must be nonzero")
        if self.truth is not None:
            self.truth = np.asarray(self.truth, dtype=np.float64)
            if self.truth.shape != (self.A.shape[1],):
                raise ValueError("truth must have one entry per matrix column")

    @property
    def shape(self):
        return self.A.shape


def gen_gaussian(m, n, r, rng) -> np.ndarray:
    """Rows i.i.d. normal with unit variance and pairwise correlation r."""
    if not (0.0 <= r < 1.0):
        raise ValueError(f"correlation must be in [0, 1), got {r}")
    z = rng.standard_normal((m, n))
    g = rng.standard_normal(m)
    return np.sqrt(1.0 - r) * z + np.sqrt(r) * g[:, None]


def gen_dct(m, n, F, rng) -> np.ndarray:
    """Oversampled partial cosine matrix; every entry bounded by 1/sqrt(m)."""
    if not F > 0.0:
        raise ValueError(f"oversampling factor must be positive, got {F}")
    gamma = rng.random(m)
    i = np.arange(1, n + 1, dtype=np.float64)
    return np.cos(2.0 * np.pi * np.outer(gamma, i) / F) / np.sqrt(m)


def gen_sparse_truth(n, s, rng) -> np.ndarray:
    """Exactly s standard-normal entries on a uniform random support."""
    if not (1 <= s < n):
        raise ValueError(f"need 1 <= s < n, got s={s}, n={n}")
    x = np.zeros(n)
    support = rng.choice(n, size=s, replace=False)
    values = rng.standard_normal(s)
    # A zero draw would break the exact-cardinality contract; essentially
    # impossible for continuous draws, but cheap to guarantee.
    while np.any(values == 0.0):
        values[values == 0.0] = rng.standard_normal(np.sum(values == 0.0))
    x[support] = values
    return x


def gen_decaying_truth(n, rng) -> np.ndarray:
    """Logistic-decay amplitudes spanning ~1e-1 to ~1e1 on a random support.

    The 14 amplitudes are sqrt(200) / (1 + exp((i - 100)/20)) for
    i = 1, 16, ..., 196; their positions are randomized to avoid structural
    bias.
    """
    if n < 200:
        raise ValueError(f"need n >= 200, got {n}")
    i = np.arange(1, 201, 15, dtype=np.float64)
    values = np.sqrt(200.0) / (1.0 + np.exp((i - 100.0) / 20.0))
    support = rng.choice(n, size=values.size, replace=False)
    x = np.zeros(n)
    x[support] = values
    return x


def observe(A, truth, sigma, rng=None) -> np.ndarray:
    """Observation b = A @ truth, plus white Gaussian noise when sigma > 0.

    A zero observation is rejected: with noise the draw is repeated, without
    noise it is a configuration error (the models assume b != 0).
    """
    A = as_matrix(A)
    truth = np.asarray(truth, dtype=np.float64)
    if sigma < 0.0:
        raise ValueError(f"noise level must be nonnegative, got {sigma}")
    clean = A @ truth
    if sigma == 0.0:
        if not np.any(clean):
            raise ValueError("A @ truth is zero and sigma == 0; b would be zero")
        return clean
    if rng is None:
        raise ValueError("a generator is required when sigma > 0")
    b = clean + sigma * rng.standard_normal(A.shape[0])
    while not np.any(b):
        b = clean + sigma * rng.standard_normal(A.shape[0])
    return b


def sigma_for_snr(A, truth, snr_db) -> float:
    """Noise level giving the target signal-to-noise ratio in expectation.

    SNR here is the conventional 10*log10(||A truth||^2 / E||noise||^2).
    """
    A = as_matrix(A)
    clean = A @ np.asarray(truth, dtype=np.float64)
    signal = np.linalg.norm(clean)
    if signal == 0.0:
        raise ValueError("A @ truth is zero; SNR is undefined")
    return float(signal * 10.0 ** (-snr_db / 20.0) / np.sqrt(A.shape[0]))


def achieved_snr_db(b, clean):
    """Realized SNR of b against the clean observation, both orientations.

    Returns ``(signal_to_noise_db, noise_to_signal_db)``; the first is the
    conventional reading (higher = less noise), the second its negative.
    Noise-free input gives ``(inf, -inf)``.
    """
    b = np.asarray(b, dtype=np.float64)
    clean = np.asarray(clean, dtype=np.float64)
    noise = np.linalg.norm(b - clean)
    signal = np.linalg.norm(clean)
    if noise == 0.0:
        return float("inf"), float("-inf")
    conventional = 20.0 * np.log10(signal / noise)
    return float(conventional), float(-conventional)


def make_problem(spec: GenSpec) -> Problem:
    """Deterministically realize a spec: matrix, truth, observation."""
    if spec.kind == "gaussian":
        A = gen_gaussian(spec.m, spec.n, spec.param, rng_stream(spec.seed, 0))
    else:
        A = gen_dct(spec.m, spec.n, spec.param, rng_stream(spec.seed, 0))
    truth = gen_sparse_truth(spec.n, spec.s, rng_stream(spec.seed, 1))
    b = observe(A, truth, spec.sigma, rng_stream(spec.seed, 2))
    return Problem(A=A, b=b, truth=truth, sigma=spec.sigma, spec=spec, seed=spec.seed)


def save_problem(problem: Problem, prefix) -> None:
    """Write ``<prefix>.bin`` (matrix) and ``<prefix>.json`` (everything else)."""
    prefix = str(prefix)
    save_matrix(prefix + ".bin", problem.A)
    sidecar = {
        "sigma": problem.sigma,
        "seed": problem.seed,
        "b": problem.b.tolist(),
        "spec": None,
        "truth_support": None,
        "truth_values": None,
    }
    if problem.spec is not None:
        sidecar["spec"] = {
            "kind": problem.spec.kind,
            "m": problem.spec.m,
            "n": problem.spec.n,
            "param": problem.spec.param,
            "s": problem.spec.s,
            "sigma": problem.spec.sigma,
            "seed": problem.spec.seed,
        }
    if problem.truth is not None:
        support = np.flatnonzero(problem.truth)
        sidecar["truth_support"] = support.tolist()
        sidecar["truth_values"] = problem.truth[support].tolist()
    with open(prefix + ".json", "w") as fh:
        json.dump(sidecar, fh, indent=1)


def load_problem(prefix) -> Problem:
    prefix = str(prefix)
    A = load_matrix(prefix + ".bin")
    with open(prefix + ".json") as fh:
        sidecar = json.load(fh)
    truth = None
    if sidecar.get("truth_support") is not None:
        truth = np.zeros(A.shape[1])
        truth[np.asarray(sidecar["truth_support"], dtype=int)] = sidecar["truth_values"]
    spec = None
    if sidecar.get("spec") is not None:
        spec = GenSpec(**sidecar["spec"])
    return Problem(
        A=A,
        b=np.asarray(sidecar["b"], dtype=np.float64),
        truth=truth,
        sigma=float(sidecar.get("sigma", 0.0)),
        spec=spec,
        seed=sidecar.get("seed"),
    )
