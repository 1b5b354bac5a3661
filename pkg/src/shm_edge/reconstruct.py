"""Compression and reconstruction engines: batch PCA, streaming History-PCA, FC autoencoder.

All engines work on feature matrices of shape (N, M). Window objects are
accepted wherever a single vector is expected and returned as Windows.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence, Union

import numpy as np

from .errors import (
    BlockSizeError,
    DimensionError,
    InsufficientDataError,
    ParameterError,
    TrainingError,
)
from .signal import Window, WindowsLike, as_matrix


class RankDeficiencyWarning(UserWarning):
    """More components requested than the covariance rank supports."""


def _fix_signs(V: np.ndarray) -> np.ndarray:
    """Flip columns so the largest-magnitude entry of each is positive."""
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def _vector(w: Union[Window, np.ndarray]) -> np.ndarray:
    return w.values if isinstance(w, Window) else np.asarray(w, dtype=np.float64)


def _check_dim(X: np.ndarray, M: int) -> None:
    if X.shape[-1] != M:
        raise DimensionError(f"input dimension {X.shape[-1]} does not match model dimension {M}")


# -- batch PCA -----------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PcaModel:
    mean: np.ndarray
    components: np.ndarray  # (M, k), orthonormal columns
    eigenvalues: np.ndarray  # full spectrum, descending

    @property
    def M(self) -> int:
        return self.components.shape[0]

    @property
    def k(self) -> int:
        return self.components.shape[1]

    @property
    def cf(self) -> float:
        return self.M / self.k

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        _check_dim(X, self.M)
        W = self.components
        return self.mean + ((X - self.mean) @ W) @ W.T

    def encode(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        _check_dim(X, self.M)
        return (X - self.mean) @ self.components

    def __eq__(self, other: object) -> bool:
        return isinstance(other, PcaModel) and all(
            np.array_equal(a, b)
            for a, b in ((self.mean, other.mean), (self.components, other.components),
                         (self.eigenvalues, other.eigenvalues))
        )


def fit_pca_batch(windows: WindowsLike, k: int) -> PcaModel:
    """Top-k eigenvectors of the sample covariance (1/(N-1) normalisation)."""
    X = as_matrix(windows)
    N, M = X.shape if X.ndim == 2 else (0, 0)
    if N < 2:
        raise InsufficientDataError(f"PCA needs at least 2 windows, got {N}")
    if not 1 <= k <= M:
        raise ParameterError(f"k must lie in [1, {M}], got {k}")
    mean = X.mean(axis=0)
    Xc = X - mean
    C = (Xc.T @ Xc) / (N - 1)
    lam, V = np.linalg.eigh(C)
    lam, V = lam[::-1], V[:, ::-1]
    tol = max(M, N) * np.finfo(float).eps * max(lam[0], 0.0)
    rank = int(np.sum(lam > tol))
    if k > rank:
        warnings.warn(f"k={k} exceeds covariance rank {rank}; trailing components span the null space",
                      RankDeficiencyWarning, stacklevel=2)
    lam = np.where(lam > tol, lam, 0.0)
    return PcaModel(mean, _fix_signs(V[:, :k]), lam)


def pca_reconstruct(model: PcaModel, w: Union[Window, np.ndarray]):
    x_hat = model.reconstruct(_vector(w))
    return w.with_values(x_hat) if isinstance(w, Window) else x_hat


def principal_angles(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """Principal angles (radians, ascending) between the column spans of A and B."""
    Qa, _ = np.linalg.qr(A)
    Qb, _ = np.linalg.qr(B)
    s = np.linalg.svd(Qa.T @ Qb, compute_uv=False)
    return np.sort(np.arccos(np.clip(s, -1.0, 1.0)))


# -- History PCA ---------------------------------------------------------------


@dataclass(eq=False)
class HpcaState:
    """Running state of the streaming subspace tracker.

    ``history_weight`` of None uses the adaptive weight n/(n+1) for the
    n-th block, which averages all blocks equally; a float fixes it.
    """

    components_estimate: np.ndarray  # (M, k)
    eigenvalues: np.ndarray  # (k,)
    mean: np.ndarray  # (M,)
    samples_seen: int = 0
    blocks_seen: int = 0
    history_weight: float | None = None
    rng_seed: int = 0
    zero_variance: bool = False

    @classmethod
    def initial(cls, M: int, k: int, rng_seed: int = 0, history_weight: float | None = None) -> "HpcaState":
        if not 1 <= k <= M:
            raise ParameterError(f"k must lie in [1, {M}], got {k}")
        rng = np.random.default_rng(rng_seed)
        Q, _ = np.linalg.qr(rng.normal(size=(M, k)))
        return cls(Q, np.zeros(k), np.zeros(M), 0, 0, history_weight, rng_seed)

    @property
    def M(self) -> int:
        return self.components_estimate.shape[0]

    @property
    def k(self) -> int:
        return self.components_estimate.shape[1]

    def to_pca(self) -> PcaModel:
        return PcaModel(self.mean.copy(), self.components_estimate.copy(), self.eigenvalues.copy())

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        return self.to_pca().reconstruct(X)

    def copy(self) -> "HpcaState":
        return HpcaState(self.components_estimate.copy(), self.eigenvalues.copy(), self.mean.copy(),
                         self.samples_seen, self.blocks_seen, self.history_weight, self.rng_seed,
                         self.zero_variance)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, HpcaState):
            return NotImplemented
        return (
            np.array_equal(self.components_estimate, other.components_estimate)
            and np.array_equal(self.eigenvalues, other.eigenvalues)
            and np.array_equal(self.mean, other.mean)
            and (self.samples_seen, self.blocks_seen, self.history_weight, self.rng_seed, self.zero_variance)
            == (other.samples_seen, other.blocks_seen, other.history_weight, other.rng_seed, other.zero_variance)
        )


def hpca_update(state: HpcaState, block: np.ndarray) -> HpcaState:
    """Fold one block into the state in place and return it.

    Y = a*Q*diag(lam) + (1-a)*C_block*Q followed by QR. C_block*Q is formed
    as Bc^T (Bc Q) / (b-1), so the M x M covariance never exists.
    """
    B = np.asarray(block, dtype=np.float64)
    if B.ndim != 2:
        raise ParameterError("block must be a 2-D array")
    _check_dim(B, state.M)
    b = B.shape[0]
    if b < max(state.k, 2):
        raise BlockSizeError(f"block of {b} rows is shorter than k={state.k}")

    n_new = state.samples_seen + b
    state.mean = state.mean + (B.sum(axis=0) - b * state.mean) / n_new
    state.samples_seen = n_new
    Bc = B - state.mean

    n = state.blocks_seen
    a = n / (n + 1) if state.history_weight is None else float(state.history_weight)
    Q, lam = state.components_estimate, state.eigenvalues
    BQ = Bc @ Q
    Y = a * Q * lam + (1 - a) * (Bc.T @ BQ) / (b - 1)
    scale = float(np.einsum("ij,ij->", B, B)) / b
    state.blocks_seen = n + 1
    if not np.linalg.norm(Y) > 1e-12 * max(scale, np.finfo(float).tiny):
        state.zero_variance = True
        return state
    state.zero_variance = False

    Qn, _ = np.linalg.qr(Y)
    # Rayleigh quotients of the blended operator on the new basis
    P = Qn.T @ Q
    BQn = Bc @ Qn
    lam_new = a * (P * P) @ lam + (1 - a) * np.einsum("ij,ij->j", BQn, BQn) / (b - 1)
    order = np.argsort(-lam_new, kind="stable")
    state.components_estimate = _fix_signs(Qn[:, order])
    state.eigenvalues = lam_new[order]
    return state


def fit_pca_streaming(
    stream: Iterable[WindowsLike],
    k: int,
    state: HpcaState | None = None,
    passes: int = 1,
    rng_seed: int = 0,
) -> HpcaState:
    """Run History-PCA over ``stream`` (an iterable of blocks) ``passes`` times.

    The input state is not modified; a fresh state is seeded from ``rng_seed``
    when none is given. Multiple passes need a re-iterable stream.
    """
    blocks = stream if passes == 1 else list(stream)
    st = state.copy() if state is not None else None
    for _ in range(passes):
        for blk in blocks:
            B = as_matrix(blk)
            if st is None:
                st = HpcaState.initial(B.shape[1], k, rng_seed)
            elif st.k != k:
                raise ParameterError(f"state tracks k={st.k}, requested k={k}")
            hpca_update(st, B)
    if st is None:
        raise InsufficientDataError("empty stream")
    return st


def iter_blocks(X: np.ndarray, block_size: int) -> list[np.ndarray]:
    """Split rows into consecutive blocks, merging a short tail into the last block."""
    X = as_matrix(X)
    n = X.shape[0]
    if n < block_size:
        return [X]
    cuts = list(range(0, n - block_size + 1, block_size))
    out = [X[c:c + block_size] for c in cuts]
    tail = n - (cuts[-1] + block_size)
    if tail:
        out[-1] = X[cuts[-1]:]
    return out


# -- autoencoder ---------------------------------------------------------------

ACTIVATIONS = ("relu", "identity")


def _act(z: np.ndarray, kind: str) -> np.ndarray:
    return np.maximum(z, 0.0) if kind == "relu" else z


def _act_grad(z: np.ndarray, kind: str) -> np.ndarray:
    return (z > 0).astype(np.float64) if kind == "relu" else np.ones_like(z)


@dataclass(frozen=True, eq=False)
class AeModel:
    enc_weights: np.ndarray  # (k, M)
    enc_bias: np.ndarray  # (k,)
    dec_weights: np.ndarray  # (M, k)
    dec_bias: np.ndarray  # (M,)
    activation: str = "relu"
    output_activation: str = "identity"
    mean: np.ndarray | None = None  # input centering; None means zero
    train_meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for a in (self.activation, self.output_activation):
            if a not in ACTIVATIONS:
                raise ParameterError(f"activation must be one of {ACTIVATIONS}")
        if self.mean is None:
            object.__setattr__(self, "mean", np.zeros(self.enc_weights.shape[1]))

    @property
    def M(self) -> int:
        return self.enc_weights.shape[1]

    @property
    def k(self) -> int:
        return self.enc_weights.shape[0]

    @property
    def params(self) -> dict[str, np.ndarray]:
        return {"We": self.enc_weights, "be": self.enc_bias, "Wd": self.dec_weights, "bd": self.dec_bias}

    def reconstruct(self, X: np.ndarray) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        _check_dim(X, self.M)
        h = _act((X - self.mean) @ self.enc_weights.T + self.enc_bias, self.activation)
        return _act(h @ self.dec_weights.T + self.dec_bias, self.output_activation) + self.mean

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, AeModel):
            return NotImplemented
        same = all(np.array_equal(a, b) for a, b in zip(
            (self.enc_weights, self.enc_bias, self.dec_weights, self.dec_bias, self.mean),
            (other.enc_weights, other.enc_bias, other.dec_weights, other.dec_bias, other.mean)))
        return same and (self.activation, self.output_activation) == (other.activation, other.output_activation)


def ae_reconstruct(model: AeModel, w: Union[Window, np.ndarray]):
    x_hat = model.reconstruct(_vector(w))
    return w.with_values(x_hat) if isinstance(w, Window) else x_hat


def ae_loss_and_grads(
    params: dict[str, np.ndarray],
    X: np.ndarray,
    activation: str = "relu",
    output_activation: str = "identity",
) -> tuple[float, dict[str, np.ndarray]]:
    """Mean squared reconstruction loss over all entries of X and its gradients."""
    We, be, Wd, bd = params["We"], params["be"], params["Wd"], params["bd"]
    n, M = X.shape
    z = X @ We.T + be
    h = _act(z, activation)
    u = h @ Wd.T + bd
    y = _act(u, output_activation)
    r = y - X
    loss = float(np.mean(r * r))
    du = (2.0 / (n * M)) * r * _act_grad(u, output_activation)
    dz = (du @ Wd) * _act_grad(z, activation)
    grads = {"We": dz.T @ X, "be": dz.sum(axis=0), "Wd": du.T @ h, "bd": du.sum(axis=0)}
    return loss, grads


def init_autoencoder(M: int, k: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Glorot-uniform weights, zero biases."""
    rng = np.random.default_rng(seed)
    lim = math.sqrt(6.0 / (M + k))
    return {
        "We": rng.uniform(-lim, lim, (k, M)),
        "be": np.zeros(k),
        "Wd": rng.uniform(-lim, lim, (M, k)),
        "bd": np.zeros(M),
    }


def fit_autoencoder(
    windows: WindowsLike,
    k: int,
    epochs: int = 80,
    lr: float = 1e-3,
    seed: int = 0,
    batch_size: int = 256,
    activation: str = "relu",
    output_activation: str = "identity",
    center: bool = True,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> AeModel:
    """Train an M -> k -> M autoencoder with Adam on mean squared error.

    ``train_meta["loss_history"]`` holds the full-data loss before training
    and after every epoch.
    """
    X = as_matrix(windows)
    N, M = X.shape
    if N < 1:
        raise InsufficientDataError("autoencoder needs at least one window")
    if not 1 <= k <= M:
        raise ParameterError(f"k must lie in [1, {M}], got {k}")
    if epochs < 0 or not lr > 0 or batch_size < 1:
        raise ParameterError("epochs >= 0, lr > 0 and batch_size >= 1 required")
    mean = X.mean(axis=0) if center else np.zeros(M)
    Xc = X - mean
    rng = np.random.default_rng(seed)
    params = init_autoencoder(M, k, seed)
    m1 = {n: np.zeros_like(p) for n, p in params.items()}
    m2 = {n: np.zeros_like(p) for n, p in params.items()}
    b1, b2 = betas
    t = 0
    history = [ae_loss_and_grads(params, Xc, activation, output_activation)[0]]
    for _ in range(epochs):
        order = rng.permutation(N)
        for s in range(0, N, batch_size):
            _, g = ae_loss_and_grads(params, Xc[order[s:s + batch_size]], activation, output_activation)
            t += 1
            for name, p in params.items():
                m1[name] = b1 * m1[name] + (1 - b1) * g[name]
                m2[name] = b2 * m2[name] + (1 - b2) * g[name] ** 2
                mh = m1[name] / (1 - b1**t)
                vh = m2[name] / (1 - b2**t)
                p -= lr * mh / (np.sqrt(vh) + eps)
        loss = ae_loss_and_grads(params, Xc, activation, output_activation)[0]
        history.append(loss)
        if not math.isfinite(loss):
            raise TrainingError(f"loss diverged at epoch {len(history) - 1}", trajectory=history)
    meta = {"epochs": epochs, "lr": lr, "final_loss": history[-1], "loss_history": tuple(history),
            "seed": seed, "batch_size": batch_size}
    return AeModel(params["We"], params["be"], params["Wd"], params["bd"], activation, output_activation,
                   mean, meta)


ReconModel = Union[PcaModel, HpcaState, AeModel]


def reconstruct_matrix(model: ReconModel, X: np.ndarray) -> np.ndarray:
    return model.reconstruct(as_matrix(X))


def reconstruction_mse(model: ReconModel, X: np.ndarray) -> np.ndarray:
    """Per-row mean squared reconstruction error."""
    X = as_matrix(X)
    R = X - model.reconstruct(X)
    return np.einsum("ij,ij->i", R, R) / X.shape[1]


def model_kind(model: ReconModel) -> str:
    if isinstance(model, PcaModel):
        return "pca"
    if isinstance(model, HpcaState):
        return "hpca"
    if isinstance(model, AeModel):
        return "ae"
    raise ParameterError(f"unknown model type {type(model).__name__}")
