"""Neural update rule for the cellular automaton.

Four small dense stacks (widths fixed, latent width ``h`` configurable)::

    mlp1:    8 -> 8 relu -> 8 relu -> 8 tanh        neighbors -> z
    encoder: 10 -> 8 relu -> 8 relu -> h relu       [cell, z] -> latent
    decoder: h -> 8 relu -> 8 relu -> 2 relu        latent -> reconstructed cell
    mlp2:    h -> 8 relu -> 8 relu -> 2 tanh        latent -> delta / output_scale

All weights live in one flat float64 vector so the optimizer updates a
single array; per-layer ``W``/``b`` are views into it. Gradients are exact
reverse-mode derivatives of the weighted reconstruction + prediction MSE.
"""
import time
from dataclasses import asdict, dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from . import _container
from ._validation import check_features, check_targets
from .exceptions import DomainError, NumericalError, TrainingDivergedError

__all__ = [
    "NetworkParams",
    "TrainConfig",
    "TrainReport",
    "CARegressor",
    "init_params",
    "zero_params",
    "forward",
    "loss",
    "loss_and_grad",
    "gradient",
    "train",
    "save_checkpoint",
    "load_checkpoint",
]

SUBNETS = ("mlp1", "encoder", "decoder", "mlp2")
HIDDEN = 8


def architecture(latent_dim):
    """``{subnet: [(fan_in, fan_out, activation), ...]}``."""
    h = latent_dim
    return {
        "mlp1": [(8, HIDDEN, "relu"), (HIDDEN, HIDDEN, "relu"), (HIDDEN, 8, "tanh")],
        "encoder": [(10, HIDDEN, "relu"), (HIDDEN, HIDDEN, "relu"), (HIDDEN, h, "relu")],
        "decoder": [(h, HIDDEN, "relu"), (HIDDEN, HIDDEN, "relu"), (HIDDEN, 2, "relu")],
        "mlp2": [(h, HIDDEN, "relu"), (HIDDEN, HIDDEN, "relu"), (HIDDEN, 2, "tanh")],
    }


class NetworkParams:
    """Weights of the four subnets plus the input normalization.

    Parameters
    ----------
    latent_dim : int
    output_scale : float
        Multiplies the final tanh of ``mlp2``; bounds ``|delta|``.
    theta : ndarray, optional
        Flat parameter vector; zeros when omitted.
    shift, scale : array-like of shape (2,)
        Affine map ``(x - shift) / scale`` applied to u and v before the
        network; deltas are divided by ``scale`` on the way in and
        multiplied by it on the way out. Identity by default.
    """

    def __init__(self, latent_dim, output_scale=1.0, theta=None, shift=(0.0, 0.0),
                 scale=(1.0, 1.0)):
        if latent_dim < 1:
            raise DomainError(f"latent_dim must be >= 1, got {latent_dim}")
        if not output_scale > 0:
            raise DomainError(f"output_scale must be positive, got {output_scale}")
        self.latent_dim = int(latent_dim)
        self.output_scale = float(output_scale)
        self.shift = np.asarray(shift, dtype=np.float64).copy()
        self.scale = np.asarray(scale, dtype=np.float64).copy()
        if self.shift.shape != (2,) or self.scale.shape != (2,) or not (self.scale > 0).all():
            raise DomainError("shift and scale must be 2-vectors with positive scale")
        self.arch = architecture(self.latent_dim)
        self.size = sum(i * o + o for layers in self.arch.values() for i, o, _ in layers)
        if theta is None:
            theta = np.zeros(self.size)
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.size,):
            raise DomainError(f"theta must have shape ({self.size},), got {theta.shape}")
        if not np.isfinite(theta).all():
            raise DomainError("parameters contain non-finite values")
        self.theta = theta
        self.layers = self._views(self.theta)

    def _views(self, flat):
        """Split a flat vector into ``{subnet: [(W, b), ...]}`` views."""
        out = {}
        pos = 0
        for name in SUBNETS:
            out[name] = []
            for i, o, _ in self.arch[name]:
                W = flat[pos:pos + i * o].reshape(i, o)
                pos += i * o
                b = flat[pos:pos + o]
                pos += o
                out[name].append((W, b))
        return out

    def copy(self):
        return NetworkParams(self.latent_dim, self.output_scale, self.theta.copy(),
                             self.shift, self.scale)

    def __eq__(self, other):
        if not isinstance(other, NetworkParams):
            return NotImplemented
        return (self.latent_dim == other.latent_dim
                and self.output_scale == other.output_scale
                and np.array_equal(self.theta, other.theta)
                and np.array_equal(self.shift, other.shift)
                and np.array_equal(self.scale, other.scale))

    def normalize(self, cell, neighbors):
        cell = (cell - self.shift) / self.scale
        neighbors = (neighbors - np.tile(self.shift, 4)) / np.tile(self.scale, 4)
        return cell, neighbors

    def predict_delta(self, cell, neighbors):
        """Delta in physical units for raw (unnormalized) inputs."""
        c, nb = self.normalize(np.asarray(cell, dtype=np.float64),
                               np.asarray(neighbors, dtype=np.float64))
        _, delta = forward(self, c, nb)
        return delta * self.scale


def init_params(latent_dim=16, output_scale=2.0, seed=0, shift=(0.0, 0.0), scale=(1.0, 1.0)):
    """He-uniform weights (bound ``sqrt(6 / fan_in)``), zero biases."""
    p = NetworkParams(latent_dim, output_scale, shift=shift, scale=scale)
    rng = np.random.default_rng(seed)
    for name in SUBNETS:
        for (W, _), (fan_in, _, _) in zip(p.layers[name], p.arch[name]):
            bound = np.sqrt(6.0 / fan_in)
            W[...] = rng.uniform(-bound, bound, size=W.shape)
    return p


def zero_params(latent_dim=16, output_scale=2.0):
    return NetworkParams(latent_dim, output_scale)


def _relu(z):
    return np.maximum(z, 0.0)


def _stack_forward(layers, arch, x, tape):
    for (W, b), (_, _, act) in zip(layers, arch):
        z = x @ W
        z += b
        a = _relu(z) if act == "relu" else np.tanh(z)
        tape.append((x, z, a, act))
        x = a
    return x


def _stack_backward(layers, tape, grads, da):
    """Backpropagate ``da`` through one stack, filling ``grads`` in place."""
    for (W, _), (gW, gb), (x, z, a, act) in zip(layers[::-1], grads[::-1], tape[::-1]):
        if act == "relu":
            dz = da * (z > 0)
        else:
            dz = da * (1.0 - a * a)
        np.dot(x.T, dz, out=gW)
        np.sum(dz, axis=0, out=gb)
        da = dz @ W.T
    return da


def _run(p, cell, neighbors):
    tapes = {name: [] for name in SUBNETS}
    z = _stack_forward(p.layers["mlp1"], p.arch["mlp1"], neighbors, tapes["mlp1"])
    lat = _stack_forward(p.layers["encoder"], p.arch["encoder"],
                         np.concatenate([cell, z], axis=1), tapes["encoder"])
    recon = _stack_forward(p.layers["decoder"], p.arch["decoder"], lat, tapes["decoder"])
    m = _stack_forward(p.layers["mlp2"], p.arch["mlp2"], lat, tapes["mlp2"])
    return recon, p.output_scale * m, tapes


def _as_batch(cell, neighbors):
    cell = np.asarray(cell, dtype=np.float64)
    neighbors = np.asarray(neighbors, dtype=np.float64)
    single = cell.ndim == 1
    cell = np.atleast_2d(cell)
    neighbors = np.atleast_2d(neighbors)
    if cell.shape[1] != 2 or neighbors.shape[1] != 8 or len(cell) != len(neighbors):
        raise DomainError(f"expected (B, 2) cells and (B, 8) neighbors, got "
                          f"{cell.shape} and {neighbors.shape}")
    return cell, neighbors, single


def forward(p, cell, neighbors):
    """Reconstruction and delta for one sample or a batch.

    ``cell`` is ``(2,)`` or ``(B, 2)``; ``neighbors`` is ``(8,)`` or ``(B, 8)``.
    """
    cell, neighbors, single = _as_batch(cell, neighbors)
    recon, delta, tapes = _run(p, cell, neighbors)
    for name in SUBNETS:
        if not np.isfinite(tapes[name][-1][2]).all():
            raise NumericalError(f"non-finite activations in {name}")
    if single:
        return recon[0], delta[0]
    return recon, delta


def loss(p, cell, neighbors, target, w_recon=1.0, w_pred=1.0):
    """``w_recon * MSE(recon, cell) + w_pred * MSE(delta, target)``."""
    cell, neighbors, _ = _as_batch(cell, neighbors)
    if len(cell) == 0:
        raise DomainError("empty batch")
    recon, delta = forward(p, cell, neighbors)
    target = np.atleast_2d(np.asarray(target, dtype=np.float64))
    return float(w_recon * np.mean((recon - cell) ** 2)
                 + w_pred * np.mean((delta - target) ** 2))


def loss_and_grad(p, cell, neighbors, target, w_recon=1.0, w_pred=1.0, out=None):
    """Loss and its gradient as a flat vector aligned with ``p.theta``."""
    cell, neighbors, _ = _as_batch(cell, neighbors)
    n = len(cell)
    if n == 0:
        raise DomainError("empty batch")
    target = np.atleast_2d(target)
    recon, delta, tapes = _run(p, cell, neighbors)
    r_err = recon - cell
    d_err = delta - target
    value = w_recon * np.mean(r_err * r_err) + w_pred * np.mean(d_err * d_err)

    g = np.empty(p.size) if out is None else out
    gl = p._views(g)
    norm = 2.0 / (2 * n)
    d_lat = _stack_backward(p.layers["decoder"], tapes["decoder"], gl["decoder"],
                            (w_recon * norm) * r_err)
    d_lat = d_lat + _stack_backward(p.layers["mlp2"], tapes["mlp2"], gl["mlp2"],
                                    (w_pred * norm * p.output_scale) * d_err)
    d_c = _stack_backward(p.layers["encoder"], tapes["encoder"], gl["encoder"], d_lat)
    _stack_backward(p.layers["mlp1"], tapes["mlp1"], gl["mlp1"], d_c[:, 2:])
    return float(value), g


def gradient(p, cell, neighbors, target, w_recon=1.0, w_pred=1.0):
    return loss_and_grad(p, cell, neighbors, target, w_recon, w_pred)[1]


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 256
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    init_seed: int = 0
    shuffle_seed: int = 1
    w_recon: float = 1.0
    w_pred: float = 1.0
    output_scale: float = 2.0
    latent_dim: int = 16
    validation_fraction: float = 0.1
    normalize: bool = True

    def __post_init__(self):
        for name in ("epochs", "batch_size", "learning_rate", "epsilon", "output_scale",
                     "latent_dim"):
            if not getattr(self, name) > 0:
                raise DomainError(f"{name} must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise DomainError("moment coefficients must lie in (0, 1)")
        if self.w_recon < 0 or self.w_pred < 0:
            raise DomainError("loss weights must be non-negative")
        if not 0 <= self.validation_fraction <= 0.5:
            raise DomainError("validation_fraction must lie in [0, 0.5]")


@dataclass
class TrainReport:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    best_epoch: int = -1
    final_one_step_mse: float = float("nan")
    target_variance: float = float("nan")
    output_scale: float = float("nan")
    n_train: int = 0
    n_val: int = 0
    wall_clock: float = 0.0
    config: dict = field(default_factory=dict)

    def to_dict(self):
        return asdict(self)


class _Adam:
    def __init__(self, size, lr, beta1, beta2, eps):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = np.zeros(size)
        self.v = np.zeros(size)
        self.t = 0

    def step(self, theta, g):
        self.t += 1
        self.m *= self.beta1
        self.m += (1 - self.beta1) * g
        self.v *= self.beta2
        self.v += (1 - self.beta2) * (g * g)
        lr = self.lr * np.sqrt(1 - self.beta2**self.t) / (1 - self.beta1**self.t)
        theta -= lr * self.m / (np.sqrt(self.v) + self.eps)


class CARegressor(BaseEstimator, RegressorMixin):
    """Learn the per-cell update ``X(t+1) - X(t) = f(X(t), X_p(t))``.

    ``fit`` takes ``X`` of shape ``(n_samples, 10)`` (cell u, v then the
    eight neighbor values, up/bottom/left/right) and ``y`` of shape
    ``(n_samples, 2)`` (one-interval change); ``predict`` returns deltas.
    Training uses mini-batch Adam and keeps the parameters with the lowest
    validation loss.

    Attributes
    ----------
    params_ : NetworkParams
    report_ : TrainReport
    """

    def __init__(self, epochs=50, batch_size=256, learning_rate=1e-3, beta1=0.9,
                 beta2=0.999, epsilon=1e-8, init_seed=0, shuffle_seed=1, w_recon=1.0,
                 w_pred=1.0, output_scale=2.0, latent_dim=16, validation_fraction=0.1,
                 normalize=True, verbose=False):
        self.epochs = epochs
        self.batch_size = batch_size
        self.learning_rate = learning_rate
        self.beta1 = beta1
        self.beta2 = beta2
        self.epsilon = epsilon
        self.init_seed = init_seed
        self.shuffle_seed = shuffle_seed
        self.w_recon = w_recon
        self.w_pred = w_pred
        self.output_scale = output_scale
        self.latent_dim = latent_dim
        self.validation_fraction = validation_fraction
        self.normalize = normalize
        self.verbose = verbose

    def _config(self):
        params = self.get_params()
        params.pop("verbose")
        return TrainConfig(**params)

    def fit(self, X, y):
        cfg = self._config()
        X = check_features(X)
        y = check_targets(y, len(X))
        if len(X) < cfg.batch_size:
            raise DomainError(f"need at least batch_size={cfg.batch_size} samples, got {len(X)}")
        start = time.perf_counter()

        if cfg.normalize:
            cells = X[:, :2]
            lo, hi = cells.min(axis=0), cells.max(axis=0)
            shift, scale = lo, np.where(hi > lo, hi - lo, 1.0)
        else:
            shift, scale = np.zeros(2), np.ones(2)
        Xn = np.empty_like(X)
        Xn[:, :2] = (X[:, :2] - shift) / scale
        Xn[:, 2:] = (X[:, 2:] - np.tile(shift, 4)) / np.tile(scale, 4)
        yn = y / scale
        # tanh cannot reach its bound, so leave headroom above the largest target
        max_target = float(np.abs(yn).max())
        output_scale = max(cfg.output_scale, 1.25 * max_target)

        p = init_params(cfg.latent_dim, output_scale, cfg.init_seed, shift, scale)
        rng = np.random.default_rng(cfg.shuffle_seed)
        order = rng.permutation(len(X))
        n_val = int(round(cfg.validation_fraction * len(X)))
        val, tr = order[:n_val], np.sort(order[n_val:])
        Xtr, ytr = Xn[tr], yn[tr]
        Xval, yval = Xn[val], yn[val]

        opt = _Adam(p.size, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.epsilon)
        grad = np.empty(p.size)
        report = TrainReport(output_scale=output_scale, n_train=len(tr), n_val=n_val,
                             config=asdict(cfg))
        best, best_val = p.theta.copy(), np.inf
        bs = cfg.batch_size
        # divergence is detected explicitly below, so silence the overflow chatter
        with np.errstate(over="ignore", invalid="ignore"):
            for epoch in range(cfg.epochs):
                perm = rng.permutation(len(Xtr))
                Xe, ye = Xtr[perm], ytr[perm]
                total = 0.0
                n_batches = 0
                for lo_ in range(0, len(Xe) - bs + 1, bs):
                    xb = Xe[lo_:lo_ + bs]
                    value, _ = loss_and_grad(p, xb[:, :2], xb[:, 2:], ye[lo_:lo_ + bs],
                                             cfg.w_recon, cfg.w_pred, out=grad)
                    if not np.isfinite(value):
                        raise TrainingDivergedError(
                            f"loss became non-finite in epoch {epoch}", epoch=epoch)
                    opt.step(p.theta, grad)
                    total += value
                    n_batches += 1
                report.train_loss.append(total / n_batches)
                v = self._eval_loss(p, Xval, yval, cfg) if n_val else report.train_loss[-1]
                if not np.isfinite(v):
                    raise TrainingDivergedError(
                        f"validation loss non-finite in epoch {epoch}", epoch=epoch)
                report.val_loss.append(v)
                if v < best_val:
                    best_val, best = v, p.theta.copy()
                    report.best_epoch = epoch
                if self.verbose:
                    print(f"epoch {epoch:3d}  train {report.train_loss[-1]:.6g}  val {v:.6g}")

        p.theta[...] = best
        self.params_ = p
        Xeval, yeval = (X[val], y[val]) if n_val else (X, y)
        pred = self._predict_batched(p, Xeval)
        report.final_one_step_mse = float(np.mean((pred - yeval) ** 2))
        report.target_variance = float(np.var(yeval, axis=0).mean())
        report.wall_clock = time.perf_counter() - start
        self.report_ = report
        self.n_features_in_ = 10
        return self

    @staticmethod
    def _eval_loss(p, X, y, cfg, chunk=65536):
        total = 0.0
        for lo in range(0, len(X), chunk):
            xb = X[lo:lo + chunk]
            total += loss(p, xb[:, :2], xb[:, 2:], y[lo:lo + chunk],
                          cfg.w_recon, cfg.w_pred) * len(xb)
        return total / len(X)

    @staticmethod
    def _predict_batched(p, X, chunk=65536):
        out = np.empty((len(X), 2))
        for lo in range(0, len(X), chunk):
            xb = X[lo:lo + chunk]
            out[lo:lo + chunk] = p.predict_delta(xb[:, :2], xb[:, 2:])
        return out

    def predict(self, X):
        check_is_fitted(self, "params_")
        X = check_features(X)
        return self._predict_batched(self.params_, X)


def train(d, cfg=None):
    """Fit on a :class:`~rdca.data.Dataset`; returns ``(params, report)``."""
    cfg = cfg or TrainConfig()
    X, y = d.arrays()
    est = CARegressor(**asdict(cfg)).fit(X, y)
    return est.params_, est.report_


CHECKPOINT_MAGIC = b"DRSM"
CHECKPOINT_VERSION = 1


def save_checkpoint(p, path):
    header = {
        "latent_dim": p.latent_dim,
        "output_scale": p.output_scale,
        "layers": {name: [[i, o, a] for i, o, a in p.arch[name]] for name in SUBNETS},
    }
    _container.write(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, header,
                     [p.theta, p.shift, p.scale])


def load_checkpoint(path):
    header, (theta, shift, scale) = _container.read(path, CHECKPOINT_MAGIC, CHECKPOINT_VERSION)
    p = NetworkParams(header["latent_dim"], header["output_scale"], theta, shift, scale)
    expected = {name: [list(l) for l in p.arch[name]] for name in SUBNETS}
    if header["layers"] != expected:
        raise DomainError("checkpoint layer shapes do not match the architecture")
    return p
