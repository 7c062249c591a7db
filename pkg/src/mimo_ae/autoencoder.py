"""Sparse single-hidden-layer autoencoder with scaled-conjugate-gradient training.

The network maps a 2M-dimensional real stack through a logistic-sigmoid
hidden layer of size 2M/n_div (the latent variable) and a logistic-sigmoid
output layer back to 2M values.  Inputs are min-max scaled to [0, 1] with
parameters learned from the training block; the inverse scaling is applied
after decoding.  The training objective is

    E = mean squared reconstruction error (over samples and features)
      + l2_coeff * (||w_enc||_F^2 + ||w_dec||_F^2)
      + sparsity_coeff * sum_j KL(sparsity_target || mean activation_j)

with biases excluded from the weight penalty.  Mean activations are clamped
to [1e-12, 1 - 1e-12] before the KL term to avoid log(0).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .errors import ConfigurationError, DimensionError, TrainingError
from .signal_model import complex_to_real_stack, real_stack_to_complex, ReceivedGrid

_RHO_CLAMP = 1e-12


def logsig(x):
    """Numerically stable logistic sigmoid 1 / (1 + exp(-x))."""
    return expit(x)


@dataclass(frozen=True)
class AutoencoderConfig:
    """Architecture and training hyperparameters.

    ``init`` selects the starting point for SCG: "uniform" draws weights
    symmetrically at the usual sqrt(6 / (fan_in + fan_out)) limit;
    "subspace" starts from a principal-subspace linear map operated in the
    near-linear band of the sigmoids (pre-activation scale ``init_gain``),
    which is what the link-level sweeps use.  ``scale_margin`` widens the
    learned min-max range symmetrically about its midpoint so that inputs
    larger than the training amplitudes are not clipped; 1.0 keeps the
    exact per-feature range.
    """

    input_dim: int
    n_div: int = 8
    l2_coeff: float = 0.001
    sparsity_coeff: float = 1.0
    sparsity_target: float = 0.05
    max_epochs: int = 10000
    grad_tol: float = 1e-6
    loss_tol: float = 1e-10
    init: str = "uniform"
    init_gain: float = 0.05
    scale_margin: float = 1.0

    def __post_init__(self):
        problems = []
        if self.input_dim < 1:
            problems.append(f"input_dim must be positive, got {self.input_dim}")
        if self.n_div < 1 or self.input_dim % self.n_div != 0:
            problems.append(
                f"n_div ({self.n_div}) must divide input_dim ({self.input_dim})"
            )
        elif self.input_dim // self.n_div < 1:
            problems.append("latent dimension must be at least 1")
        if not 0.0 < self.sparsity_target < 1.0:
            problems.append(
                f"sparsity_target must lie in (0, 1), got {self.sparsity_target}"
            )
        if self.init not in ("uniform", "subspace"):
            problems.append(f"unknown init {self.init!r}")
        if self.scale_margin < 1.0:
            problems.append(f"scale_margin must be >= 1, got {self.scale_margin}")
        if problems:
            raise ConfigurationError("; ".join(problems))

    @property
    def latent_dim(self) -> int:
        return self.input_dim // self.n_div


@dataclass
class AutoencoderModel:
    """Trained weights, biases and the input-scaling parameters."""

    w_enc: np.ndarray
    b_enc: np.ndarray
    w_dec: np.ndarray
    b_dec: np.ndarray
    feat_min: np.ndarray
    feat_max: np.ndarray

    @property
    def input_dim(self) -> int:
        return self.w_enc.shape[1]

    @property
    def latent_dim(self) -> int:
        return self.w_enc.shape[0]


@dataclass
class EncoderPart:
    """Radio-head half of the model: encoder weights plus scaling."""

    w_enc: np.ndarray
    b_enc: np.ndarray
    feat_min: np.ndarray
    feat_max: np.ndarray


@dataclass
class DecoderPart:
    """Central-processor half of the model: decoder weights plus scaling."""

    w_dec: np.ndarray
    b_dec: np.ndarray
    feat_min: np.ndarray
    feat_max: np.ndarray


@dataclass
class LatentGrid:
    """Hidden-layer activations for every resource element of a block."""

    block_id: int
    values: np.ndarray


def fit_scaling(x: np.ndarray):
    """Per-feature min and max over training columns.

    Degenerate features (max == min) are widened to max = min + 1 so the
    scaling stays invertible.
    """
    x = np.asarray(x, dtype=float)
    feat_min = x.min(axis=1)
    feat_max = x.max(axis=1)
    degenerate = feat_max == feat_min
    feat_max = np.where(degenerate, feat_min + 1.0, feat_max)
    return feat_min, feat_max


def _scale(x, feat_min, feat_max):
    span = feat_max - feat_min
    if x.ndim == 2:
        scaled = (x - feat_min[:, None]) / span[:, None]
    else:
        scaled = (x - feat_min) / span
    return np.clip(scaled, 0.0, 1.0)


def _unscale(y, feat_min, feat_max):
    span = feat_max - feat_min
    if y.ndim == 2:
        return feat_min[:, None] + y * span[:, None]
    return feat_min + y * span


def _check_rows(x, expected, what):
    if x.shape[0] != expected:
        raise DimensionError(
            f"{what} has {x.shape[0]} rows, expected {expected}"
        )


def encode(enc: EncoderPart, x: np.ndarray) -> np.ndarray:
    """Latent activations logsig(w_enc @ scale(x) + b_enc)."""
    x = np.asarray(x, dtype=float)
    _check_rows(x, enc.w_enc.shape[1], "encoder input")
    xs = _scale(x, enc.feat_min, enc.feat_max)
    pre = enc.w_enc @ xs
    pre = pre + (enc.b_enc[:, None] if x.ndim == 2 else enc.b_enc)
    return logsig(pre)


def decode(dec: DecoderPart, z: np.ndarray) -> np.ndarray:
    """Reconstruction unscale(logsig(w_dec @ z + b_dec))."""
    z = np.asarray(z, dtype=float)
    _check_rows(z, dec.w_dec.shape[1], "decoder input")
    pre = dec.w_dec @ z
    pre = pre + (dec.b_dec[:, None] if z.ndim == 2 else dec.b_dec)
    return _unscale(logsig(pre), dec.feat_min, dec.feat_max)


def split(model: AutoencoderModel):
    """Partition the model into its radio-head and CPU halves."""
    enc = EncoderPart(model.w_enc, model.b_enc, model.feat_min, model.feat_max)
    dec = DecoderPart(model.w_dec, model.b_dec, model.feat_min, model.feat_max)
    return enc, dec


def merge(enc: EncoderPart, dec: DecoderPart) -> AutoencoderModel:
    """Recombine split halves; scaling vectors must agree exactly."""
    if not (
        np.array_equal(enc.feat_min, dec.feat_min)
        and np.array_equal(enc.feat_max, dec.feat_max)
    ):
        raise ConfigurationError("encoder and decoder scaling parameters differ")
    return AutoencoderModel(
        w_enc=enc.w_enc,
        b_enc=enc.b_enc,
        w_dec=dec.w_dec,
        b_dec=dec.b_dec,
        feat_min=enc.feat_min,
        feat_max=enc.feat_max,
    )


def _forward(w_enc, b_enc, w_dec, b_dec, xs):
    z = logsig(w_enc @ xs + b_enc[:, None])
    yh = logsig(w_dec @ z + b_dec[:, None])
    return z, yh


def _loss_terms(w_enc, b_enc, w_dec, b_dec, xs, cfg: AutoencoderConfig):
    n = xs.shape[1]
    z, yh = _forward(w_enc, b_enc, w_dec, b_dec, xs)
    mse = np.mean((xs - yh) ** 2)
    l2 = cfg.l2_coeff * (np.sum(w_enc**2) + np.sum(w_dec**2))
    rho = cfg.sparsity_target
    rho_hat = np.clip(z.mean(axis=1), _RHO_CLAMP, 1.0 - _RHO_CLAMP)
    kl = np.sum(
        rho * np.log(rho / rho_hat) + (1.0 - rho) * np.log((1.0 - rho) / (1.0 - rho_hat))
    )
    return mse + l2 + cfg.sparsity_coeff * kl, z, yh, rho_hat


def loss(model: AutoencoderModel, x: np.ndarray, cfg: AutoencoderConfig) -> float:
    """Regularized training objective on raw (unscaled) input columns."""
    x = np.asarray(x, dtype=float)
    _check_rows(x, model.input_dim, "loss input")
    xs = _scale(x, model.feat_min, model.feat_max)
    value, _, _, _ = _loss_terms(
        model.w_enc, model.b_enc, model.w_dec, model.b_dec, xs, cfg
    )
    return float(value)


def _gradient_arrays(w_enc, b_enc, w_dec, b_dec, xs, cfg: AutoencoderConfig):
    """Loss value plus analytic gradients of all four parameter arrays."""
    d, n = xs.shape
    value, z, yh, rho_hat = _loss_terms(w_enc, b_enc, w_dec, b_dec, xs, cfg)

    delta_out = (2.0 / (n * d)) * (yh - xs) * yh * (1.0 - yh)
    g_w_dec = delta_out @ z.T + 2.0 * cfg.l2_coeff * w_dec
    g_b_dec = delta_out.sum(axis=1)

    rho = cfg.sparsity_target
    kl_grad = (
        cfg.sparsity_coeff
        * (-rho / rho_hat + (1.0 - rho) / (1.0 - rho_hat))
        / n
    )
    dz = w_dec.T @ delta_out + kl_grad[:, None]
    delta_hid = dz * z * (1.0 - z)
    g_w_enc = delta_hid @ xs.T + 2.0 * cfg.l2_coeff * w_enc
    g_b_enc = delta_hid.sum(axis=1)

    return value, g_w_enc, g_b_enc, g_w_dec, g_b_dec


def gradient(model: AutoencoderModel, x: np.ndarray, cfg: AutoencoderConfig):
    """Analytic gradient of :func:`loss`, shaped like the model parameters."""
    x = np.asarray(x, dtype=float)
    _check_rows(x, model.input_dim, "gradient input")
    xs = _scale(x, model.feat_min, model.feat_max)
    _, g_w_enc, g_b_enc, g_w_dec, g_b_dec = _gradient_arrays(
        model.w_enc, model.b_enc, model.w_dec, model.b_dec, xs, cfg
    )
    return {
        "w_enc": g_w_enc,
        "b_enc": g_b_enc,
        "w_dec": g_w_dec,
        "b_dec": g_b_dec,
    }


def _init_uniform(cfg: AutoencoderConfig, rng: np.random.Generator, feat_min, feat_max):
    """Symmetric uniform init, limit sqrt(6 / (fan_in + fan_out)) per layer."""
    d, latent = cfg.input_dim, cfg.latent_dim
    limit = np.sqrt(6.0 / (d + latent))
    return AutoencoderModel(
        w_enc=rng.uniform(-limit, limit, size=(latent, d)),
        b_enc=np.zeros(latent),
        w_dec=rng.uniform(-limit, limit, size=(d, latent)),
        b_dec=np.zeros(d),
        feat_min=feat_min,
        feat_max=feat_max,
    )


def _init_subspace(cfg: AutoencoderConfig, x, feat_min, feat_max):
    """Principal-subspace init in the near-linear band of both sigmoids.

    The encoder projects onto the top latent_dim principal directions of the
    raw training columns and the decoder inverts the projection, using the
    first-order sigmoid expansion logsig(a) = 1/2 + a/4 around zero.  With a
    small pre-activation scale the composed network starts as the orthogonal
    projector onto the training subspace (in raw coordinates, so off-subspace
    noise is not amplified by the per-feature scaling).
    """
    d, latent = cfg.input_dim, cfg.latent_dim
    span = feat_max - feat_min
    xbar = x.mean(axis=1)
    u_full, sv, _ = np.linalg.svd(x - xbar[:, None], full_matrices=False)
    avail = min(latent, u_full.shape[1])
    u = np.zeros((d, latent))
    u[:, :avail] = u_full[:, :avail]
    comp_std = sv[:avail] / np.sqrt(x.shape[1]) if avail else np.array([1.0])
    g = cfg.init_gain / max(float(comp_std.max(initial=0.0)), 1e-12)
    w_enc = g * u.T * span[None, :]
    b_enc = g * (u.T @ (feat_min - xbar))
    w_dec = (16.0 / g) * (u / span[:, None])
    b_dec = 4.0 * ((xbar - feat_min) / span - 0.5) - 0.5 * w_dec.sum(axis=1)
    return AutoencoderModel(
        w_enc=w_enc,
        b_enc=b_enc,
        w_dec=w_dec,
        b_dec=b_dec,
        feat_min=feat_min,
        feat_max=feat_max,
    )


def _pack(w_enc, b_enc, w_dec, b_dec):
    return np.concatenate([w_enc.ravel(), b_enc, w_dec.ravel(), b_dec])


def _unpack(theta, d, latent):
    n_we = latent * d
    w_enc = theta[:n_we].reshape(latent, d)
    b_enc = theta[n_we : n_we + latent]
    w_dec = theta[n_we + latent : n_we + latent + n_we].reshape(d, latent)
    b_dec = theta[n_we + latent + n_we :]
    return w_enc, b_enc, w_dec, b_dec


def train(
    x: np.ndarray, cfg: AutoencoderConfig, rng: np.random.Generator
) -> AutoencoderModel:
    """Fit the autoencoder to the columns of x by full-batch SCG.

    Scaled conjugate gradient maintains a conjugate search direction and a
    Levenberg-Marquardt damping term instead of a line search; only steps
    that reduce the loss are accepted, so the accepted-loss sequence is
    non-increasing.  Terminates on max_epochs, gradient norm below grad_tol,
    or relative loss change below loss_tol.
    """
    x = np.asarray(x, dtype=float)
    if x.ndim != 2 or x.shape[0] != cfg.input_dim:
        raise DimensionError(
            f"training matrix must be {cfg.input_dim} x N, got {x.shape}"
        )
    feat_min, feat_max = fit_scaling(x)
    if cfg.scale_margin > 1.0:
        mid = (feat_min + feat_max) / 2.0
        half = (feat_max - feat_min) / 2.0
        feat_min = mid - cfg.scale_margin * half
        feat_max = mid + cfg.scale_margin * half
    xs = _scale(x, feat_min, feat_max)
    d, latent = cfg.input_dim, cfg.latent_dim

    def evaluate(theta, need_grad):
        w_enc, b_enc, w_dec, b_dec = _unpack(theta, d, latent)
        if need_grad:
            value, gwe, gbe, gwd, gbd = _gradient_arrays(
                w_enc, b_enc, w_dec, b_dec, xs, cfg
            )
            return value, _pack(gwe, gbe, gwd, gbd)
        value, _, _, _ = _loss_terms(w_enc, b_enc, w_dec, b_dec, xs, cfg)
        return value, None

    if cfg.init == "subspace":
        model0 = _init_subspace(cfg, x, feat_min, feat_max)
    else:
        model0 = _init_uniform(cfg, rng, feat_min, feat_max)
    theta = _pack(model0.w_enc, model0.b_enc, model0.w_dec, model0.b_dec)
    n_params = theta.size

    # Moller's SCG constants: sigma for the directional second-derivative
    # probe, lambda as the adaptive damping.
    sigma0 = 1e-5
    lam = 1e-7
    lam_bar = 0.0

    e_now, grad = evaluate(theta, True)
    if not np.isfinite(e_now) or not np.all(np.isfinite(grad)):
        raise TrainingError(
            "non-finite loss or gradient at initialization",
            diagnostics={"epoch": 0, "loss": e_now},
        )
    r = -grad
    p = r.copy()
    success = True
    delta = 0.0
    s = np.zeros_like(theta)

    for epoch in range(1, cfg.max_epochs + 1):
        r_norm = np.linalg.norm(r)
        if r_norm < cfg.grad_tol:
            break
        p_sq = p @ p
        if p_sq == 0.0:
            break
        if success:
            sigma = sigma0 / np.sqrt(p_sq)
            _, grad_probe = evaluate(theta + sigma * p, True)
            if not np.all(np.isfinite(grad_probe)):
                raise TrainingError(
                    "non-finite gradient in curvature probe",
                    diagnostics={"epoch": epoch, "loss": e_now},
                )
            s = (grad_probe - (-r)) / sigma
            delta = p @ s
        # Levenberg-Marquardt scaling of the curvature estimate.
        delta = delta + (lam - lam_bar) * p_sq
        if delta <= 0.0:
            lam_bar = 2.0 * (lam - delta / p_sq)
            delta = -delta + lam * p_sq
            lam = lam_bar
        mu = p @ r
        if mu == 0.0:
            # Degenerate direction; restart from steepest descent.
            p = r.copy()
            success = True
            continue
        alpha = mu / delta

        e_cand, _ = evaluate(theta + alpha * p, False)
        if np.isfinite(e_cand):
            comparison = 2.0 * delta * (e_now - e_cand) / (mu * mu)
            if not np.isfinite(comparison):
                comparison = -1.0
        else:
            comparison = -1.0

        if comparison >= 0.0:
            theta = theta + alpha * p
            e_prev = e_now
            e_now, grad = evaluate(theta, True)
            if not np.isfinite(e_now) or not np.all(np.isfinite(grad)):
                raise TrainingError(
                    "non-finite loss after accepted step",
                    diagnostics={"epoch": epoch, "loss": e_now},
                )
            r_new = -grad
            lam_bar = 0.0
            success = True
            if epoch % n_params == 0:
                p = r_new.copy()
            else:
                beta = (r_new @ r_new - r_new @ r) / mu
                p = r_new + beta * p
            r = r_new
            if comparison >= 0.75:
                lam = 0.25 * lam
            if abs(e_prev - e_now) <= cfg.loss_tol * max(1.0, abs(e_prev)):
                break
        else:
            lam_bar = lam
            success = False
        if comparison < 0.25:
            lam = lam + delta * (1.0 - comparison) / p_sq
        if lam > 1e100:
            break

    w_enc, b_enc, w_dec, b_dec = _unpack(theta, d, latent)
    return AutoencoderModel(
        w_enc=w_enc,
        b_enc=b_enc,
        w_dec=w_dec,
        b_dec=b_dec,
        feat_min=feat_min,
        feat_max=feat_max,
    )


def autoencode_block(
    model: AutoencoderModel, rx: ReceivedGrid, block_id: int = 0
):
    """Encode and decode every resource element of a received grid.

    Returns the latent grid (kept for fronthaul accounting) and the
    reconstructed received grid.
    """
    stacked = complex_to_real_stack(rx.entries)
    _check_rows(stacked, model.input_dim, "stacked received grid")
    enc, dec = split(model)
    latent = encode(enc, stacked)
    recon = real_stack_to_complex(decode(dec, latent))
    return (
        LatentGrid(block_id=block_id, values=latent),
        ReceivedGrid(entries=recon, noise_var=rx.noise_var),
    )
