"""Fast self-contained invariant checks for the `selftest` command.

Each check re-derives its expected values independently (finite
differences, exact solves, byte-level round trips); no files or network.
"""

from __future__ import annotations

import numpy as np

from . import autoencoder as ae
from . import detectors as det
from . import fronthaul as fh
from .signal_model import substream


def _finite_difference(loss_fn, arr, step=1e-6):
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + step
        up = loss_fn()
        arr[idx] = orig - step
        down = loss_fn()
        arr[idx] = orig
        grad[idx] = (up - down) / (2 * step)
    return grad


def check_gradient() -> tuple:
    rng = substream(2024, "selftest-grad")
    cfg = ae.AutoencoderConfig(input_dim=8, n_div=2, l2_coeff=1e-3, sparsity_coeff=1.0)
    x = rng.standard_normal((8, 10)) * 2.0 + 0.5
    fmin, fmax = ae.fit_scaling(x)
    model = ae.AutoencoderModel(
        w_enc=rng.standard_normal((4, 8)) * 0.5,
        b_enc=rng.standard_normal(4) * 0.1,
        w_dec=rng.standard_normal((8, 4)) * 0.5,
        b_dec=rng.standard_normal(8) * 0.1,
        feat_min=fmin,
        feat_max=fmax,
    )
    analytic = ae.gradient(model, x, cfg)
    worst = 0.0
    for name in ("w_enc", "b_enc", "w_dec", "b_dec"):
        numeric = _finite_difference(
            lambda: ae.loss(model, x, cfg), getattr(model, name)
        )
        err = np.linalg.norm(numeric - analytic[name])
        scale = max(np.linalg.norm(numeric), np.linalg.norm(analytic[name]), 1e-12)
        worst = max(worst, float(err / scale))
    return worst < 1e-5, f"worst relative gradient error {worst:.2e} (limit 1e-5)"


def check_gs_vs_exact() -> tuple:
    errs = []
    for seed in range(20):
        rng = substream(99, "selftest-gs", seed)
        h = (rng.standard_normal((64, 8)) + 1j * rng.standard_normal((64, 8))) / np.sqrt(2)
        y = (rng.standard_normal((64, 4)) + 1j * rng.standard_normal((64, 4)))
        s_gs = det.gs_detect(h, y, t_iter=5).s_hat
        s_zf = det.zf_exact(h, y).s_hat
        errs.append(np.linalg.norm(s_gs - s_zf) / np.linalg.norm(s_zf))
    med = float(np.median(errs))
    return med < 1e-2, f"median GS(5) vs exact ZF relative error {med:.2e} (limit 1e-2)"


def check_serialization() -> tuple:
    rng = substream(7, "selftest-wire")
    grid = ae.LatentGrid(block_id=3, values=rng.uniform(0.1, 0.9, size=(16, 84)))
    blob = fh.encode_frame(fh.latent_frame(grid, m=64, n_div=8))
    frame, _ = fh.decode_frame(blob)
    back = fh.latent_from_frame(frame)
    if not np.array_equal(back.values, grid.values.astype(np.float32).astype(float)):
        return False, "latent round trip not bit exact at 32-bit precision"
    corrupted = bytearray(blob)
    corrupted[40] ^= 0x01
    try:
        fh.decode_frame(bytes(corrupted))
        return False, "corrupted frame was accepted"
    except fh.MalformedFrame:
        pass
    try:
        fh.decode_frame(blob[: len(blob) - 3])
        return False, "truncated frame was accepted"
    except fh.MalformedFrame:
        pass
    return True, "round trip bit exact; corruption and truncation rejected"


def check_admm_equivalence() -> tuple:
    worst = 0.0
    for seed in range(10):
        rng = substream(5, "selftest-admm", seed)
        h = (rng.standard_normal((32, 8)) + 1j * rng.standard_normal((32, 8))) / np.sqrt(2)
        y = rng.standard_normal((32, 6)) + 1j * rng.standard_normal((32, 6))
        p = det.partition_clusters(h, y, 1, rho=0.0, t_outer=5, t_inner=1)
        s_admm = det.admm_gs_detect(p).s_hat
        s_gs = det.gs_detect(h, y, t_iter=5).s_hat
        worst = max(worst, float(np.max(np.abs(s_admm - s_gs))))
    return worst < 1e-12, f"max |ADMM(c=1, rho=0) - GS| = {worst:.2e} (limit 1e-12)"


CHECKS = [
    ("gradient-vs-finite-difference", check_gradient),
    ("gs-vs-exact-zf", check_gs_vs_exact),
    ("wire-format-round-trip", check_serialization),
    ("admm-single-cluster-equivalence", check_admm_equivalence),
]


def run_selftest(echo=print) -> bool:
    """Run all checks, print one line per check, return overall success."""
    all_ok = True
    for name, check in CHECKS:
        ok, detail = check()
        all_ok = all_ok and ok
        echo(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    return all_ok
