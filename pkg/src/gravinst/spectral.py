"""Spectra of trace-free symmetric 3x3 matrices.

The closed-form route solves the depressed cubic
x^3 - (|W|^2 / 2) x - det W = 0 through the principal complex cube root.
Every routine accepts a stack of matrices with shape (..., 3, 3).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InconsistentSpectrum

TRACE_TOL = 1e-12
RADICAND_TOL = 1e-12


@dataclass
class WuSpectrum:
    alpha: np.ndarray
    beta: np.ndarray
    gamma: np.ndarray
    det_w: np.ndarray
    norm_sq_w: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.stack([self.alpha, self.beta, self.gamma], axis=-1)

    @property
    def wu_positive(self) -> np.ndarray:
        return self.det_w > 0


def _check_input(w: np.ndarray) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    if w.shape[-2:] != (3, 3):
        raise InconsistentSpectrum("expected 3x3 matrices")
    scale = np.sqrt(np.sum(w * w, axis=(-2, -1)))
    asym = np.max(np.abs(w - np.swapaxes(w, -1, -2)), axis=(-2, -1))
    if np.any(asym > 1e-12 * np.maximum(scale, 1e-300)):
        raise InconsistentSpectrum("matrix is not symmetric")
    tr = np.abs(np.trace(w, axis1=-2, axis2=-1))
    if np.any(tr > TRACE_TOL * np.maximum(scale, 1e-300)):
        raise InconsistentSpectrum("matrix is not trace-free")
    return w


def det3(w: np.ndarray) -> np.ndarray:
    return (
        w[..., 0, 0] * (w[..., 1, 1] * w[..., 2, 2] - w[..., 1, 2] * w[..., 2, 1])
        - w[..., 0, 1] * (w[..., 1, 0] * w[..., 2, 2] - w[..., 1, 2] * w[..., 2, 0])
        + w[..., 0, 2] * (w[..., 1, 0] * w[..., 2, 1] - w[..., 1, 1] * w[..., 2, 0])
    )


def cardano_root(norm_sq, det) -> np.ndarray:
    """Largest root of x^3 - norm_sq/2 x - det = 0 (real-rooted case)."""
    norm_sq = np.asarray(norm_sq, dtype=float)
    det = np.asarray(det, dtype=float)
    n6 = norm_sq**3
    rad = n6 / 54.0 - det**2
    if np.any(rad < -RADICAND_TOL * n6):
        raise InconsistentSpectrum("negative radicand beyond rounding")
    rad = np.maximum(rad, 0.0)
    z = det + 1j * np.sqrt(rad)
    return 2.0 ** (2.0 / 3.0) * np.real(np.power(z, 1.0 / 3.0))


def _deflate(w, lam):
    """The other two eigenvalues (larger, smaller) once the simple eigenvalue
    ``lam`` is known: its eigenvector comes from cross products of the rows of
    W - lam I, and the 2x2 block on the orthogonal complement is solved directly."""
    a = w - lam[..., None, None] * np.eye(3)
    r0, r1, r2 = a[..., 0, :], a[..., 1, :], a[..., 2, :]
    cands = np.stack([np.cross(r0, r1), np.cross(r0, r2), np.cross(r1, r2)], axis=-2)
    pick = np.argmax(np.linalg.norm(cands, axis=-1), axis=-1)
    v = np.take_along_axis(cands, pick[..., None, None], axis=-2)[..., 0, :]
    vn = np.linalg.norm(v, axis=-1)
    v = v / np.where(vn > 0, vn, 1.0)[..., None]
    v = np.where((vn > 0)[..., None], v, np.array([0.0, 0.0, 1.0]))
    helper = np.where(
        (np.abs(v[..., 0]) < 0.9)[..., None], np.array([1.0, 0.0, 0.0]), np.array([0.0, 1.0, 0.0])
    )
    u1 = np.cross(v, helper)
    u1 = u1 / np.linalg.norm(u1, axis=-1)[..., None]
    u2 = np.cross(v, u1)
    b11 = np.einsum("...i,...ij,...j->...", u1, w, u1)
    b22 = np.einsum("...i,...ij,...j->...", u2, w, u2)
    b12 = np.einsum("...i,...ij,...j->...", u1, w, u2)
    mean = 0.5 * (b11 + b22)
    half = np.hypot(0.5 * (b11 - b22), b12)
    return mean + half, mean - half


def cardano_alpha(w) -> WuSpectrum:
    """Sorted spectrum of trace-free symmetric 3x3 matrices.

    The top root comes from Cardano's formula.  A double root is badly
    conditioned as a root of the cubic, so when alpha sits closer to beta than
    beta does to gamma, the bottom root (simple there) is taken from Cardano
    instead and the top pair is recovered by deflation.
    """
    w = _check_input(w)
    w = 0.5 * (w + np.swapaxes(w, -1, -2))
    # solve at unit scale: |W|^6 under- or overflows far from it
    k = np.max(np.abs(w), axis=(-2, -1))
    k = np.where(k > 0, k, 1.0)
    w = w / k[..., None, None]
    norm_sq = np.sum(w * w, axis=(-2, -1))
    det = det3(w)
    alpha = cardano_root(norm_sq, det)
    gamma = -cardano_root(norm_sq, -det)
    beta = -alpha - gamma
    top_isolated = (alpha - beta) >= (beta - gamma)
    b1, g1 = _deflate(w, alpha)
    a2, b2 = _deflate(w, gamma)
    return WuSpectrum(
        k * np.where(top_isolated, alpha, a2),
        k * np.where(top_isolated, b1, b2),
        k * np.where(top_isolated, g1, gamma),
        det * k**3,
        norm_sq * k**2,
    )


_PAIRS = ((0, 1), (0, 2), (1, 2))


def jacobi_eigen_oracle(w, tol: float = 1e-14, max_sweeps: int = 50) -> WuSpectrum:
    """Cyclic Jacobi rotations until the off-diagonal norm is below ``tol`` times
    the Frobenius norm; an independent check on :func:`cardano_alpha`."""
    w = _check_input(w)
    a = np.array(0.5 * (w + np.swapaxes(w, -1, -2)), dtype=float)
    frob = np.sqrt(np.sum(a * a, axis=(-2, -1)))
    norm_sq = frob**2
    det = det3(a)
    for _ in range(max_sweeps):
        off = np.sqrt(2 * (a[..., 0, 1] ** 2 + a[..., 0, 2] ** 2 + a[..., 1, 2] ** 2))
        if np.all(off <= tol * frob):
            break
        for p, q in _PAIRS:
            apq = a[..., p, q]
            active = np.abs(apq) > 0
            safe = np.where(active, apq, 1.0)
            tau = (a[..., q, q] - a[..., p, p]) / (2.0 * safe)
            t = np.where(tau >= 0, 1.0, -1.0) / (np.abs(tau) + np.hypot(1.0, tau))
            t = np.where(active, t, 0.0)
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = t * c
            rot = np.broadcast_to(np.eye(3), a.shape).copy()
            rot[..., p, p] = c
            rot[..., q, q] = c
            rot[..., p, q] = s
            rot[..., q, p] = -s
            a = np.einsum("...ji,...jk,...kl->...il", rot, a, rot)
    d = np.sort(np.diagonal(a, axis1=-2, axis2=-1), axis=-1)[..., ::-1]
    return WuSpectrum(d[..., 0], d[..., 1], d[..., 2], det, norm_sq)
