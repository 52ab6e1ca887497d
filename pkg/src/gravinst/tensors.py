"""Coordinate tensor calculus on jets.

All tensors are stored with lower indices and an optional leading batch
axis.  Covariant derivatives append the derivative index last, so
``covd(T)[..., a, b, e]`` is ``nabla_e T_ab``.

Two-forms follow phi = 1/2 phi_ab dx^a ^ dx^b with inner product
<phi, psi> = 1/2 phi_ab psi^ab, so a unit coframe 2-form e^0 ^ e^1 has norm 1.
An endomorphism of 2-forms is stored as a 4-tensor O_abcd acting by
O(phi)_cd = 1/2 O_abcd phi^ab.  With this convention the Riemann tensor of
the unit sphere acts as the identity.
"""
from __future__ import annotations

import itertools
import numpy as np

from . import jets as J
from .jets import Jet

_LETTERS = "abcdefghijklmnopqrstuvwy"  # 'z' is reserved by jets.einsum


def lin(subscripts: str, t: Jet) -> Jet:
    """Single-operand einsum (transpose / trace) on the tensor axes of a jet."""
    ins, out = subscripts.split("->")
    return Jet(np.einsum(f"{ins}z->{out}z", t.c), t.order, t.nvar)


def _perm_symbol() -> np.ndarray:
    eps = np.zeros((4, 4, 4, 4))
    for p in itertools.permutations(range(4)):
        inv = sum(1 for i in range(4) for j in range(i + 1, 4) if p[i] > p[j])
        eps[p] = -1.0 if inv % 2 else 1.0
    return eps


LEVI_CIVITA = _perm_symbol()


def sym(t: Jet, i: int, j: int) -> Jet:
    nd = len(t.shape)
    axes = list(range(nd))
    axes[i], axes[j] = axes[j], axes[i]
    return (t + t.transpose(*axes)) * 0.5


# metric quantities --------------------------------------------------------

def christoffel(g: Jet, ginv: Jet) -> Jet:
    """Gamma^a_bc with axes [..., a, b, c]."""
    dg = g.grad()  # [d, b, c] = d_c g_db
    first = (lin("...dcb->...dbc", dg) + dg - lin("...bcd->...dbc", dg)) * 0.5
    return J.einsum("...ad,...dbc->...abc", ginv, first)


def riemann(g: Jet, gamma: Jet) -> Jet:
    """R_abcd with R_abab the sectional curvature (positive on spheres)."""
    dgam = gamma.grad()  # [a, b, c, d] = d_d Gamma^a_bc
    a_part = lin("...adbc->...abcd", dgam) + J.einsum("...ace,...edb->...abcd", gamma, gamma)
    r_up = a_part - lin("...abdc->...abcd", a_part)
    return J.einsum("...ae,...ebcd->...abcd", g, r_up)


def ricci(riem: Jet, ginv: Jet) -> Jet:
    return J.einsum("...ac,...abcd->...bd", ginv, riem)


def trace2(t: Jet, ginv: Jet) -> Jet:
    return J.einsum("...ab,...ab->...", ginv, t)


def volume_density(g: Jet) -> Jet:
    return (J.logdet(g) * 0.5).exp()


def epsilon(g: Jet, orientation: int) -> Jet:
    """Volume form eps_abcd for the given orientation of the coordinate chart."""
    return J.einsum("...,abcd->...abcd", volume_density(g) * float(orientation), LEVI_CIVITA)


# covariant derivatives ----------------------------------------------------

def covd(t: Jet, gamma: Jet) -> Jet:
    """Covariant derivative of a covariant tensor, derivative index appended."""
    k = len(t.shape) - (len(gamma.shape) - 3)
    idx = _LETTERS[:k]
    dt = t.grad()
    out = dt
    for i in range(k):
        t_idx = idx[:i] + "x" + idx[i + 1:]
        term = J.einsum(f"...xp{idx[i]},...{t_idx}->...{idx}p", gamma, t)
        out = out - term
    return out


def raise_all(t: Jet, ginv: Jet) -> Jet:
    k = len(t.shape) - (len(ginv.shape) - 2)
    idx = _LETTERS[:k]
    out = t
    for i in range(k):
        src = idx[:i] + "x" + idx[i + 1:]
        out = J.einsum(f"...{idx[i]}x,...{src}->...{idx}", ginv, out)
    return out


def full_contract(a: Jet, b: Jet, ginv: Jet) -> Jet:
    """a_{i..} b^{i..} with all indices raised by ginv."""
    k = len(a.shape) - (len(ginv.shape) - 2)
    idx = _LETTERS[:k]
    return J.einsum(f"...{idx},...{idx}->...", a, raise_all(b, ginv))


def norm_sq(t: Jet, ginv: Jet) -> Jet:
    return full_contract(t, t, ginv)


# endomorphisms of 2-forms -------------------------------------------------

def identity2(g: Jet) -> Jet:
    gg = J.einsum("...ac,...bd->...abcd", g, g)
    return gg - lin("...abdc->...abcd", gg)


def raise_pair(o: Jet, ginv: Jet) -> Jet:
    """Raise the first two indices of a 4-tensor."""
    t = J.einsum("...ax,...xbcd->...abcd", ginv, o)
    return J.einsum("...bx,...axcd->...abcd", ginv, t)


def op_apply(o: Jet, phi: Jet, ginv: Jet) -> Jet:
    up = raise_all(phi, ginv)
    return J.einsum("...abcd,...ab->...cd", o, up) * 0.5


def op_compose(o: Jet, p: Jet, ginv: Jet) -> Jet:
    """O after P: (O o P)(phi) = O(P(phi))."""
    o_up = raise_pair(o, ginv)
    return J.einsum("...efab,...abcd->...efcd", p, o_up) * 0.5


def op_trace(o: Jet, ginv: Jet) -> Jet:
    t = J.einsum("...ac,...abcd->...bd", ginv, o)
    return J.einsum("...bd,...bd->...", ginv, t) * 0.5


def op_trace_product(a: Jet, b: Jet, ginv: Jet) -> Jet:
    """trace(A o B) for 2-form endomorphisms."""
    return J.einsum("...efab,...abef->...", b, raise_all(a, ginv)) * 0.25


def form_inner(phi: Jet, psi: Jet, ginv: Jet) -> Jet:
    return full_contract(phi, psi, ginv) * 0.5


# exterior calculus --------------------------------------------------------

def exterior_d(t: Jet, p: int) -> Jet:
    """d of a p-form stored as a fully antisymmetric covariant tensor."""
    dt = t.grad()
    src = _LETTERS[: p + 1]
    out = None
    for i in range(p + 1):
        others = src[:i] + src[i + 1:]
        term = lin(f"...{others}{src[i]}->...{src}", dt)
        if i % 2:
            term = -term
        out = term if out is None else out + term
    return out


def hodge(t: Jet, eps: Jet, ginv: Jet, p: int) -> Jet:
    """Hodge star of a p-form: (*T)_{b..} = 1/p! T^{a..} eps_{a.. b..}."""
    up = raise_all(t, ginv)
    a = _LETTERS[:p]
    b = _LETTERS[p:4]
    return J.einsum(f"...{a},...{a}{b}->...{b}", up, eps) * (1.0 / _fact(p))


def _fact(n: int) -> float:
    out = 1.0
    for k in range(2, n + 1):
        out *= k
    return out


def wedge21(phi: Jet, beta: Jet) -> Jet:
    """(phi ^ beta)_abc for a 2-form phi and 1-form beta."""
    t = J.einsum("...ab,...c->...abc", phi, beta)
    return t + lin("...bca->...abc", t) + lin("...cab->...abc", t)


def form_norm_sq(t: Jet, ginv: Jet, p: int) -> Jet:
    return norm_sq(t, ginv) * (1.0 / _fact(p))


def codifferential(t: Jet, gamma: Jet, ginv: Jet) -> Jet:
    """delta T = -nabla^a T_a...."""
    p = len(t.shape) - (len(ginv.shape) - 2)
    nt = covd(t, gamma)
    rest = _LETTERS[1:p]
    return -J.einsum(f"...ax,...a{rest}x->...{rest}", ginv, nt)


def rough_laplacian(t: Jet, gamma: Jet, ginv: Jet) -> Jet:
    """nabla^* nabla T = -g^{ef} nabla_e nabla_f T."""
    k = len(t.shape) - (len(ginv.shape) - 2)
    idx = _LETTERS[:k]
    nnt = covd(covd(t, gamma), gamma)  # [..., idx, f, e] = nabla_e nabla_f T
    return -J.einsum(f"...xy,...{idx}yx->...{idx}", ginv, nnt)
