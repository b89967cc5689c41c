"""Numba kernels for scoring-function evaluation and training.

Everything here is single-threaded by design: step-by-step determinism is
part of the package contract, and the batch sizes involved are small
enough that a fixed-order scalar loop is fast once head/relation work is
hoisted out of the candidate loop.

A scoring function is compiled into a flat "term program" over two groups:

* head/relation terms: touch only the five parts gathered per batch row
  (slots 0=e0h, 1=e1h, 2=r0, 3=r1, 4=r2), so their sum ``A`` is computed
  once per row and shared by every candidate tail;
* tail terms: touch one of the two tail parts (slots 0=e0t, 1=e1t),
  optionally multiplied by a head/relation part (mode 1, whose
  per-row factor ``F`` is also hoisted) or by a second tail part (mode 2).

Dropout enters as uint8 keep masks plus a single rescale factor; a mask
element multiplies the *gathered* value, and gradients carry the same
factor, so forward and backward stay consistent for fixed masks.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from numba import njit

from .scoring import SFSpec, VectorPart

_TAIL_PARTS = {VectorPart.E0T: 0, VectorPart.E1T: 1}
_HR_PARTS = {
    VectorPart.E0H: 0,
    VectorPart.E1H: 1,
    VectorPart.R0: 2,
    VectorPart.R1: 3,
    VectorPart.R2: 4,
}


class TermProgram(NamedTuple):
    """A scoring function flattened into kernel-ready arrays."""

    hr_coefs: np.ndarray   # (KB,) float64
    hr_a: np.ndarray       # (KB,) int64, head/relation slot
    hr_b: np.ndarray       # (KB,) int64, second slot or -1 for first-order
    t_coefs: np.ndarray    # (KT,) float64
    t_mode: np.ndarray     # (KT,) int64: 0 bare, 1 x head/rel, 2 x tail
    t_tail: np.ndarray     # (KT,) int64, tail slot of the first factor
    t_other: np.ndarray    # (KT,) int64, hr slot (mode 1) / tail slot (mode 2) / -1


def encode_program(spec: SFSpec) -> TermProgram:
    """Split a spec into head/relation-only terms and tail-bearing terms.

    Terms keep their relative order within each group, so the kernel's
    arithmetic order is a pure function of the spec.
    """
    hr: list[tuple[float, int, int]] = []
    tails: list[tuple[float, int, int, int]] = []
    for coef, term in spec.terms:
        parts = term.parts()
        tail_slots = [_TAIL_PARTS[p] for p in parts if p in _TAIL_PARTS]
        if not tail_slots:
            a = _HR_PARTS[parts[0]]
            b = _HR_PARTS[parts[1]] if len(parts) == 2 else -1
            hr.append((float(coef), a, b))
        elif len(tail_slots) == len(parts) == 2:
            tails.append((float(coef), 2, tail_slots[0], tail_slots[1]))
        elif len(parts) == 1:
            tails.append((float(coef), 0, tail_slots[0], -1))
        else:
            other = next(p for p in parts if p not in _TAIL_PARTS)
            tails.append((float(coef), 1, tail_slots[0], _HR_PARTS[other]))

    def col(rows, i, dtype):
        return np.asarray([row[i] for row in rows], dtype=dtype)

    return TermProgram(
        hr_coefs=col(hr, 0, np.float64),
        hr_a=col(hr, 1, np.int64),
        hr_b=col(hr, 2, np.int64),
        t_coefs=col(tails, 0, np.float64),
        t_mode=col(tails, 1, np.int64),
        t_tail=col(tails, 2, np.int64),
        t_other=col(tails, 3, np.int64),
    )


_NO_MASK_HR = np.ones((1, 1, 1), dtype=np.uint8)
_NO_MASK_T = np.ones((1, 1, 1, 1), dtype=np.uint8)


@njit(cache=True)
def _gather_hr(ent, rel, h, r, mask_hr_row, scale, use_mask, V):
    d = ent.shape[2]
    for s in range(5):
        for j in range(d):
            v = ent[h, s, j] if s < 2 else rel[r, s - 2, j]
            if use_mask:
                v = v * scale if mask_hr_row[s, j] else 0.0
            V[s, j] = v


@njit(cache=True)
def _hoist(V, hr_coefs, hr_a, hr_b, t_coefs, t_mode, t_other, A, F):
    d = V.shape[1]
    for j in range(d):
        acc = 0.0
        for k in range(hr_coefs.shape[0]):
            a = hr_a[k]
            b = hr_b[k]
            if b < 0:
                acc += hr_coefs[k] * V[a, j]
            else:
                acc += hr_coefs[k] * V[a, j] * V[b, j]
        A[j] = acc
        for k in range(t_coefs.shape[0]):
            if t_mode[k] == 1:
                F[k, j] = t_coefs[k] * V[t_other[k], j]
            else:
                F[k, j] = t_coefs[k]


@njit(cache=True)
def fwd_kernel(ent, rel, h_idx, r_idx, cand,
               hr_coefs, hr_a, hr_b, t_coefs, t_mode, t_tail, t_other,
               mask_hr, mask_t, scale, use_mask,
               g_out, dist_out):
    """Forward pass: term vector g and L1 distance per (row, candidate)."""
    B, C = cand.shape
    d = ent.shape[2]
    KT = t_coefs.shape[0]
    V = np.empty((5, d))
    A = np.empty(d)
    F = np.empty((KT, d))
    for b in range(B):
        _gather_hr(ent, rel, h_idx[b], r_idx[b],
                   mask_hr[b] if use_mask else mask_hr[0], scale, use_mask, V)
        _hoist(V, hr_coefs, hr_a, hr_b, t_coefs, t_mode, t_other, A, F)
        for c in range(C):
            t = cand[b, c]
            dist = 0.0
            for j in range(d):
                g = A[j]
                for k in range(KT):
                    tp = ent[t, t_tail[k], j]
                    if use_mask:
                        tp = tp * scale if mask_t[b, c, t_tail[k], j] else 0.0
                    if t_mode[k] == 2:
                        tq = ent[t, t_other[k], j]
                        if use_mask:
                            tq = tq * scale if mask_t[b, c, t_other[k], j] else 0.0
                        g += F[k, j] * tp * tq
                    else:
                        g += F[k, j] * tp
                g_out[b, c, j] = g
                dist += abs(g)
            dist_out[b, c] = dist


@njit(cache=True)
def bwd_kernel(ent, rel, h_idx, r_idx, cand, dldd, g,
               hr_coefs, hr_a, hr_b, t_coefs, t_mode, t_tail, t_other,
               mask_hr, mask_t, scale, use_mask,
               ge, gr):
    """Accumulate dL/dparam into dense buffers ge (E,2,d) and gr (R,3,d).

    ``dldd[b, c]`` is dL/d(distance); the distance gradient is
    sign(g)·dldd with sign(0) = 0.  Gradients w.r.t. a raw stored value
    include that value's own mask factor and read the *masked* value of
    any co-factor, mirroring the forward arithmetic.
    """
    B, C = cand.shape
    d = ent.shape[2]
    KB = hr_coefs.shape[0]
    KT = t_coefs.shape[0]
    V = np.empty((5, d))
    F = np.empty((KT, d))
    accHR = np.empty((5, d))
    W = np.empty(d)
    for b in range(B):
        h = h_idx[b]
        r = r_idx[b]
        _gather_hr(ent, rel, h, r,
                   mask_hr[b] if use_mask else mask_hr[0], scale, use_mask, V)
        _hoist(V, hr_coefs, hr_a, hr_b, t_coefs, t_mode, t_other,
               W, F)  # W reused as scratch for A; overwritten below
        for s in range(5):
            for j in range(d):
                accHR[s, j] = 0.0
        for j in range(d):
            W[j] = 0.0
        for c in range(C):
            t = cand[b, c]
            s_bc = dldd[b, c]
            if s_bc == 0.0:
                continue
            for j in range(d):
                gj = g[b, c, j]
                if gj > 0.0:
                    coefg = s_bc
                elif gj < 0.0:
                    coefg = -s_bc
                else:
                    continue
                W[j] += coefg
                for k in range(KT):
                    p = t_tail[k]
                    mp = 1.0
                    tp = ent[t, p, j]
                    if use_mask:
                        if mask_t[b, c, p, j]:
                            mp = scale
                            tp *= scale
                        else:
                            mp = 0.0
                            tp = 0.0
                    mode = t_mode[k]
                    if mode == 2:
                        q = t_other[k]
                        mq = 1.0
                        tq = ent[t, q, j]
                        if use_mask:
                            if mask_t[b, c, q, j]:
                                mq = scale
                                tq *= scale
                            else:
                                mq = 0.0
                                tq = 0.0
                        ge[t, p, j] += coefg * t_coefs[k] * tq * mp
                        ge[t, q, j] += coefg * t_coefs[k] * tp * mq
                    else:
                        ge[t, p, j] += coefg * F[k, j] * mp
                        if mode == 1:
                            o = t_other[k]
                            mo = 1.0
                            if use_mask:
                                mo = scale if mask_hr[b, o, j] else 0.0
                            accHR[o, j] += coefg * t_coefs[k] * tp * mo
        # flush candidate-independent head/relation gradients
        for k in range(KB):
            a = hr_a[k]
            bslot = hr_b[k]
            for j in range(d):
                ma = 1.0
                mb = 1.0
                if use_mask:
                    ma = scale if mask_hr[b, a, j] else 0.0
                    if bslot >= 0:
                        mb = scale if mask_hr[b, bslot, j] else 0.0
                if bslot < 0:
                    accHR[a, j] += hr_coefs[k] * W[j] * ma
                else:
                    accHR[a, j] += hr_coefs[k] * W[j] * V[bslot, j] * ma
                    accHR[bslot, j] += hr_coefs[k] * W[j] * V[a, j] * mb
        for s in range(5):
            for j in range(d):
                if s < 2:
                    ge[h, s, j] += accHR[s, j]
                else:
                    gr[r, s - 2, j] += accHR[s, j]


@njit(cache=True)
def dist_kernel(ent, rel, h, r, cand,
                hr_coefs, hr_a, hr_b, t_coefs, t_mode, t_tail, t_other,
                dist_out):
    """L1 distances for one (h, r) against a candidate tail vector."""
    d = ent.shape[2]
    KT = t_coefs.shape[0]
    V = np.empty((5, d))
    A = np.empty(d)
    F = np.empty((KT, d))
    _gather_hr(ent, rel, h, r, _NO_MASK_HR[0], 1.0, 0, V)
    _hoist(V, hr_coefs, hr_a, hr_b, t_coefs, t_mode, t_other, A, F)
    for c in range(cand.shape[0]):
        t = cand[c]
        dist = 0.0
        for j in range(d):
            g = A[j]
            for k in range(KT):
                tp = ent[t, t_tail[k], j]
                if t_mode[k] == 2:
                    g += F[k, j] * tp * ent[t, t_other[k], j]
                else:
                    g += F[k, j] * tp
            dist += abs(g)
        dist_out[c] = dist


@njit(cache=True)
def adam_rows_kernel(param, m, v, steps, ids, grads, lr, beta1, beta2, eps):
    """Sparse Adam over the listed rows; grads[i] belongs to row ids[i].

    Bias correction uses a per-row step counter, so rows touched rarely
    still warm up their moments correctly.
    """
    for i in range(ids.shape[0]):
        row = ids[i]
        steps[row] += 1
        t = steps[row]
        c1 = 1.0 - beta1 ** t
        c2 = 1.0 - beta2 ** t
        for a in range(param.shape[1]):
            for j in range(param.shape[2]):
                gval = grads[i, a, j]
                mm = beta1 * m[row, a, j] + (1.0 - beta1) * gval
                vv = beta2 * v[row, a, j] + (1.0 - beta2) * gval * gval
                m[row, a, j] = mm
                v[row, a, j] = vv
                param[row, a, j] -= lr * (mm / c1) / (np.sqrt(vv / c2) + eps)


def run_fwd(ent, rel, h_idx, r_idx, cand, prog: TermProgram,
            mask_hr=None, mask_t=None, scale=1.0, g_out=None, dist_out=None):
    """Python-side wrapper that wires optional masks into fwd_kernel."""
    B, C = cand.shape
    d = ent.shape[2]
    if g_out is None:
        g_out = np.empty((B, C, d))
    if dist_out is None:
        dist_out = np.empty((B, C))
    use_mask = 1 if mask_hr is not None else 0
    fwd_kernel(ent, rel, h_idx, r_idx, cand, *prog,
               mask_hr if use_mask else _NO_MASK_HR,
               mask_t if use_mask else _NO_MASK_T,
               float(scale), use_mask, g_out, dist_out)
    return g_out, dist_out


def run_bwd(ent, rel, h_idx, r_idx, cand, dldd, g, prog: TermProgram,
            ge, gr, mask_hr=None, mask_t=None, scale=1.0):
    use_mask = 1 if mask_hr is not None else 0
    bwd_kernel(ent, rel, h_idx, r_idx, cand, dldd, g, *prog,
               mask_hr if use_mask else _NO_MASK_HR,
               mask_t if use_mask else _NO_MASK_T,
               float(scale), use_mask, ge, gr)


def run_dist(ent, rel, h, r, cand, prog: TermProgram, dist_out=None):
    if dist_out is None:
        dist_out = np.empty(cand.shape[0])
    dist_kernel(ent, rel, int(h), int(r), cand, *prog, dist_out)
    return dist_out
