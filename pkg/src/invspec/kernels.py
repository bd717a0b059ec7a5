"""Batched RK4 propagation kernels.

All solvers in this package reduce to propagating linear systems
Y' = (A(x) + lam * C) Y across the coefficient grid, batched over a set
of lambda values.  A(x) is sampled at the grid nodes and interpolated
linearly inside each interval; each interval may be split into RK4
substeps for accuracy.

Two implementations are provided: a numba-compiled path parallelized
over the lambda batch, and a pure-numpy path vectorized over the batch.
Set INVSPEC_NO_NUMBA=1 to force the numpy path.
"""

from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit, prange
    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    _HAS_NUMBA = False

USE_NUMBA = _HAS_NUMBA and os.environ.get("INVSPEC_NO_NUMBA", "") != "1"


def _prep(a_nodes, cmat, lams, y0=None):
    a_nodes = np.ascontiguousarray(a_nodes, dtype=np.complex128)
    cmat = np.ascontiguousarray(cmat, dtype=np.complex128)
    lams = np.ascontiguousarray(np.atleast_1d(lams), dtype=np.complex128)
    if y0 is not None:
        y0 = np.ascontiguousarray(y0, dtype=np.complex128)
        if y0.ndim == 1:
            y0 = y0[:, None]
        return a_nodes, cmat, lams, y0
    return a_nodes, cmat, lams


def propagate_final(a_nodes, cmat, lams, y0, substeps=1):
    """Propagate columns of y0 from x=0 to x=1; return finals (B, d, q)."""
    a_nodes, cmat, lams, y0 = _prep(a_nodes, cmat, lams, y0)
    if USE_NUMBA:
        return _nb_final(a_nodes, cmat, lams, y0, substeps)
    return _np_run(a_nodes, cmat, lams, y0, substeps, store=False)


def propagate_nodes(a_nodes, cmat, lams, y0, substeps=1):
    """Propagate and record values at every grid node: (B, M+1, d, q)."""
    a_nodes, cmat, lams, y0 = _prep(a_nodes, cmat, lams, y0)
    if USE_NUMBA:
        return _nb_nodes(a_nodes, cmat, lams, y0, substeps)
    return _np_run(a_nodes, cmat, lams, y0, substeps, store=True)


def interval_transfers(a_nodes, cmat, lams, substeps=1):
    """Per-interval transfer matrices T_i with Y(x_{i+1}) = T_i Y(x_i): (B, M, d, d)."""
    a_nodes, cmat, lams = _prep(a_nodes, cmat, lams)
    if USE_NUMBA:
        return _nb_transfers(a_nodes, cmat, lams, substeps)
    return _np_transfers(a_nodes, cmat, lams, substeps)


# ---------------------------------------------------------------- numpy path

def _np_interval(a0, a1, lamc, y, substeps, h):
    """Advance batch y (B, d, q) across one grid interval of width h."""
    hs = h / substeps
    for j in range(substeps):
        f0 = j / substeps
        fm = (j + 0.5) / substeps
        f1 = (j + 1.0) / substeps
        m0 = (a0 + f0 * (a1 - a0))[None, :, :] + lamc
        mm = (a0 + fm * (a1 - a0))[None, :, :] + lamc
        m1 = (a0 + f1 * (a1 - a0))[None, :, :] + lamc
        k1 = m0 @ y
        k2 = mm @ (y + (0.5 * hs) * k1)
        k3 = mm @ (y + (0.5 * hs) * k2)
        k4 = m1 @ (y + hs * k3)
        y = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return y


def _np_run(a_nodes, cmat, lams, y0, substeps, store):
    m1, d, _ = a_nodes.shape
    nsteps = m1 - 1
    h = 1.0 / nsteps
    b = lams.shape[0]
    q = y0.shape[1]
    lamc = lams[:, None, None] * cmat[None, :, :]
    y = np.broadcast_to(y0[None, :, :], (b, d, q)).copy()
    if store:
        out = np.empty((b, m1, d, q), dtype=np.complex128)
        out[:, 0] = y
    for i in range(nsteps):
        y = _np_interval(a_nodes[i], a_nodes[i + 1], lamc, y, substeps, h)
        if store:
            out[:, i + 1] = y
    return out if store else y


def _np_transfers(a_nodes, cmat, lams, substeps):
    m1, d, _ = a_nodes.shape
    nsteps = m1 - 1
    h = 1.0 / nsteps
    b = lams.shape[0]
    lamc = lams[:, None, None] * cmat[None, :, :]
    eye = np.broadcast_to(np.eye(d, dtype=np.complex128)[None], (b, d, d)).copy()
    out = np.empty((b, nsteps, d, d), dtype=np.complex128)
    for i in range(nsteps):
        out[:, i] = _np_interval(a_nodes[i], a_nodes[i + 1], lamc, eye.copy(),
                                 substeps, h)
    return out


# ---------------------------------------------------------------- numba path

if _HAS_NUMBA:

    @njit(cache=True)
    def _nb_interval(a0, a1, lamc, y, substeps, h):
        hs = h / substeps
        for j in range(substeps):
            f0 = j / substeps
            fm = (j + 0.5) / substeps
            f1 = (j + 1.0) / substeps
            m0 = a0 + f0 * (a1 - a0) + lamc
            mm = a0 + fm * (a1 - a0) + lamc
            m1 = a0 + f1 * (a1 - a0) + lamc
            k1 = np.dot(m0, y)
            k2 = np.dot(mm, y + (0.5 * hs) * k1)
            k3 = np.dot(mm, y + (0.5 * hs) * k2)
            k4 = np.dot(m1, y + hs * k3)
            y = y + (hs / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        return y

    @njit(cache=True, parallel=True)
    def _nb_final(a_nodes, cmat, lams, y0, substeps):
        m1, d, _ = a_nodes.shape
        nsteps = m1 - 1
        h = 1.0 / nsteps
        b = lams.shape[0]
        q = y0.shape[1]
        out = np.empty((b, d, q), dtype=np.complex128)
        for bi in prange(b):
            lamc = lams[bi] * cmat
            y = y0.copy()
            for i in range(nsteps):
                y = _nb_interval(a_nodes[i], a_nodes[i + 1], lamc, y, substeps, h)
            out[bi] = y
        return out

    @njit(cache=True, parallel=True)
    def _nb_nodes(a_nodes, cmat, lams, y0, substeps):
        m1, d, _ = a_nodes.shape
        nsteps = m1 - 1
        h = 1.0 / nsteps
        b = lams.shape[0]
        q = y0.shape[1]
        out = np.empty((b, m1, d, q), dtype=np.complex128)
        for bi in prange(b):
            lamc = lams[bi] * cmat
            y = y0.copy()
            out[bi, 0] = y
            for i in range(nsteps):
                y = _nb_interval(a_nodes[i], a_nodes[i + 1], lamc, y, substeps, h)
                out[bi, i + 1] = y
        return out

    @njit(cache=True, parallel=True)
    def _nb_transfers(a_nodes, cmat, lams, substeps):
        m1, d, _ = a_nodes.shape
        nsteps = m1 - 1
        h = 1.0 / nsteps
        b = lams.shape[0]
        out = np.empty((b, nsteps, d, d), dtype=np.complex128)
        eye = np.eye(d, dtype=np.complex128)
        for bi in prange(b):
            lamc = lams[bi] * cmat
            for i in range(nsteps):
                out[bi, i] = _nb_interval(a_nodes[i], a_nodes[i + 1], lamc,
                                          eye.copy(), substeps, h)
        return out
