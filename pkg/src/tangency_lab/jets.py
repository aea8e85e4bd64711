"""Truncated bivariate Taylor series.

A jet of order K is a (K+1) x (K+1) array ``c`` with ``c[i, j]`` the
coefficient of ``dx**i dy**j``; entries with i + j > K are kept at zero.
"""
from __future__ import annotations

from math import comb

import numpy as np


def _mask(K: int) -> np.ndarray:
    i, j = np.indices((K + 1, K + 1))
    return (i + j) <= K


def truncate(c: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K + 1, K + 1), dtype=c.dtype if np.iscomplexobj(c) else float)
    a, b = min(c.shape[0], K + 1), min(c.shape[1], K + 1)
    out[:a, :b] = c[:a, :b]
    out[~_mask(K)] = 0
    return out


def mul(a: np.ndarray, b: np.ndarray, K: int) -> np.ndarray:
    out = np.zeros((K + 1, K + 1), dtype=np.result_type(a, b))
    ia, ja = np.nonzero(a)
    for i, j in zip(ia, ja):
        if i + j > K:
            continue
        sub = b[: K + 1 - i, : K + 1 - j]
        out[i:, j:] += a[i, j] * sub
    out[~_mask(K)] = 0
    return out


def const(v: float, K: int) -> np.ndarray:
    out = np.zeros((K + 1, K + 1))
    out[0, 0] = v
    return out


def shift_poly(c: np.ndarray, x0: float, y0: float, K: int) -> np.ndarray:
    """Taylor coefficients at (x0, y0) of the polynomial sum c[i,j] x^i y^j."""
    di, dj = c.shape
    px = np.array([[comb(i, a) * x0 ** (i - a) if i >= a else 0.0 for a in range(di)] for i in range(di)])
    py = np.array([[comb(j, b) * y0 ** (j - b) if j >= b else 0.0 for b in range(dj)] for j in range(dj)])
    shifted = px.T @ c @ py
    return truncate(shifted, K)


def compose(G: np.ndarray, A: np.ndarray, B: np.ndarray, K: int) -> np.ndarray:
    """Series of G(A, B) where A and B have zero constant term."""
    out = np.zeros((K + 1, K + 1), dtype=np.result_type(G, A, B))
    Apow = [const(1.0, K)]
    for _ in range(K):
        Apow.append(mul(Apow[-1], A, K))
    Bpow = [const(1.0, K)]
    for _ in range(K):
        Bpow.append(mul(Bpow[-1], B, K))
    for i in range(min(G.shape[0], K + 1)):
        for j in range(min(G.shape[1], K + 1 - i)):
            if G[i, j] != 0:
                out += G[i, j] * mul(Apow[i], Bpow[j], K)
    return out


def compose_maps(inner: tuple[np.ndarray, np.ndarray], outer: tuple[np.ndarray, np.ndarray], K: int):
    """Jet of outer o inner; ``outer`` must be expanded at the value of inner."""
    A = inner[0].copy()
    B = inner[1].copy()
    A[0, 0] = 0.0
    B[0, 0] = 0.0
    return compose(outer[0], A, B, K), compose(outer[1], A, B, K)


def linear_part(jet: tuple[np.ndarray, np.ndarray]) -> np.ndarray:
    jx, jy = jet
    return np.array([[jx[1, 0], jx[0, 1]], [jy[1, 0], jy[0, 1]]])


def univariate_compose(g: np.ndarray, a: np.ndarray, K: int) -> np.ndarray:
    """Series of g(a(u)) with a(0) = 0; 1-D arrays of length K+1."""
    out = np.zeros(K + 1, dtype=np.result_type(g, a))
    p = np.zeros(K + 1, dtype=out.dtype)
    p[0] = 1.0
    for i in range(min(len(g), K + 1)):
        out += g[i] * p
        p = np.convolve(p, a)[: K + 1]
    return out


def taylor_shift_1d(coeffs, c: float, K: int) -> np.ndarray:
    """Taylor coefficients at c of sum coeffs[i] t^i, truncated at order K."""
    out = np.zeros(K + 1)
    for i, a in enumerate(coeffs):
        if a == 0:
            continue
        for m in range(min(i, K) + 1):
            out[m] += a * comb(i, m) * c ** (i - m)
    return out
