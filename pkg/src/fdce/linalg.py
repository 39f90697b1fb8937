"""Complex linear algebra and FFT kernels shared by the whole package.

Conventions fixed here and relied on everywhere else:

* Channel matrices are ``n_rx x n_tx``; vectorization is column-major, so
  the flat index of entry (r, t) is ``r + n_rx * t``.
* The 2-D unitary DFT acting on vectorized grids is
  ``Q = F(n_tx) kron F(n_rx)`` with numpy's forward sign convention, which
  under the column-major rule equals an orthonormal ``fft2`` on the grid.
* All arithmetic is IEEE-754 double precision; complex values are
  complex128.

Vectorized grid helpers (:func:`as_grid` / :func:`as_vec`) accept arbitrary
leading batch axes; the flat grid axis is always last.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np
from scipy.linalg import dft as _scipy_dft

from .exceptions import InvalidDimensionError

# Refuse Kronecker results whose entry count could not be allocated anyway.
_MAX_KRON_ENTRIES = 2**32


class Shape2D(NamedTuple):
    """Antenna geometry of one link direction (receive x transmit)."""

    n_rx: int
    n_tx: int

    @property
    def size(self) -> int:
        return self.n_rx * self.n_tx

    def validate(self) -> "Shape2D":
        if self.n_rx < 1 or self.n_tx < 1:
            raise InvalidDimensionError(f"antenna counts must be >= 1, got {self}")
        return self


def unitary_dft(n: int) -> np.ndarray:
    """Unitary DFT matrix F / sqrt(n) (numpy forward sign convention)."""
    if n < 1:
        raise InvalidDimensionError(f"DFT size must be >= 1, got {n}")
    return _scipy_dft(n, scale="sqrtn")


def kron(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Kronecker product with an allocation guard on the result size."""
    a = np.asarray(a)
    b = np.asarray(b)
    if a.ndim != 2 or b.ndim != 2:
        raise InvalidDimensionError("kron expects two matrices")
    entries = a.shape[0] * b.shape[0] * a.shape[1] * b.shape[1]
    if entries > _MAX_KRON_ENTRIES:
        raise InvalidDimensionError(
            f"kron result with {entries} entries exceeds the supported size"
        )
    return np.kron(a, b)


def vec(h_mat: np.ndarray) -> np.ndarray:
    """Column-major vectorization of a matrix."""
    h_mat = np.asarray(h_mat)
    if h_mat.ndim != 2:
        raise InvalidDimensionError("vec expects a matrix")
    return h_mat.reshape(-1, order="F")


def unvec(h: np.ndarray, shape: Shape2D) -> np.ndarray:
    """Inverse of :func:`vec`; exact round-trip."""
    h = np.asarray(h)
    if h.ndim != 1 or h.shape[0] != shape.n_rx * shape.n_tx:
        raise InvalidDimensionError(
            f"vector of length {h.shape} does not match shape {shape}"
        )
    return h.reshape((shape.n_rx, shape.n_tx), order="F")


def as_grid(v: np.ndarray, shape: Shape2D) -> np.ndarray:
    """View (..., n_rx*n_tx) column-major vectors as (..., n_rx, n_tx) grids."""
    v = np.asarray(v)
    if v.shape[-1] != shape.size:
        raise InvalidDimensionError(
            f"last axis has length {v.shape[-1]}, expected {shape.size}"
        )
    return v.reshape(v.shape[:-1] + (shape.n_tx, shape.n_rx)).swapaxes(-1, -2)


def as_vec(g: np.ndarray) -> np.ndarray:
    """Inverse of :func:`as_grid` for (..., n_rx, n_tx) grids."""
    g = np.asarray(g)
    n = g.shape[-2] * g.shape[-1]
    return g.swapaxes(-1, -2).reshape(g.shape[:-2] + (n,))


def dft2_apply(x: np.ndarray, shape: Shape2D, direction: str = "forward") -> np.ndarray:
    """Apply the unitary 2-D DFT Q (or its adjoint) to vectorized grids.

    Equivalent to multiplying by ``kron(unitary_dft(n_tx), unitary_dft(n_rx))``
    (respectively its conjugate transpose) at O(N log N) cost.  Accepts
    leading batch axes.
    """
    x = np.asarray(x, dtype=np.complex128)
    g = as_grid(x, shape)
    if direction == "forward":
        out = np.fft.fft2(g, norm="ortho")
    elif direction == "adjoint":
        out = np.fft.ifft2(g, norm="ortho")
    else:
        raise ValueError(f"unknown direction {direction!r}")
    return as_vec(out)


def circ_conv2(kernel: np.ndarray, x: np.ndarray, shape: Shape2D) -> np.ndarray:
    """2-D circular convolution of real vectorized grids via the FFT."""
    k = np.asarray(kernel, dtype=np.float64)
    v = np.asarray(x, dtype=np.float64)
    kg = as_grid(k, shape)
    xg = as_grid(v, shape)
    dims = (shape.n_rx, shape.n_tx)
    out = np.fft.irfft2(np.fft.rfft2(kg) * np.fft.rfft2(xg), s=dims)
    return as_vec(out)


def circ_reverse(v: np.ndarray, shape: Shape2D) -> np.ndarray:
    """Circularly index-reversed grid: out[i, j] = in[-i mod n, -j mod m].

    Convolution with the reversed kernel is the adjoint of convolution with
    the original one (cross-correlation).
    """
    g = as_grid(np.asarray(v), shape)
    rev = np.roll(g[..., ::-1, ::-1], shift=(1, 1), axis=(-2, -1))
    return as_vec(rev)


def softmax(v: np.ndarray) -> np.ndarray:
    """Stable softmax over the last axis; empty input yields empty output."""
    v = np.asarray(v, dtype=np.float64)
    if v.shape[-1] == 0:
        return v.copy()
    shifted = v - v.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def pinv_solve(a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution of a h = y (rank-revealing)."""
    a = np.asarray(a, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if a.ndim != 2 or a.shape[0] != y.shape[-1]:
        raise InvalidDimensionError(
            f"system matrix {a.shape} does not match rhs of length {y.shape}"
        )
    sol, *_ = np.linalg.lstsq(a, np.atleast_1d(y).T if y.ndim > 1 else y, rcond=None)
    return sol.T if y.ndim > 1 else sol


def hermitize(a: np.ndarray) -> np.ndarray:
    """Project a square matrix onto its Hermitian part."""
    return 0.5 * (a + a.conj().T)
