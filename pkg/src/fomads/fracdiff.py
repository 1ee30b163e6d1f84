"""Discrete fractional-order differentiation of uniformly sampled signals.

Two complementary operators over orders in (0, 1):

* Caputo derivative, discretized with the L1 finite-difference scheme.
  It differences the signal before weighting, so constants map to zero
  and it behaves as a high-pass filter for transient anomalies.
* Grünwald-Letnikov (GL) derivative, the truncated backward-difference
  sum with binomial-coefficient weights. It weights raw past samples and
  retains memory of slow drifts.

Both use a short-memory kernel of ``kernel_len`` samples: output index
``n`` sees at most the ``kernel_len`` most recent samples, and indices
with a shorter history use only the samples that exist (no padding).
Output length always equals input length.

All functions are pure; kernels are immutable and safe to share across
threads.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

DEFAULT_CAPUTO_ORDER = 0.7
DEFAULT_GL_ORDER = 0.3
DEFAULT_KERNEL_LEN = 10
DEFAULT_STEP = 1.0 / 2000.0

#: Kernel-length range searched when building kernels from default config.
KERNEL_LEN_RANGE = (5, 20)


def _check_order(order: float) -> None:
    if not 0.0 < order < 1.0:
        raise ConfigError(f"fractional order must lie in (0, 1), got {order}")


def gl_weights(order: float, kernel_len: int) -> np.ndarray:
    """Grünwald-Letnikov weights ``w_k = (-1)^k binom(order, k)``.

    Computed by the stable recurrence ``w_k = w_{k-1} * (1 - (order+1)/k)``
    with ``w_0 = 1``.

    Parameters
    ----------
    order : float
        Differentiation order in (0, 1).
    kernel_len : int
        Number of weights K (>= 1).

    Returns
    -------
    numpy.ndarray, shape (kernel_len,)
    """
    _check_order(order)
    if kernel_len < 1:
        raise ConfigError(f"kernel_len must be >= 1, got {kernel_len}")
    w = np.empty(kernel_len)
    w[0] = 1.0
    for k in range(1, kernel_len):
        w[k] = w[k - 1] * (1.0 - (order + 1.0) / k)
    return w


def caputo_l1_coeffs(order: float, kernel_len: int) -> np.ndarray:
    """L1-scheme coefficients ``b_j = (j+1)^(1-order) - j^(1-order)``.

    Strictly positive and strictly decreasing in j for orders in (0, 1);
    ``b_0`` is always 1.
    """
    _check_order(order)
    if kernel_len < 1:
        raise ConfigError(f"kernel_len must be >= 1, got {kernel_len}")
    j = np.arange(kernel_len, dtype=float)
    return (j + 1.0) ** (1.0 - order) - j ** (1.0 - order)


def gl_derivative(
    signal: np.ndarray,
    order: float = DEFAULT_GL_ORDER,
    kernel_len: int = DEFAULT_KERNEL_LEN,
    step: float = DEFAULT_STEP,
) -> np.ndarray:
    """Truncated GL derivative of a uniformly sampled signal.

    ``out[n] = step^(-order) * sum_{k=0}^{min(n, K-1)} w_k * signal[n-k]``.

    Note the truncated operator does not annihilate constants: a constant
    signal c yields ``c * step^(-order) * sum(w_k)`` once the kernel is
    fully inside the history.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 1:
        raise ConfigError("signal must be a non-empty 1-D sequence")
    if step <= 0.0:
        raise ConfigError(f"step must be > 0, got {step}")
    w = gl_weights(order, kernel_len)
    # Full convolution truncated to the signal length realizes the
    # shrinking-history boundary rule exactly.
    out = np.convolve(x, w)[: x.size]
    out *= step ** (-order)
    return out


def caputo_derivative(
    signal: np.ndarray,
    order: float = DEFAULT_CAPUTO_ORDER,
    kernel_len: int = DEFAULT_KERNEL_LEN,
    step: float = DEFAULT_STEP,
) -> np.ndarray:
    """Caputo derivative via the L1 scheme on first differences.

    ``out[n] = step^(-order)/Gamma(2-order)
               * sum_{j=0}^{min(n-1, K-1)} b_j * (signal[n-j] - signal[n-j-1])``
    with ``out[0] = 0``. Requires at least two samples.
    """
    x = np.asarray(signal, dtype=float)
    if x.ndim != 1 or x.size < 2:
        raise ConfigError("signal must be a 1-D sequence of length >= 2")
    if step <= 0.0:
        raise ConfigError(f"step must be > 0, got {step}")
    b = caputo_l1_coeffs(order, kernel_len)
    d = np.diff(x)
    out = np.empty(x.size)
    out[0] = 0.0
    out[1:] = np.convolve(d, b)[: d.size]
    out[1:] *= step ** (-order) / math.gamma(2.0 - order)
    return out


@dataclass(frozen=True)
class FractionalKernel:
    """Precomputed convolution weights for one operator at a fixed order.

    ``weights`` are GL weights for ``operator_kind='gl'`` and L1
    coefficients for ``operator_kind='caputo'``.
    """

    operator_kind: str
    order: float
    kernel_len: int
    step: float
    weights: np.ndarray

    def apply(self, signal: np.ndarray) -> np.ndarray:
        """Differentiate ``signal`` with this kernel's operator."""
        if self.operator_kind == "gl":
            return gl_derivative(signal, self.order, self.kernel_len, self.step)
        return caputo_derivative(signal, self.order, self.kernel_len, self.step)

    def to_csv(self, path: str) -> None:
        """Dump weights as ``k,weight`` rows for debugging."""
        with open(path, "w", encoding="utf-8") as fh:
            fh.write("k,weight\n")
            for k, wk in enumerate(self.weights):
                fh.write(f"{k},{wk!r}\n")


def make_kernel(
    operator_kind: str,
    order: float | None = None,
    kernel_len: int = DEFAULT_KERNEL_LEN,
    step: float = DEFAULT_STEP,
) -> FractionalKernel:
    """Build an immutable kernel for ``'caputo'`` or ``'gl'``."""
    if operator_kind not in ("caputo", "gl"):
        raise ConfigError(f"unknown operator kind {operator_kind!r}")
    if order is None:
        order = DEFAULT_CAPUTO_ORDER if operator_kind == "caputo" else DEFAULT_GL_ORDER
    if step <= 0.0:
        raise ConfigError(f"step must be > 0, got {step}")
    if operator_kind == "gl":
        weights = gl_weights(order, kernel_len)
    else:
        weights = caputo_l1_coeffs(order, kernel_len)
    weights.setflags(write=False)
    return FractionalKernel(operator_kind, order, kernel_len, step, weights)
