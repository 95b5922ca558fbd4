"""
Walsh transform module for the OSSDM simulator
Builds sequency-ordered Walsh matrices and runs forward/inverse Walsh transforms
"""
import logging
from dataclasses import dataclass, field
from functools import cached_property, lru_cache

import numpy as np
from scipy.linalg import hadamard

import config
from errors import ConfigurationError, DimensionError

logger = logging.getLogger('ossdm.walsh')


@dataclass(frozen=True)
class WalshBasis:
    """Sequency-ordered Walsh basis of order n (size N = 2^n)"""

    order: int
    size: int
    norm_factor: float
    # permutation[k] = natural (Sylvester) row index of the sequency-k row
    permutation: np.ndarray = field(repr=False, compare=False)

    @cached_property
    def rows(self) -> np.ndarray:
        """N x N matrix of +/-1 signs, row k has exactly k sign changes"""
        return hadamard(self.size, dtype=np.int8)[self.permutation]

    def matrix(self, normalized: bool = True) -> np.ndarray:
        """Rows as float64, optionally divided by sqrt(N)"""
        rows = self.rows.astype(np.float64)
        return rows / self.norm_factor if normalized else rows


@dataclass
class WalshVector:
    coefficients: np.ndarray
    order: int

    def __post_init__(self):
        self.coefficients = np.asarray(self.coefficients, dtype=np.float64)
        if self.coefficients.shape[-1] != 2 ** self.order:
            raise DimensionError(
                f"Walsh vector of order {self.order} needs length {2 ** self.order}, "
                f"got {self.coefficients.shape[-1]}"
            )


def sequency_permutation(order: int) -> np.ndarray:
    """Natural-order index of each sequency row: bit-reverse of the Gray code of k"""
    k = np.arange(2 ** order, dtype=np.int64)
    gray = k ^ (k >> 1)
    reversed_bits = np.zeros_like(gray)
    for bit in range(order):
        reversed_bits |= ((gray >> bit) & 1) << (order - 1 - bit)
    return reversed_bits


def count_sign_changes(rows: np.ndarray) -> np.ndarray:
    return np.count_nonzero(np.diff(np.sign(rows), axis=-1) != 0, axis=-1)


@lru_cache(maxsize=None)
def build_walsh_basis(order: int) -> WalshBasis:
    """Sylvester-Hadamard recursion reordered by increasing sequency"""
    if not isinstance(order, (int, np.integer)) or not config.WALSH_ORDER_MIN <= order <= config.WALSH_ORDER_MAX:
        raise ConfigurationError(
            f"Walsh order must be in [{config.WALSH_ORDER_MIN}, {config.WALSH_ORDER_MAX}], got {order}"
        )
    size = 2 ** int(order)
    permutation = sequency_permutation(int(order))
    permutation.setflags(write=False)
    logger.debug(f"Built Walsh basis of order {order} (N={size})")
    return WalshBasis(order=int(order), size=size, norm_factor=float(np.sqrt(size)), permutation=permutation)


def _fwht(values: np.ndarray) -> np.ndarray:
    """Natural-order fast Walsh-Hadamard butterfly along the last axis"""
    y = np.array(values, dtype=np.float64, copy=True)
    lead = y.shape[:-1]
    n = y.shape[-1]
    h = 1
    while h < n:
        y = y.reshape(*lead, n // (2 * h), 2, h)
        upper = y[..., 0, :]
        lower = y[..., 1, :]
        y = np.stack((upper + lower, upper - lower), axis=-2)
        h *= 2
    return y.reshape(*lead, n)


def _check_length(values: np.ndarray, basis: WalshBasis, what: str) -> None:
    if values.ndim == 0 or values.shape[-1] != basis.size:
        got = values.shape[-1] if values.ndim else 0
        raise DimensionError(f"{what} length {got} does not match Walsh size {basis.size}")


def wt(signal: np.ndarray, basis: WalshBasis, normalized: bool = True, method: str = "fast") -> WalshVector:
    """
    Forward Walsh transform a = W_N x (divided by sqrt(N) when normalized).

    Accepts a single length-N vector or a batch (..., N). The 'matrix' method
    is the explicit reference path; 'fast' is the O(N log N) butterfly.
    """
    x = np.asarray(signal, dtype=np.float64)
    _check_length(x, basis, "Signal")
    if method == "matrix":
        coefficients = x @ basis.matrix(normalized=False).T
    elif method == "fast":
        coefficients = _fwht(x)[..., basis.permutation]
    else:
        raise ConfigurationError(f"Unknown transform method '{method}'")
    if normalized:
        coefficients = coefficients / basis.norm_factor
    return WalshVector(coefficients, basis.order)


def iwt(coeffs, basis: WalshBasis, normalized: bool = True, method: str = "fast") -> np.ndarray:
    """Inverse Walsh transform x = W_N^T a, scaled so that iwt(wt(x)) = x"""
    a = coeffs.coefficients if isinstance(coeffs, WalshVector) else np.asarray(coeffs, dtype=np.float64)
    _check_length(a, basis, "Coefficient vector")
    if method == "matrix":
        signal = a @ basis.matrix(normalized=False)
    elif method == "fast":
        natural = np.empty_like(a)
        natural[..., basis.permutation] = a
        signal = _fwht(natural)
    else:
        raise ConfigurationError(f"Unknown transform method '{method}'")
    return signal / (basis.norm_factor if normalized else basis.size)
