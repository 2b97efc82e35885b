"""Special functions: gamma, Mittag-Leffler, Caputo derivatives of powers.

Everything here is scalar, double precision and dependency free.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "SeriesControl",
    "SpecialFunctionError",
    "gamma",
    "log_gamma",
    "mittag_leffler",
    "caputo_power",
]


class SpecialFunctionError(ValueError):
    """Raised for arguments outside a function's supported domain."""


@dataclass(frozen=True)
class SeriesControl:
    """Truncation control for power series."""

    abs_term_tol: float = 1e-16
    max_terms: int = 200

    def __post_init__(self) -> None:
        if not self.abs_term_tol > 0:
            raise SpecialFunctionError("abs_term_tol must be positive")
        if self.max_terms < 1:
            raise SpecialFunctionError("max_terms must be >= 1")


# Lanczos approximation, g = 7, n = 9.
_LANCZOS_G = 7.0
_LANCZOS_COEF = (
    0.99999999999980993,
    676.5203681218851,
    -1259.1392167224028,
    771.32342877765313,
    -176.61502916214059,
    12.507343278686905,
    -0.13857109526572012,
    9.9843695780195716e-6,
    1.5056327351493116e-7,
)
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _lanczos_series(z: float) -> float:
    # z is the shifted argument x - 1
    acc = _LANCZOS_COEF[0]
    for i in range(1, len(_LANCZOS_COEF)):
        acc += _LANCZOS_COEF[i] / (z + i)
    return acc


def gamma(x: float) -> float:
    """Gamma function for positive real ``x``."""
    x = float(x)
    if not x > 0 or math.isnan(x):
        raise SpecialFunctionError(f"gamma requires x > 0, got {x!r}")
    if x < 0.5:
        # reflection keeps the Lanczos sum in its accurate range
        return math.pi / (math.sin(math.pi * x) * gamma(1.0 - x))
    if x == math.floor(x) and x <= 23:
        return float(math.prod(range(1, int(x))))
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    if x > 140:
        return math.exp(log_gamma(x))
    return math.sqrt(2.0 * math.pi) * t ** (z + 0.5) * math.exp(-t) * _lanczos_series(z)


def log_gamma(x: float) -> float:
    """Natural log of the gamma function for positive real ``x``."""
    x = float(x)
    if not x > 0 or math.isnan(x):
        raise SpecialFunctionError(f"log_gamma requires x > 0, got {x!r}")
    if x < 0.5:
        return math.log(math.pi / math.sin(math.pi * x)) - log_gamma(1.0 - x)
    z = x - 1.0
    t = z + _LANCZOS_G + 0.5
    return _HALF_LOG_2PI + (z + 0.5) * math.log(t) - t + math.log(_lanczos_series(z))


def _series_term(a: float, b: float, z: float, k: int) -> float:
    if z == 0.0:
        return 1.0 / gamma(b) if k == 0 else 0.0
    arg = a * k + b
    if arg <= 140.0 and k <= 300:
        return z**k / gamma(arg)
    sign = -1.0 if (z < 0 and k % 2) else 1.0
    return sign * math.exp(k * math.log(abs(z)) - log_gamma(arg))


def mittag_leffler(a: float, b: float, z: float, control: SeriesControl | None = None) -> float:
    """Two-parameter Mittag-Leffler function ``E_{a,b}(z)`` for real ``z``.

    Direct power series ``sum_k z**k / Gamma(a*k + b)`` accumulated with Kahan
    summation. Intended for moderate arguments (``|z| <= 2``); there is no
    asymptotic fallback.

    Raises
    ------
    SpecialFunctionError
        If ``a`` or ``b`` is not positive, or the series has not converged after
        ``control.max_terms`` terms.
    """
    control = control or SeriesControl()
    if not (a > 0 and b > 0):
        raise SpecialFunctionError(f"mittag_leffler requires a, b > 0, got a={a!r}, b={b!r}")
    total = 0.0
    comp = 0.0
    for k in range(control.max_terms):
        term = _series_term(a, b, z, k)
        y = term - comp
        s = total + y
        comp = (s - total) - y
        total = s
        if abs(term) < control.abs_term_tol:
            return total
    raise SpecialFunctionError(
        f"Mittag-Leffler series E_{{{a},{b}}}({z}) did not converge in {control.max_terms} terms"
    )


def caputo_power(p: float, alpha: float, t: float) -> float:
    """Caputo derivative of order ``alpha`` of ``t**p`` evaluated at ``t``.

    Returns ``Gamma(p+1)/Gamma(p+1-alpha) * t**(p-alpha)`` for ``p >= alpha``
    and zero for the constant ``p == 0``.
    """
    if not 0.0 < alpha < 1.0:
        raise SpecialFunctionError(f"alpha must lie in (0,1), got {alpha!r}")
    if t < 0:
        raise SpecialFunctionError(f"t must be non-negative, got {t!r}")
    if p == 0:
        return 0.0
    if p < alpha:
        raise SpecialFunctionError(f"caputo_power needs p == 0 or p >= alpha, got p={p!r}")
    if p == alpha:
        return gamma(p + 1.0)
    return gamma(p + 1.0) / gamma(p + 1.0 - alpha) * t ** (p - alpha)
