"""Adaptive quadrature with retry on integration warnings."""

import logging
import math
import warnings
from typing import Callable

from scipy.integrate import IntegrationWarning, quad
from tenacity import Retrying, retry_if_exception_type, stop_after_attempt

from .config import get_settings
from .errors import QuadratureFailure

logger = logging.getLogger(__name__)


def integrate(
    func: Callable[[float], float],
    a: float,
    b: float,
    epsrel: float | None = None,
    epsabs: float = 0.0,
    points: list[float] | None = None,
    weight: str | None = None,
    wvar: float | None = None,
) -> float:
    """
    Integrate func over [a, b] with scipy's QUADPACK wrappers.

    An IntegrationWarning is treated as a failed attempt and the subdivision
    limit doubles on the next one. Once the attempts are exhausted the
    integral is taken as-is and the degradation is logged.

    Args:
        func: Scalar integrand.
        a: Lower limit.
        b: Upper limit (may be inf).
        epsrel: Relative tolerance (defaults to the configured quad_epsrel).
        epsabs: Absolute tolerance.
        points: Interior breakpoints (finite intervals only).
        weight: Optional QUADPACK weight ("cos", "sin", ...).
        wvar: Parameter of the weight function.

    Returns:
        The integral value.
    """
    settings = get_settings()
    epsrel = settings.quad_epsrel if epsrel is None else epsrel
    if a == b:
        return 0.0

    def attempt_once(limit: int) -> float:
        kwargs: dict = {"epsabs": epsabs, "epsrel": epsrel, "limit": limit}
        if weight is not None:
            kwargs["weight"] = weight
            kwargs["wvar"] = wvar
            if math.isinf(b):
                # QAWF honours only the absolute tolerance
                kwargs["limlst"] = max(50, limit // 4)
                kwargs["epsabs"] = epsabs if epsabs > 0 else 1e-12
        elif points is not None:
            kwargs["points"] = points
        value, _ = quad(func, a, b, **kwargs)
        if not math.isfinite(value):
            raise QuadratureFailure(f"non-finite integral on [{a}, {b}]")
        return value

    try:
        for attempt in Retrying(
            stop=stop_after_attempt(settings.quad_retries),
            retry=retry_if_exception_type(IntegrationWarning),
            reraise=True,
        ):
            with attempt:
                limit = settings.quad_limit * 2 ** (attempt.retry_state.attempt_number - 1)
                with warnings.catch_warnings():
                    warnings.simplefilter("error", IntegrationWarning)
                    return attempt_once(limit)
    except IntegrationWarning as exc:
        logger.warning("quadrature on [%g, %g] degraded: %s", a, b, exc)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", IntegrationWarning)
            return attempt_once(settings.quad_limit * 2**settings.quad_retries)
    raise QuadratureFailure(f"quadrature on [{a}, {b}] produced no attempt")
