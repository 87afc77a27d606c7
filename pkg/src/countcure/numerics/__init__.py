"""Statistical numerics: special functions, ranks, OLS and IRLS fitting."""

from .glm import GlmFit, irls_glm, ols_fit, pivoted_qr
from .ranks import midranks
from .special import (
    chisq_cdf,
    chisq_sf,
    f_cdf,
    f_sf,
    reg_incomplete_beta,
    reg_incomplete_gamma,
    reg_incomplete_gamma_upper,
)

__all__ = [
    "GlmFit", "irls_glm", "ols_fit", "pivoted_qr", "midranks",
    "chisq_cdf", "chisq_sf", "f_cdf", "f_sf",
    "reg_incomplete_beta", "reg_incomplete_gamma", "reg_incomplete_gamma_upper",
]
