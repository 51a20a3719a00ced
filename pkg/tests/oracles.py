"""Dense reference computations used as test oracles."""

import numpy as np
from scipy import stats


def random_sre(rng, n, b, kernel="exponential"):
    """Random basis matrix and a valid E from the kernel on random centers."""
    from srecopula.basis import kernel_matrix

    S = rng.random((n, b)) * (rng.random((n, b)) < 0.7)
    centers = rng.random((b, 2))
    d = np.sqrt(((centers[:, None] - centers[None]) ** 2).sum(-1))
    theta_s = rng.uniform(0.5, 10)
    theta_r = rng.uniform(0.05, 0.6)
    E = kernel_matrix(d, kernel, theta_s, theta_r)
    E += 1e-8 * theta_s * np.eye(b)
    return S, E


def dense_sigma(S, E):
    return S @ E @ S.T + np.eye(S.shape[0])


def dense_gau_copula_logpdf(u, Sigma):
    """Gaussian copula with correlation from Sigma, built by hand."""
    sd = np.sqrt(np.diag(Sigma))
    R = Sigma / np.outer(sd, sd)
    z = stats.norm.ppf(u)
    return stats.multivariate_normal(np.zeros(len(u)), R).logpdf(z) - stats.norm.logpdf(z).sum()


def dense_t_copula_logpdf(u, Sigma, nu):
    sd = np.sqrt(np.diag(Sigma))
    R = Sigma / np.outer(sd, sd)
    x = stats.t.ppf(u, nu)
    return stats.multivariate_t(np.zeros(len(u)), R, df=nu).logpdf(x) - stats.t.logpdf(x, nu).sum()


def dense_process_logpdf(y, marginal, Sigma, copula="gau", nu=None):
    """Change of variables y -> w = sd * G^{-1}(F(y)) with a dense joint pdf."""
    sd = np.sqrt(np.diag(Sigma))
    u = marginal.cdf(y)
    if copula == "gau":
        q = stats.norm.ppf(u)
        joint = stats.multivariate_normal(np.zeros(len(y)), Sigma).logpdf(sd * q)
        base = stats.norm.logpdf(q)
    else:
        q = stats.t.ppf(u, nu)
        joint = stats.multivariate_t(np.zeros(len(y)), Sigma, df=nu).logpdf(sd * q)
        base = stats.t.logpdf(q, nu)
    # dw/dy = sd * f(y) / g(q)
    return joint + np.sum(np.log(sd) + marginal.logpdf(y) - base)
