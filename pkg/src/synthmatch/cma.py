"""CMA-ES with box bounds on [0,1]^D.

Standard (mu/mu_w, lambda) covariance matrix adaptation: weighted
recombination, cumulative step-size adaptation, rank-1 plus rank-mu
covariance updates, with the usual default learning rates. Samples are
mapped into the unit box by reflection at 0 and 1; the reflected points are
what gets evaluated and what drives the updates. NaN losses rank worst
instead of aborting. Fully deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np


def reflect01(x: np.ndarray) -> np.ndarray:
    """Fold the real line into [0,1]: reflection at both bounds, idempotent."""
    r = np.remainder(x, 2.0)
    return np.where(r > 1.0, 2.0 - r, r)


class CmaEs:
    """One CMA-ES run; ask() yields a population, tell() updates the state."""

    def __init__(self, x0, sigma0: float, lam: int = 40, seed: int = 0):
        x0 = np.asarray(x0, dtype=float)
        if not 0.0 < sigma0 <= 0.5:
            raise ValueError("sigma0 must lie in (0, 0.5]")
        if lam < 4:
            raise ValueError("population size must be at least 4")
        self.dim = d = len(x0)
        self.lam = lam
        self.mean = np.clip(x0, 0.0, 1.0)
        self.sigma = float(sigma0)
        self.rng = np.random.default_rng(seed)

        mu = lam // 2
        w = np.log((lam + 1) / 2.0) - np.log(np.arange(1, mu + 1))
        self.weights = w / w.sum()
        self.mu = mu
        self.mueff = 1.0 / np.sum(self.weights**2)

        self.c_sigma = (self.mueff + 2.0) / (d + self.mueff + 5.0)
        self.d_sigma = (
            1.0
            + 2.0 * max(0.0, np.sqrt((self.mueff - 1.0) / (d + 1.0)) - 1.0)
            + self.c_sigma
        )
        self.c_c = (4.0 + self.mueff / d) / (d + 4.0 + 2.0 * self.mueff / d)
        self.c_1 = 2.0 / ((d + 1.3) ** 2 + self.mueff)
        self.c_mu = min(
            1.0 - self.c_1,
            2.0 * (self.mueff - 2.0 + 1.0 / self.mueff) / ((d + 2.0) ** 2 + self.mueff),
        )
        self.chi_n = np.sqrt(d) * (1.0 - 1.0 / (4.0 * d) + 1.0 / (21.0 * d**2))

        self.cov = np.eye(d)
        self.p_sigma = np.zeros(d)
        self.p_c = np.zeros(d)
        self.generation = 0
        self.best_x = self.mean.copy()
        self.best_loss = np.inf
        self._pending = None
        self._decompose()

    def _decompose(self):
        self.cov = (self.cov + self.cov.T) / 2.0
        eigvals, eigvecs = np.linalg.eigh(self.cov)
        eigvals = np.maximum(eigvals, 1e-12)  # repair: keep C positive-definite
        self._eigvals = eigvals
        self._eigvecs = eigvecs
        self._sqrt_c = eigvecs * np.sqrt(eigvals)[None, :]
        self._inv_sqrt_c = (eigvecs / np.sqrt(eigvals)[None, :]) @ eigvecs.T

    @property
    def min_eigenvalue(self) -> float:
        return float(self._eigvals.min())

    def ask(self) -> np.ndarray:
        """Sample lambda candidates ~ N(mean, sigma^2 C) reflected into [0,1]."""
        z = self.rng.standard_normal((self.lam, self.dim))
        y = z @ self._sqrt_c.T
        x = reflect01(self.mean[None, :] + self.sigma * y)
        self._pending = x
        return x

    def tell(self, x: np.ndarray, losses) -> None:
        """Rank candidates and apply the CMA update; NaN losses rank worst."""
        x = np.asarray(x, dtype=float)
        if self._pending is None or x.shape != (self.lam, self.dim):
            raise ValueError("tell() expects the candidates from the last ask()")
        if not np.array_equal(x, self._pending):
            raise ValueError("tell() received different vectors than ask() returned")
        self._pending = None
        losses = np.asarray(losses, dtype=float)
        key = np.where(np.isnan(losses), np.inf, losses)
        order = np.argsort(key, kind="stable")

        if np.isfinite(key[order[0]]) and key[order[0]] < self.best_loss:
            self.best_loss = float(key[order[0]])
            self.best_x = x[order[0]].copy()

        sel = x[order[: self.mu]]
        old_mean = self.mean
        y_sel = (sel - old_mean[None, :]) / self.sigma
        y_w = self.weights @ y_sel
        self.mean = old_mean + self.sigma * y_w

        self.p_sigma = (1.0 - self.c_sigma) * self.p_sigma + np.sqrt(
            self.c_sigma * (2.0 - self.c_sigma) * self.mueff
        ) * (self._inv_sqrt_c @ y_w)
        ps_norm = float(np.linalg.norm(self.p_sigma))
        denom = np.sqrt(
            1.0 - (1.0 - self.c_sigma) ** (2.0 * (self.generation + 1))
        )
        h_sigma = 1.0 if ps_norm / max(denom, 1e-300) / self.chi_n < 1.4 + 2.0 / (
            self.dim + 1.0
        ) else 0.0
        self.p_c = (1.0 - self.c_c) * self.p_c + h_sigma * np.sqrt(
            self.c_c * (2.0 - self.c_c) * self.mueff
        ) * y_w

        rank1 = np.outer(self.p_c, self.p_c)
        rank_mu = (y_sel.T * self.weights) @ y_sel
        delta_h = (1.0 - h_sigma) * self.c_c * (2.0 - self.c_c)
        self.cov = (
            (1.0 - self.c_1 - self.c_mu) * self.cov
            + self.c_1 * (rank1 + delta_h * self.cov)
            + self.c_mu * rank_mu
        )
        self.sigma *= float(
            np.exp((self.c_sigma / self.d_sigma) * (ps_norm / self.chi_n - 1.0))
        )
        self.sigma = float(min(self.sigma, 1.0))
        self.generation += 1
        self._decompose()
