"""Gaussian-process regression on class-probability vectors, with a partial
least squares projection that keeps hyperparameter fitting tractable when the
input dimension is large.

The correlation kernel is a product of squared-exponential terms.  In the
plain form each input coordinate contributes ``exp(-theta * (x_i - x'_i)^2)``
with a single shared decay rate (a per-coordinate theta vector is also
accepted).  In the projected form the coordinates are first scaled by each of
``h`` regression directions ``w^(k)``, every component having its own decay
rate:

    K(x, x') = prod_k prod_i exp(-theta_k * (w_i^(k) x_i - w_i^(k) x'_i)^2)

which collapses to a single weighted squared distance with coordinate weights
``sum_k theta_k * (w_i^(k))^2``.  Decay rates are chosen by maximising the
concentrated log-likelihood with a deterministic multi-start coordinate
search in log10 space.
"""

from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import FitError, InsufficientDataError

logger = logging.getLogger(__name__)

THETA_LOG10_BOUNDS = (-6.0, 2.0)
DEFAULT_NUGGET = 1e-8
MAX_NUGGET = 1e-6


@dataclass
class PlsProjection:
    """Rotated regression directions mapping original coordinates to components.

    ``w`` is (m, h) with unit-norm columns; scores of centered data are
    ``(X - x_mean) @ w``.  Scaling is recorded but identity by default since
    probability components are already commensurate.
    """

    w: np.ndarray
    h: int
    x_mean: np.ndarray
    x_scale: np.ndarray
    y_mean: float
    y_scale: float


@dataclass
class Prediction:
    mean: float
    variance: float  # clamped at zero after numerical round-off


@dataclass
class KplsModel:
    x: np.ndarray  # centered training inputs, (n, m)
    y: np.ndarray  # (n,)
    theta: np.ndarray  # (h,) decay rates, one per component
    projection: PlsProjection
    beta: float  # generalized-least-squares process mean
    sigma2: float  # process variance
    nugget: float
    cho: tuple  # cho_factor of the correlation matrix R
    alpha: np.ndarray  # R^{-1} (y - beta)
    r_inv_ones: np.ndarray  # R^{-1} 1
    ones_r_ones: float  # 1^T R^{-1} 1

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.x.shape[1]


def pls_directions(x: np.ndarray, y: np.ndarray, h: int) -> PlsProjection:
    """Iterative single-response partial least squares directions.

    Per component the weight vector is the (normalized) covariance of the
    deflated inputs with the deflated response; inputs and response are then
    deflated by the component's scores.  The returned matrix contains the
    rotated directions (weights corrected by the loadings) so that scores are
    a direct linear map of the centered inputs; columns are unit norm with
    their largest-magnitude entry positive.  If the requested component count
    exceeds the achieved rank, it is reduced with a warning.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n, m = x.shape
    if n < 2:
        raise InsufficientDataError("partial least squares needs n >= 2 rows")
    h = min(h, n - 1, m)
    x_mean = x.mean(axis=0)
    y_mean = float(y.mean())
    xd = x - x_mean
    yd = y - y_mean
    scale = max(float(np.abs(xd).max()), 1.0) * max(float(np.abs(yd).max()), 1.0)

    weights, loadings = [], []
    for k in range(h):
        w = xd.T @ yd
        norm = np.linalg.norm(w)
        if norm <= 1e-12 * scale:
            logger.warning("rank exhausted after %d of %d components", k, h)
            break
        w /= norm
        t = xd @ w
        tt = float(t @ t)
        if tt <= 1e-12:
            logger.warning("degenerate scores after %d of %d components", k, h)
            break
        p = xd.T @ t / tt
        c = float(yd @ t / tt)
        xd = xd - np.outer(t, p)
        yd = yd - c * t
        weights.append(w)
        loadings.append(p)

    if not weights:
        # no covariance signal at all: fall back to the first coordinate
        w = np.zeros((m, 1))
        w[0, 0] = 1.0
        return PlsProjection(w, 1, x_mean, np.ones(m), y_mean, 1.0)

    w_mat = np.column_stack(weights)
    p_mat = np.column_stack(loadings)
    rotated = w_mat @ np.linalg.inv(p_mat.T @ w_mat)
    rotated /= np.linalg.norm(rotated, axis=0, keepdims=True)
    flip = np.sign(rotated[np.abs(rotated).argmax(axis=0), np.arange(rotated.shape[1])])
    rotated *= flip
    return PlsProjection(rotated, rotated.shape[1], x_mean, np.ones(m), y_mean, 1.0)


def _coordinate_weights(theta: np.ndarray, projection: PlsProjection | None, m: int) -> np.ndarray:
    """Per-coordinate distance weights: theta itself (plain, shared or per
    coordinate) or ``sum_k theta_k w_k^2`` (projected)."""
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if projection is None:
        if theta.size == 1:
            return np.full(m, theta[0])
        if theta.size != m:
            raise ValueError(f"theta length {theta.size} != input dimension {m}")
        return theta
    if theta.size != projection.h:
        raise ValueError(f"theta length {theta.size} != component count {projection.h}")
    return (projection.w**2) @ theta


def kernel(
    x: np.ndarray,
    x2: np.ndarray,
    theta: np.ndarray | float,
    projection: PlsProjection | None = None,
) -> float:
    """Correlation between two points; 1 at zero distance, positive, <= 1."""
    x = np.asarray(x, dtype=float)
    x2 = np.asarray(x2, dtype=float)
    if x.shape != x2.shape:
        raise ValueError(f"shape mismatch {x.shape} vs {x2.shape}")
    if not (np.isfinite(x).all() and np.isfinite(x2).all()):
        raise ValueError("kernel inputs must be finite")
    omega = _coordinate_weights(theta, projection, x.shape[0])
    d = float(omega @ (x - x2) ** 2)
    return float(np.exp(-d))


def _corr_matrix(xs: np.ndarray, omega: np.ndarray) -> np.ndarray:
    s = xs * np.sqrt(omega)
    sq = (s**2).sum(axis=1)
    d = sq[:, None] + sq[None, :] - 2.0 * (s @ s.T)
    np.maximum(d, 0.0, out=d)
    return np.exp(-d)


def _corr_vector(xs: np.ndarray, xq: np.ndarray, omega: np.ndarray) -> np.ndarray:
    root = np.sqrt(omega)
    s = xs * root
    q = xq * root
    d = ((s - q) ** 2).sum(axis=1)
    return np.exp(-d)


def _gls_stats(r: np.ndarray, y: np.ndarray, nugget: float):
    """Cholesky factor, GLS mean, process variance and log-likelihood."""
    n = len(y)
    rn = r + nugget * np.eye(n)
    cho = cho_factor(rn, lower=True)
    ones = np.ones(n)
    r_inv_ones = cho_solve(cho, ones)
    ones_r_ones = float(ones @ r_inv_ones)
    beta = float(r_inv_ones @ y / ones_r_ones)
    resid = y - beta
    r_inv_resid = cho_solve(cho, resid)
    sigma2 = float(resid @ r_inv_resid / n)
    log_det = 2.0 * float(np.log(np.diag(cho[0])).sum())
    if sigma2 <= 0:
        sigma2 = 0.0
        ll = np.inf  # perfectly explained; any theta is as good
    else:
        ll = -n * np.log(sigma2) - log_det
    return cho, beta, sigma2, r_inv_resid, r_inv_ones, ones_r_ones, ll


def _dedupe(x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Collapse duplicate rows, keeping the best (largest) response."""
    best: dict[bytes, int] = {}
    for i in range(x.shape[0]):
        key = x[i].tobytes()
        if key not in best or y[i] > y[best[key]]:
            best[key] = i
    if len(best) == x.shape[0]:
        return x, y
    keep = sorted(best.values())
    logger.warning("deduplicated %d duplicate training rows", x.shape[0] - len(keep))
    return x[keep], y[keep]


def fit(
    x: np.ndarray,
    y: np.ndarray,
    h: int = 3,
    bounds: tuple[float, float] = THETA_LOG10_BOUNDS,
    nugget: float = DEFAULT_NUGGET,
    use_pls: bool = True,
    starts: int = 5,
    rounds: int = 3,
    grid_points: int = 20,
) -> KplsModel:
    """Fit the surrogate by maximum likelihood over the decay rates.

    Inputs are centered per column (no variance scaling).  Duplicate rows are
    collapsed first.  The likelihood search is a deterministic multi-start
    coordinate descent over ``log10 theta`` within ``bounds``: each start runs
    ``rounds`` sweeps of ``grid_points``-point line searches, with the search
    bracket shrinking around the best value after every sweep.  On a
    factorization failure the nugget escalates tenfold up to 1e-6.
    ``use_pls=False`` skips the projection (identity directions, one decay
    rate per input coordinate).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim != 2 or x.shape[0] != y.shape[0]:
        raise ValueError(f"bad training shapes {x.shape} / {y.shape}")
    x, y = _dedupe(x, y)
    n, m = x.shape
    if n < 2:
        raise InsufficientDataError(f"need >= 2 distinct training points, have {n}")

    x_mean = x.mean(axis=0)
    xc = x - x_mean
    if use_pls:
        projection = pls_directions(x, y, h)
    else:
        # identity directions: plain anisotropic form, one decay per coordinate
        projection = PlsProjection(np.eye(m), m, x_mean, np.ones(m), float(y.mean()), 1.0)
    h_eff = projection.h

    if np.ptp(y) == 0.0:
        # constant response: degenerate zero-variance field
        theta = np.full(h_eff, 10.0 ** np.mean(bounds))
        omega = _coordinate_weights(theta, projection, m)
        return _assemble(xc, y, theta, projection, omega, nugget)

    lo, hi = bounds

    def loglike(log_theta: np.ndarray) -> float:
        omega = _coordinate_weights(10.0**log_theta, projection, m)
        r = _corr_matrix(xc, omega)
        try:
            return _gls_stats(r, y, nugget)[-1]
        except np.linalg.LinAlgError:
            return -np.inf

    start_points = [np.full(h_eff, v) for v in np.linspace(lo + 0.5, hi - 0.5, starts)]
    best_lt, best_ll = None, -np.inf
    for start in start_points:
        lt = start.copy()
        ll = loglike(lt)
        half_width = (hi - lo) / 2.0
        for _ in range(rounds):
            for k in range(h_eff):
                grid = np.linspace(
                    max(lo, lt[k] - half_width), min(hi, lt[k] + half_width), grid_points
                )
                values = []
                for v in grid:
                    lt[k] = v
                    values.append(loglike(lt))
                j = int(np.argmax(values))
                lt[k] = grid[j]
                ll = values[j]
            half_width /= 4.0
        if ll > best_ll:
            best_ll, best_lt = ll, lt.copy()

    if best_lt is None or not np.isfinite(best_ll):
        if np.isposinf(best_ll):  # sigma2 == 0 at optimum: accept it
            pass
        else:
            raise FitError("likelihood search failed for every candidate")
    theta = 10.0**best_lt
    omega = _coordinate_weights(theta, projection, m)
    level = nugget
    while True:
        try:
            return _assemble(xc, y, theta, projection, omega, level)
        except np.linalg.LinAlgError:
            level *= 10.0
            if level > MAX_NUGGET:
                raise FitError(
                    f"correlation matrix not positive definite up to nugget {MAX_NUGGET}"
                )
            logger.warning("factorization failed, escalating nugget to %g", level)


def _assemble(
    xc: np.ndarray,
    y: np.ndarray,
    theta: np.ndarray,
    projection: PlsProjection,
    omega: np.ndarray,
    nugget: float,
) -> KplsModel:
    r = _corr_matrix(xc, omega)
    cho, beta, sigma2, alpha, r_inv_ones, ones_r_ones, _ = _gls_stats(r, y, nugget)
    return KplsModel(
        x=xc, y=y, theta=np.atleast_1d(theta), projection=projection, beta=beta,
        sigma2=sigma2, nugget=nugget, cho=cho, alpha=alpha,
        r_inv_ones=r_inv_ones, ones_r_ones=ones_r_ones,
    )


def predict(model: KplsModel, x: np.ndarray) -> Prediction:
    """Mean and variance of the fitted process at a query point."""
    x = np.asarray(x, dtype=float)
    if x.shape != (model.m,):
        raise ValueError(f"query shape {x.shape} != ({model.m},)")
    omega = _coordinate_weights(model.theta, model.projection, model.m)
    r = _corr_vector(model.x, x - model.projection.x_mean, omega)
    mean = model.beta + float(r @ model.alpha)
    r_inv_r = cho_solve(model.cho, r)
    u = 1.0 - float(model.r_inv_ones @ r)
    variance = model.sigma2 * (1.0 - float(r @ r_inv_r) + u * u / model.ones_r_ones)
    return Prediction(mean=mean, variance=max(variance, 0.0))


def model_dump(model: KplsModel) -> dict:
    """JSON-ready summary: decay rates, mean/variance, nugget, data hash."""
    digest = hashlib.sha256()
    digest.update(model.x.tobytes())
    digest.update(model.y.tobytes())
    kernel_form = (
        "projected per-component theta" if model.projection.w.shape != (model.m, model.m)
        or not np.allclose(model.projection.w, np.eye(model.m))
        else "plain per-coordinate theta"
    )
    return {
        "n": model.n,
        "m": model.m,
        "h": model.projection.h,
        "theta": [float(t) for t in model.theta],
        "beta": model.beta,
        "sigma2": model.sigma2,
        "nugget": model.nugget,
        "kernel_form": kernel_form,
        "training_hash": digest.hexdigest(),
    }
