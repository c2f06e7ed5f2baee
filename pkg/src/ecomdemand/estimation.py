"""Maximum-likelihood estimation of the three choice levels.

Provides a generic multinomial-logit log-likelihood with analytic gradient
and Hessian, a monotone gradient-ascent fitter (Barzilai-Borwein step with
Armijo backtracking on internally standardized covariates), and the
level-specific designs:

  level 1  delivery option  - effects-coded attribute part-worths + ln(fee+1)
  level 2  order value      - logsum carrier, interval penalty, storage cost
  level 3  total value      - logsum carrier + quadratic need expanded to
                              linear-in-parameters covariates (hhs*tv, tv^2)

Levels are fitted bottom-up; each level's fitted coefficients are frozen
before computing the logsum covariates of the level above.
"""

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import EstimationError, InvalidInputError
from .model import (
    ChoiceModelParams,
    DATE_LEVELS,
    Scenario,
    ScenarioTables,
    SLOT_LEVELS,
    SPEED_LEVELS,
    TIME_LEVELS,
)

_CHUNK = 4096


# ---------------------------------------------------------------------------
# Datasets


class DenseChoiceDataset:
    """Observations with identical alternative counts: X is (N, J, K)."""

    def __init__(self, X, chosen, names: Sequence[str]):
        self.X = np.asarray(X, dtype=np.float64)
        self.chosen = np.asarray(chosen, dtype=np.int64)
        self.names = list(names)
        if self.X.ndim != 3:
            raise InvalidInputError("X must be (n_obs, n_alts, n_covariates)")
        n, j, k = self.X.shape
        if j < 2:
            raise InvalidInputError("each observation needs >= 2 alternatives")
        if len(self.names) != k:
            raise InvalidInputError(f"{len(self.names)} names for {k} covariates")
        if self.chosen.shape != (n,):
            raise InvalidInputError("chosen must have one entry per observation")
        if self.chosen.min() < 0 or self.chosen.max() >= j:
            raise InvalidInputError("chosen index outside the alternative set")
        if not np.all(np.isfinite(self.X)):
            raise InvalidInputError("covariates contain non-finite values")

    @property
    def n_obs(self) -> int:
        return self.X.shape[0]

    def _probs(self, V):
        m = V.max(axis=1, keepdims=True)
        E = np.exp(V - m)
        denom = E.sum(axis=1, keepdims=True)
        ls = (m + np.log(denom))[:, 0]
        return E / denom, ls

    def loglik(self, beta) -> float:
        ll = 0.0
        for lo in range(0, self.n_obs, _CHUNK):
            X = self.X[lo:lo + _CHUNK]
            ch = self.chosen[lo:lo + _CHUNK]
            V = X @ beta
            _, ls = self._probs(V)
            ll += float(np.sum(V[np.arange(len(ch)), ch] - ls))
        return ll

    def loglik_grad(self, beta) -> Tuple[float, np.ndarray]:
        ll = 0.0
        grad = np.zeros(len(self.names))
        for lo in range(0, self.n_obs, _CHUNK):
            X = self.X[lo:lo + _CHUNK]
            ch = self.chosen[lo:lo + _CHUNK]
            V = X @ beta
            P, ls = self._probs(V)
            rows = np.arange(len(ch))
            ll += float(np.sum(V[rows, ch] - ls))
            grad += X[rows, ch].sum(axis=0) - np.einsum("nj,njk->k", P, X)
        return ll, grad

    def hessian(self, beta) -> np.ndarray:
        k = len(self.names)
        H = np.zeros((k, k))
        for lo in range(0, self.n_obs, _CHUNK):
            X = self.X[lo:lo + _CHUNK]
            V = X @ beta
            P, _ = self._probs(V)
            xb = np.einsum("nj,njk->nk", P, X)
            H -= np.einsum("nj,njk,njl->kl", P, X, X) - np.einsum(
                "nk,nl->kl", xb, xb)
        return H

    def within_ranges(self) -> np.ndarray:
        return (self.X.max(axis=1) - self.X.min(axis=1)).max(axis=0)

    def scales(self) -> np.ndarray:
        dev = self.X - self.X.mean(axis=1, keepdims=True)
        return np.sqrt(np.mean(dev * dev, axis=(0, 1)))


class GroupedChoiceDataset:
    """Observations sharing identical alternative matrices, grouped.

    Each group g carries one (J_g, K) covariate matrix and the choice
    counts per alternative among its N_g observations.  Ragged datasets
    degrade to one group per observation.
    """

    def __init__(self, groups: List[Tuple[np.ndarray, np.ndarray]],
                 names: Sequence[str]):
        self.names = list(names)
        self.groups = []
        for X, counts in groups:
            X = np.asarray(X, dtype=np.float64)
            counts = np.asarray(counts, dtype=np.float64)
            if X.ndim != 2 or X.shape[1] != len(self.names):
                raise InvalidInputError("group matrix must be (n_alts, n_covariates)")
            if X.shape[0] < 2:
                raise InvalidInputError("each observation needs >= 2 alternatives")
            if counts.shape != (X.shape[0],):
                raise InvalidInputError("counts must align with alternatives")
            if not np.all(np.isfinite(X)):
                raise InvalidInputError("covariates contain non-finite values")
            self.groups.append((X, counts, float(counts.sum())))

    @property
    def n_obs(self) -> int:
        return int(round(sum(n for _, _, n in self.groups)))

    def loglik(self, beta) -> float:
        ll = 0.0
        for X, counts, n in self.groups:
            V = X @ beta
            m = V.max()
            ls = m + math.log(np.sum(np.exp(V - m)))
            ll += float(counts @ V) - n * ls
        return ll

    def loglik_grad(self, beta) -> Tuple[float, np.ndarray]:
        ll = 0.0
        grad = np.zeros(len(self.names))
        for X, counts, n in self.groups:
            V = X @ beta
            m = V.max()
            E = np.exp(V - m)
            denom = E.sum()
            ls = m + math.log(denom)
            p = E / denom
            ll += float(counts @ V) - n * ls
            grad += counts @ X - n * (p @ X)
        return ll, grad

    def hessian(self, beta) -> np.ndarray:
        k = len(self.names)
        H = np.zeros((k, k))
        for X, _, n in self.groups:
            V = X @ beta
            m = V.max()
            E = np.exp(V - m)
            p = E / E.sum()
            xb = p @ X
            H -= n * ((X.T * p) @ X - np.outer(xb, xb))
        return H

    def within_ranges(self) -> np.ndarray:
        r = np.zeros(len(self.names))
        for X, _, _ in self.groups:
            r = np.maximum(r, X.max(axis=0) - X.min(axis=0))
        return r

    def scales(self) -> np.ndarray:
        acc = np.zeros(len(self.names))
        total = 0.0
        for X, _, n in self.groups:
            dev = X - X.mean(axis=0, keepdims=True)
            acc += n * np.mean(dev * dev, axis=0)
            total += n
        return np.sqrt(acc / total)


def mnl_loglik_and_gradient(dataset, beta) -> Tuple[float, np.ndarray]:
    """Total log-likelihood sum(v_chosen - logsum) and its analytic gradient."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (len(dataset.names),):
        raise InvalidInputError(
            f"coefficient vector length {beta.size} != {len(dataset.names)} covariates")
    if not np.all(np.isfinite(beta)):
        raise InvalidInputError("coefficients must be finite")
    return dataset.loglik_grad(beta)


def mnl_hessian(dataset, beta) -> np.ndarray:
    beta = np.asarray(beta, dtype=np.float64)
    return dataset.hessian(beta)


# ---------------------------------------------------------------------------
# Fitting


@dataclass
class MnlFit:
    names: List[str]
    beta: np.ndarray
    se: np.ndarray
    cov: np.ndarray
    loglik: float
    iterations: int
    converged: bool
    grad_norm: float
    ll_path: List[float] = field(repr=False, default_factory=list)
    message: str = ""

    def coef(self, name: str) -> Tuple[float, float]:
        i = self.names.index(name)
        return float(self.beta[i]), float(self.se[i])


def fit_mnl(dataset, start: Optional[np.ndarray] = None, gtol: float = 1e-6,
            max_iter: int = 1000) -> MnlFit:
    """Maximize the MNL log-likelihood by monotone gradient ascent.

    Covariates are standardized internally by their within-observation RMS
    deviation (a pure reparameterization: choice probabilities are
    invariant), the mean log-likelihood is ascended with a
    Barzilai-Borwein trial step and Armijo backtracking, and convergence
    is declared when the mean-gradient norm in the standardized space
    drops below ``gtol``.  Coefficients, standard errors and the reported
    log-likelihood are mapped back to the original covariate scale.
    """
    names = dataset.names
    k = len(names)
    n = dataset.n_obs

    ranges = dataset.within_ranges()
    dead = [names[i] for i in range(k) if ranges[i] == 0.0]
    if dead:
        raise EstimationError(
            "unidentifiable coefficients (covariate never varies within an "
            f"observation, information matrix singular): {dead}")

    s = dataset.scales()

    def ll_orig(beta_std):
        return dataset.loglik(beta_std / s)

    def ll_grad_std(beta_std):
        ll, g = dataset.loglik_grad(beta_std / s)
        return ll / n, (g / s) / n

    beta = (np.asarray(start, dtype=np.float64) * s if start is not None
            else np.zeros(k))
    ll_mean, g = ll_grad_std(beta)
    ll_path = [ll_mean * n]
    prev_beta = prev_g = None
    converged = False
    iterations = 0
    message = ""

    for iterations in range(1, max_iter + 1):
        gnorm = float(np.linalg.norm(g))
        if gnorm < gtol:
            converged = True
            iterations -= 1
            break
        if prev_beta is not None:
            dx = beta - prev_beta
            dy = prev_g - g
            curv = float(dx @ dy)
            t = float(dx @ dx) / curv if curv > 0 else 1.0
        else:
            t = 1.0 / max(1.0, gnorm)
        accepted = False
        for _ in range(60):
            trial = beta + t * g
            ll_trial = ll_orig(trial) / n
            if ll_trial >= ll_mean + 1e-4 * t * gnorm * gnorm:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            message = ("line search stalled at floating-point resolution; "
                       f"mean-gradient norm {gnorm:.2e}")
            break
        prev_beta, prev_g = beta, g
        beta = trial
        ll_mean, g = ll_grad_std(beta)
        ll_path.append(ll_mean * n)
    else:
        message = f"no convergence in {max_iter} iterations"

    gnorm = float(np.linalg.norm(g))
    if converged:
        message = message or f"converged: mean-gradient norm {gnorm:.2e} < {gtol}"

    beta_orig = beta / s
    H = dataset.hessian(beta_orig)
    info = -H
    try:
        cov = np.linalg.inv(info)
        eigs = np.linalg.eigvalsh(info)
        if eigs.min() <= 0 or eigs.max() / eigs.min() > 1e12:
            raise np.linalg.LinAlgError
    except np.linalg.LinAlgError:
        cov = np.linalg.pinv(info)
        message += "; observed information near-singular, SEs use pseudo-inverse"
    se = np.sqrt(np.maximum(np.diag(cov), 0.0))

    return MnlFit(
        names=list(names), beta=beta_orig, se=se, cov=cov,
        loglik=ll_path[-1], iterations=iterations, converged=converged,
        grad_norm=gnorm, ll_path=ll_path, message=message,
    )


# ---------------------------------------------------------------------------
# Level 1: delivery-option choice (conjoint-style data)

_ATTRS = (
    ("speed", SPEED_LEVELS),
    ("slot", SLOT_LEVELS),
    ("time", TIME_LEVELS),
    ("date", DATE_LEVELS),
)


@dataclass
class OptionChoiceData:
    """Raw delivery-option choice observations.

    Attribute arrays are (n_obs, n_alts) level indices into the canonical
    level tuples; ``fee`` is the per-alternative fee in US$.
    """

    speed: np.ndarray
    slot: np.ndarray
    time: np.ndarray
    date: np.ndarray
    fee: np.ndarray
    chosen: np.ndarray

    def __post_init__(self):
        shape = self.fee.shape
        for name, levels in _ATTRS:
            a = getattr(self, name)
            if a.shape != shape:
                raise InvalidInputError(f"{name} shape {a.shape} != fee {shape}")
            if a.min() < 0 or a.max() >= len(levels):
                raise InvalidInputError(f"{name} contains out-of-range level index")
        if self.chosen.shape != (shape[0],):
            raise InvalidInputError("chosen must have one entry per observation")

    @property
    def n_obs(self) -> int:
        return self.fee.shape[0]


def _effects_names() -> List[str]:
    names = []
    for attr, levels in _ATTRS:
        names.extend(f"{attr}={lvl}" for lvl in levels[:-1])
    names.append("ln_fee")
    return names


def option_design(data: OptionChoiceData) -> DenseChoiceDataset:
    """Effects-coded design: the last level of each attribute is the
    negative base, so fitted coefficients are sum-to-zero part-worths."""
    n, j = data.fee.shape
    cols = []
    for attr, levels in _ATTRS:
        idx = getattr(data, attr)
        m = len(levels)
        for l in range(m - 1):
            col = np.where(idx == l, 1.0, np.where(idx == m - 1, -1.0, 0.0))
            cols.append(col)
    cols.append(np.log(data.fee + 1.0))
    X = np.stack(cols, axis=-1)
    return DenseChoiceDataset(X, data.chosen, _effects_names())


def _center(d: Dict[str, float]) -> Dict[str, float]:
    m = sum(d.values()) / len(d)
    return {k: v - m for k, v in d.items()}


def simulate_option_choice_data(n: int, rng: np.random.Generator,
                                params: Optional[ChoiceModelParams] = None,
                                n_alts: int = 3, fee_max: float = 25.0,
                                ) -> OptionChoiceData:
    """Conjoint-style draws: attribute levels and fees uniform at random,
    choices sampled from the option-utility model."""
    p = params if params is not None else ChoiceModelParams()
    shape = (n, n_alts)
    idx = {
        name: rng.integers(0, len(levels), size=shape) for name, levels in _ATTRS
    }
    fee = rng.uniform(0.0, fee_max, size=shape)
    V = p.beta_fee * np.log(fee + 1.0)
    for (name, levels), d in zip(_ATTRS, (p.beta_speed, p.beta_slot,
                                          p.beta_time, p.beta_date)):
        worth = np.array([d[lvl] for lvl in levels])
        V = V + worth[idx[name]]
    chosen = np.argmax(V + rng.gumbel(size=shape), axis=1)
    return OptionChoiceData(speed=idx["speed"], slot=idx["slot"],
                            time=idx["time"], date=idx["date"],
                            fee=fee, chosen=chosen)


@dataclass
class OptionLevelFit:
    fit: MnlFit
    part_worths: Dict[str, Dict[str, Tuple[float, float]]]
    beta_fee: Tuple[float, float]

    def params_dicts(self) -> Dict[str, Dict[str, float]]:
        return {
            f"beta_{attr}": {lvl: vw[0] for lvl, vw in worths.items()}
            for attr, worths in self.part_worths.items()
        }


def fit_option_level(data: OptionChoiceData, gtol: float = 1e-6,
                     max_iter: int = 1000) -> OptionLevelFit:
    """Fit level 1 and map effects-coded coefficients to part-worths.

    The part-worth of each attribute's last level is minus the sum of the
    others (sum-to-zero identification); its standard error follows from
    the coefficient covariance block.
    """
    fit = fit_mnl(option_design(data), gtol=gtol, max_iter=max_iter)
    part_worths = {}
    pos = 0
    for attr, levels in _ATTRS:
        m = len(levels)
        block = slice(pos, pos + m - 1)
        worths = {}
        for l, lvl in enumerate(levels[:-1]):
            worths[lvl] = (float(fit.beta[pos + l]), float(fit.se[pos + l]))
        cov_block = fit.cov[block, block]
        last_val = -float(fit.beta[block].sum())
        last_se = float(np.sqrt(max(cov_block.sum(), 0.0)))
        worths[levels[-1]] = (last_val, last_se)
        part_worths[attr] = worths
        pos += m - 1
    return OptionLevelFit(fit=fit, part_worths=part_worths,
                          beta_fee=fit.coef("ln_fee"))


# ---------------------------------------------------------------------------
# Level 2: order value given total value


@dataclass
class OrderValueChoiceData:
    """Order-value choices: weekly total value and chosen grid index."""

    tv: np.ndarray
    chosen_idx: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.tv.shape[0]


ORDER_LEVEL_NAMES = ("beta_logsumdo", "beta_interval", "beta_storage")


def order_value_design(data: OrderValueChoiceData, scenario: Scenario,
                       l1_per_ov: np.ndarray) -> GroupedChoiceDataset:
    """Covariates per alternative ov: (tv/ov)*l1(ov), (ov/tv)^2, ov.

    Observations sharing a total value share an alternative matrix, so the
    dataset is grouped by tv.
    """
    ov = scenario.ov_grid.astype(np.float64)
    nov = ov.size
    groups = []
    for tv in np.unique(data.tv):
        rows = data.chosen_idx[data.tv == tv]
        counts = np.bincount(rows, minlength=nov).astype(np.float64)
        tvf = float(tv)
        X = np.column_stack([
            (tvf / ov) * l1_per_ov,
            (ov / tvf) ** 2,
            ov,
        ])
        groups.append((X, counts))
    return GroupedChoiceDataset(groups, ORDER_LEVEL_NAMES)


def simulate_order_value_data(n: int, scenario: Scenario,
                              rng: np.random.Generator,
                              params: Optional[ChoiceModelParams] = None,
                              tv_range: Tuple[int, int] = (20, 300),
                              ) -> OrderValueChoiceData:
    tables = ScenarioTables(scenario, params)
    tv_lo = int(scenario.tv_grid[0])
    tv = rng.integers(tv_range[0], tv_range[1] + 1, size=n)
    chosen = np.empty(n, dtype=np.int64)
    for tv_val in np.unique(tv):
        rows = np.nonzero(tv == tv_val)[0]
        cum = tables.cond_cum(int(tv_val) - tv_lo)
        chosen[rows] = np.searchsorted(cum, rng.random(rows.size), side="right")
    np.clip(chosen, 0, scenario.ov_grid.size - 1, out=chosen)
    return OrderValueChoiceData(tv=tv, chosen_idx=chosen)


# ---------------------------------------------------------------------------
# Level 3: total value


@dataclass
class TotalValueChoiceData:
    """Total-value choices: household size and chosen grid index."""

    hhs: np.ndarray
    chosen_idx: np.ndarray

    @property
    def n_obs(self) -> int:
        return self.hhs.shape[0]


TOTAL_LEVEL_NAMES = ("beta_logsumov", "hhs_x_tv", "tv_squared")


def total_value_design(data: TotalValueChoiceData, scenario: Scenario,
                       ov_logsum: np.ndarray) -> GroupedChoiceDataset:
    """Covariates per alternative tv: order-value logsum, hhs*tv, tv^2.

    The quadratic need gap beta_hhs*(alpha*hhs - tv)^2 expands into these
    linear-in-parameters terms (the hhs^2 term is constant within an
    observation and drops); alpha and beta_hhs are recovered downstream
    from the fitted coefficients.
    """
    tv = scenario.tv_grid.astype(np.float64)
    ntv = tv.size
    groups = []
    for size in np.unique(data.hhs):
        rows = data.chosen_idx[data.hhs == size]
        counts = np.bincount(rows, minlength=ntv).astype(np.float64)
        X = np.column_stack([ov_logsum, float(size) * tv, tv * tv])
        groups.append((X, counts))
    return GroupedChoiceDataset(groups, TOTAL_LEVEL_NAMES)


def simulate_total_value_data(n: int, scenario: Scenario,
                              rng: np.random.Generator,
                              params: Optional[ChoiceModelParams] = None,
                              size_masses: Optional[Dict[int, float]] = None,
                              ) -> TotalValueChoiceData:
    from .defaults import DEFAULT_POPULATION_SPEC

    masses = size_masses or DEFAULT_POPULATION_SPEC["masses"]
    sizes = np.array(sorted(masses), dtype=np.int64)
    probs = np.array([masses[int(s)] for s in sizes])
    probs = probs / probs.sum()
    tables = ScenarioTables(scenario, params)
    hhs = rng.choice(sizes, size=n, p=probs)
    chosen = np.empty(n, dtype=np.int64)
    for size in np.unique(hhs):
        rows = np.nonzero(hhs == size)[0]
        p_tv, _ = tables.tv_choice(int(size))
        cum = np.cumsum(p_tv)
        chosen[rows] = np.searchsorted(cum, rng.random(rows.size), side="right")
    np.clip(chosen, 0, scenario.tv_grid.size - 1, out=chosen)
    return TotalValueChoiceData(hhs=hhs, chosen_idx=chosen)


@dataclass
class TotalLevelFit:
    fit: MnlFit
    beta_logsumov: Tuple[float, float]
    alpha: Tuple[float, float]
    beta_hhs: Tuple[float, float]


def fit_total_level(data: TotalValueChoiceData, scenario: Scenario,
                    ov_logsum: np.ndarray, gtol: float = 1e-6,
                    max_iter: int = 1000) -> TotalLevelFit:
    """Fit level 3 and recover (beta_logsumov, alpha, beta_hhs).

    With coefficients (b1, b2, b3) on (logsum, hhs*tv, tv^2):
    beta_logsumov = b1, beta_hhs = b3, alpha = -b2 / (2*b3); the alpha
    standard error comes from the delta method on (b2, b3).
    """
    fit = fit_mnl(total_value_design(data, scenario, ov_logsum),
                  gtol=gtol, max_iter=max_iter)
    b1, b2, b3 = fit.beta
    alpha = -b2 / (2.0 * b3)
    grad = np.array([-1.0 / (2.0 * b3), b2 / (2.0 * b3 * b3)])
    cov23 = fit.cov[1:, 1:]
    alpha_se = float(np.sqrt(max(grad @ cov23 @ grad, 0.0)))
    return TotalLevelFit(
        fit=fit,
        beta_logsumov=fit.coef("beta_logsumov"),
        alpha=(float(alpha), alpha_se),
        beta_hhs=fit.coef("tv_squared"),
    )


# ---------------------------------------------------------------------------
# Sequential estimation


@dataclass
class SequentialEstimate:
    params: ChoiceModelParams
    option_level: OptionLevelFit
    order_level: MnlFit
    total_level: TotalLevelFit

    def report_dict(self) -> dict:
        def triple(fit: MnlFit):
            return {
                "coefficients": {
                    name: {"estimate": float(b), "se": float(s)}
                    for name, b, s in zip(fit.names, fit.beta, fit.se)
                },
                "loglik": fit.loglik,
                "iterations": fit.iterations,
                "converged": fit.converged,
            }

        report = {
            "delivery_option": triple(self.option_level.fit),
            "order_value": triple(self.order_level),
            "total_value": triple(self.total_level.fit),
        }
        report["delivery_option"]["part_worths"] = {
            attr: {lvl: {"estimate": v, "se": s}
                   for lvl, (v, s) in worths.items()}
            for attr, worths in self.option_level.part_worths.items()
        }
        report["total_value"]["derived"] = {
            "beta_logsumov": {"estimate": self.total_level.beta_logsumov[0],
                              "se": self.total_level.beta_logsumov[1]},
            "alpha": {"estimate": self.total_level.alpha[0],
                      "se": self.total_level.alpha[1]},
            "beta_hhs": {"estimate": self.total_level.beta_hhs[0],
                         "se": self.total_level.beta_hhs[1]},
        }
        return report


def fit_sequential(option_data: OptionChoiceData,
                   order_data: OrderValueChoiceData,
                   total_data: TotalValueChoiceData,
                   scenario: Scenario,
                   start: Optional[ChoiceModelParams] = None,
                   gtol: float = 1e-6, max_iter: int = 1000,
                   ) -> SequentialEstimate:
    """Bottom-up estimation of the three levels.

    Level 1 is fitted first; its coefficients are frozen to compute the
    option logsums that enter the level-2 design, and likewise level-2
    coefficients freeze the order-value logsums for level 3.
    """
    base = start if start is not None else ChoiceModelParams()

    lvl1 = fit_option_level(option_data, gtol=gtol, max_iter=max_iter)
    params = base.with_overrides({"beta_fee": lvl1.beta_fee[0]})
    for attr_field, worths in lvl1.params_dicts().items():
        params = params.with_overrides({attr_field: worths})

    tables1 = ScenarioTables(scenario, params)
    lvl2 = fit_mnl(order_value_design(order_data, scenario, tables1.l1_per_ov),
                   gtol=gtol, max_iter=max_iter)
    params = params.with_overrides(dict(zip(ORDER_LEVEL_NAMES, map(float, lvl2.beta))))

    tables2 = ScenarioTables(scenario, params)
    lvl3 = fit_total_level(total_data, scenario, tables2.ov_logsum,
                           gtol=gtol, max_iter=max_iter)
    params = params.with_overrides({
        "beta_logsumov": lvl3.beta_logsumov[0],
        "alpha": lvl3.alpha[0],
        "beta_hhs": lvl3.beta_hhs[0],
    })

    return SequentialEstimate(params=params, option_level=lvl1,
                              order_level=lvl2, total_level=lvl3)


# ---------------------------------------------------------------------------
# CSV interfaces


def write_option_data_csv(data: OptionChoiceData, path, header_comment=None):
    with Path(path).open("w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["obs_id", "alt_id", "chosen", "speed", "slot", "time",
                    "date", "fee"])
        for i in range(data.n_obs):
            for j in range(data.fee.shape[1]):
                w.writerow([
                    i, j, int(data.chosen[i] == j),
                    SPEED_LEVELS[data.speed[i, j]], SLOT_LEVELS[data.slot[i, j]],
                    TIME_LEVELS[data.time[i, j]], DATE_LEVELS[data.date[i, j]],
                    repr(float(data.fee[i, j])),
                ])


def read_option_data_csv(path) -> OptionChoiceData:
    rows = _read_rows(path, ["obs_id", "alt_id", "chosen", "speed", "slot",
                             "time", "date", "fee"])
    by_obs: Dict[str, list] = {}
    for r in rows:
        by_obs.setdefault(r["obs_id"], []).append(r)
    n = len(by_obs)
    j = max(len(v) for v in by_obs.values())
    if j < 2 or min(len(v) for v in by_obs.values()) != j:
        raise InvalidInputError(f"{path}: observations must share >= 2 alternatives")
    arrays = {name: np.empty((n, j), dtype=np.int64) for name, _ in _ATTRS}
    fee = np.empty((n, j))
    chosen = np.full(n, -1, dtype=np.int64)
    level_index = {name: {lvl: i for i, lvl in enumerate(levels)}
                   for name, levels in _ATTRS}
    for i, obs in enumerate(by_obs.values()):
        for alt, r in enumerate(obs):
            for name, _ in _ATTRS:
                try:
                    arrays[name][i, alt] = level_index[name][r[name]]
                except KeyError:
                    raise InvalidInputError(
                        f"{path}: obs {r['obs_id']}: bad {name} level {r[name]!r}"
                    ) from None
            fee[i, alt] = float(r["fee"])
            if r["chosen"] not in ("0", "1"):
                raise InvalidInputError(f"{path}: chosen must be 0/1")
            if r["chosen"] == "1":
                chosen[i] = alt
    if np.any(chosen < 0):
        raise InvalidInputError(f"{path}: some observations have no chosen row")
    return OptionChoiceData(speed=arrays["speed"], slot=arrays["slot"],
                            time=arrays["time"], date=arrays["date"],
                            fee=fee, chosen=chosen)


def write_order_data_csv(data: OrderValueChoiceData, scenario: Scenario,
                         path, header_comment=None):
    with Path(path).open("w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["obs_id", "tv", "chosen_ov"])
        for i in range(data.n_obs):
            w.writerow([i, int(data.tv[i]),
                        int(scenario.ov_grid[data.chosen_idx[i]])])


def read_order_data_csv(path, scenario: Scenario) -> OrderValueChoiceData:
    rows = _read_rows(path, ["obs_id", "tv", "chosen_ov"])
    ov_lo = int(scenario.ov_grid[0])
    tv = np.array([int(r["tv"]) for r in rows], dtype=np.int64)
    chosen = np.array([int(r["chosen_ov"]) - ov_lo for r in rows], dtype=np.int64)
    if chosen.min() < 0 or chosen.max() >= scenario.ov_grid.size:
        raise InvalidInputError(f"{path}: chosen_ov outside the order-value grid")
    return OrderValueChoiceData(tv=tv, chosen_idx=chosen)


def write_total_data_csv(data: TotalValueChoiceData, scenario: Scenario,
                         path, header_comment=None):
    with Path(path).open("w", newline="") as f:
        if header_comment:
            f.write(f"# {header_comment}\n")
        w = csv.writer(f)
        w.writerow(["obs_id", "hhs", "chosen_tv"])
        for i in range(data.n_obs):
            w.writerow([i, int(data.hhs[i]),
                        int(scenario.tv_grid[data.chosen_idx[i]])])


def read_total_data_csv(path, scenario: Scenario) -> TotalValueChoiceData:
    rows = _read_rows(path, ["obs_id", "hhs", "chosen_tv"])
    tv_lo = int(scenario.tv_grid[0])
    hhs = np.array([int(r["hhs"]) for r in rows], dtype=np.int64)
    chosen = np.array([int(r["chosen_tv"]) - tv_lo for r in rows], dtype=np.int64)
    if chosen.min() < 0 or chosen.max() >= scenario.tv_grid.size:
        raise InvalidInputError(f"{path}: chosen_tv outside the total-value grid")
    return TotalValueChoiceData(hhs=hhs, chosen_idx=chosen)


def read_long_csv(path) -> "DenseChoiceDataset | GroupedChoiceDataset":
    """Generic numeric long-format dataset: obs_id,alt_id,chosen,<covariates>."""
    with Path(path).open(newline="") as f:
        lines = [l for l in f if not l.startswith("#")]
    reader = csv.DictReader(lines)
    fixed = ("obs_id", "alt_id", "chosen")
    names = [c for c in reader.fieldnames if c not in fixed]
    if not names:
        raise InvalidInputError(f"{path}: no covariate columns")
    by_obs: Dict[str, list] = {}
    for r in reader:
        by_obs.setdefault(r["obs_id"], []).append(r)
    mats, chosens = [], []
    for obs_id, obs in by_obs.items():
        X = np.array([[float(r[c]) for c in names] for r in obs])
        ch = [i for i, r in enumerate(obs) if r["chosen"] == "1"]
        if len(ch) != 1:
            raise InvalidInputError(
                f"{path}: obs {obs_id}: exactly one chosen row required")
        mats.append(X)
        chosens.append(ch[0])
    sizes = {m.shape[0] for m in mats}
    if len(sizes) == 1:
        return DenseChoiceDataset(np.stack(mats), np.array(chosens), names)
    groups = []
    for X, ch in zip(mats, chosens):
        counts = np.zeros(X.shape[0])
        counts[ch] = 1.0
        groups.append((X, counts))
    return GroupedChoiceDataset(groups, names)


def _read_rows(path, required) -> List[dict]:
    with Path(path).open(newline="") as f:
        lines = [l for l in f if not l.startswith("#")]
    reader = csv.DictReader(lines)
    missing = [c for c in required if c not in (reader.fieldnames or [])]
    if missing:
        raise InvalidInputError(f"{path}: missing columns {missing}")
    rows = list(reader)
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    return rows
