"""scikit-learn style estimators wrapping the filters and the NNLS baseline.

``X`` is a heat stream (:class:`Heats`, a list of :class:`HeatRecord` or a
DataFrame laid out like the heats CSV with fractions, not ppm); ``y`` is the
optional measured steel fraction overriding ``X``'s ``f_steel``.
``predict`` returns one-step-ahead steel-fraction predictions.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.metrics import r2_score
from sklearn.utils.validation import check_is_fitted

from . import presets
from .baseline import WindowConfig, nnls_gram, ols_init, predict_from_alpha, regression_target, windowed_nnls
from .exceptions import DomainError
from .filters import DEFAULT_K, run_filter
from .model import ElementSpec, GaussianBelief, NoiseSpec, gamma_from_half_life, process_noise_from_stationary
from .validation import check_heats


class _FilterEstimator(RegressorMixin, BaseEstimator):
    _slag = False

    def __init__(self, element="Cu", gamma=None, half_life=1000.0, q=None, Q=None, p_inf_rel_sd=0.042,
                 H=None, q_c=None, Q_c=None, p_c_inf_rel_sd=0.01, k=DEFAULT_K, a1=None, P1=None,
                 ols_init_heats=5000, store_cov=False):
        self.element = element
        self.gamma = gamma
        self.half_life = half_life
        self.q = q
        self.Q = Q
        self.p_inf_rel_sd = p_inf_rel_sd
        self.H = H
        self.q_c = q_c
        self.Q_c = Q_c
        self.p_c_inf_rel_sd = p_c_inf_rel_sd
        self.k = k
        self.a1 = a1
        self.P1 = P1
        self.ols_init_heats = ols_init_heats
        self.store_cov = store_cov

    @classmethod
    def from_noise_spec(cls, spec: NoiseSpec, element="Cu", **kwargs):
        """Estimator whose hyperparameters reproduce ``spec`` exactly."""
        return cls(element=element, gamma=spec.gamma, q=spec.q, Q=spec.Q, H=spec.H,
                   q_c=spec.q_c, Q_c=spec.Q_c, **kwargs)

    def _element(self) -> ElementSpec:
        el = ElementSpec.for_symbol(self.element) if isinstance(self.element, str) else self.element
        if el.transfers_to_slag != self._slag:
            kind = "slag-transferring" if self._slag else "non-slag"
            raise DomainError(f"{type(self).__name__} needs a {kind} element, got {el.element_id}")
        return el

    def _noise_spec(self, heats, element) -> NoiseSpec:
        if self.gamma is not None:
            gamma = float(self.gamma)
        else:
            gamma = gamma_from_half_life(self.half_life)
        if self.q is not None:
            q = np.asarray(self.q, dtype=float)
        else:
            q = ols_init(heats, element, n_heats=self.ols_init_heats, method="nnls" if self._slag else "ols")
        if self.Q is not None:
            Q = np.asarray(self.Q, dtype=float)
        else:
            Q = process_noise_from_stationary(gamma, (self.p_inf_rel_sd * q) ** 2)
        H = self.H
        if H is None:
            if element.element_id not in presets.SD_F_STEEL_PPM:
                raise DomainError(f"no default H for {element.element_id}; pass H")
            H = presets.observation_variance(element.element_id)
        q_c = Q_c = None
        if self._slag:
            if self.q_c is not None:
                q_c = np.asarray(self.q_c, dtype=float)
            elif element.element_id in presets.PARTITION_MEAN:
                q_c = np.asarray(presets.PARTITION_MEAN[element.element_id])
            else:
                raise DomainError(f"no default q_c for {element.element_id}; pass q_c")
            if self.Q_c is not None:
                Q_c = np.asarray(self.Q_c, dtype=float)
            else:
                Q_c = process_noise_from_stationary(gamma, (self.p_c_inf_rel_sd * q_c) ** 2)
        return NoiseSpec(gamma, q, Q, H, q_c, Q_c)

    def _init_belief(self, spec: NoiseSpec):
        if self.a1 is None and self.P1 is None:
            return None
        a1 = spec.q_aug if self.a1 is None else np.asarray(self.a1, dtype=float)
        P1 = np.diag(spec.Q_aug) if self.P1 is None else np.asarray(self.P1, dtype=float)
        return GaussianBelief(a1, P1)

    def fit(self, X, y=None):
        element = self._element()
        heats = check_heats(X, y, require_slag=self._slag)
        if len(heats) == 0:
            raise DomainError("cannot fit on an empty heat stream")
        spec = self._noise_spec(heats, element)
        trace = run_filter(heats, spec, element, init=self._init_belief(spec), k=self.k, store_cov=self.store_cov)
        self.noise_spec_ = spec
        self.trace_ = trace
        self.state_ = trace.final_prior
        self.n_scrap_ = heats.n_scrap
        self.coef_ = trace.final_prior.mean[: heats.n_scrap]
        return self

    def predict(self, X, y=None):
        """One-step-ahead predictions continuing from the fitted state.

        Heats with a measurement (in ``X`` or ``y``) update a copy of the
        state after being predicted; the fitted estimator is not modified.
        """
        check_is_fitted(self, "state_")
        heats = check_heats(X, y, n_scrap=self.n_scrap_, require_slag=self._slag)
        if len(heats) == 0:
            return np.zeros(0)
        trace = run_filter(heats, self.noise_spec_, self._element(), init=self.state_, k=self.k)
        return trace.predicted_f_steel

    def score(self, X, y=None, sample_weight=None):
        heats = check_heats(X, y, require_slag=self._slag)
        obs = heats.observed
        pred = self.predict(heats)
        w = None if sample_weight is None else np.asarray(sample_weight)[obs]
        return r2_score(heats.f_steel[obs], pred[obs], sample_weight=w)


class KalmanScrapEstimator(_FilterEstimator):
    """Linear Kalman filter for elements that stay in the steel (Cu, Ni)."""


class UnscentedScrapEstimator(_FilterEstimator):
    """Unscented Kalman filter on ``[alpha, c1, c2]`` for elements that partition into the slag (Cr, S)."""

    _slag = True

    def __init__(self, element="Cr", gamma=None, half_life=1000.0, q=None, Q=None, p_inf_rel_sd=0.042,
                 H=None, q_c=None, Q_c=None, p_c_inf_rel_sd=0.01, k=DEFAULT_K, a1=None, P1=None,
                 ols_init_heats=5000, store_cov=False):
        super().__init__(element, gamma, half_life, q, Q, p_inf_rel_sd, H, q_c, Q_c, p_c_inf_rel_sd, k,
                         a1, P1, ols_init_heats, store_cov)


class WindowedNNLSEstimator(RegressorMixin, BaseEstimator):
    """Sliding-window NNLS baseline.

    ``fit`` records the per-heat windowed estimates (``result_``) and keeps
    the estimate from the last ``window`` heats as ``coef_``, which
    ``predict`` applies to new heats.
    """

    def __init__(self, element="Cu", window=2000, fixed_ell=10.0, stride=1, ridge=1e-10):
        self.element = element
        self.window = window
        self.fixed_ell = fixed_ell
        self.stride = stride
        self.ridge = ridge

    def _element(self) -> ElementSpec:
        return ElementSpec.for_symbol(self.element) if isinstance(self.element, str) else self.element

    def fit(self, X, y=None):
        element = self._element()
        heats = check_heats(X, y, require_slag=element.transfers_to_slag)
        cfg = WindowConfig(window=self.window, fixed_ell=self.fixed_ell, stride=self.stride,
                           ridge=self.ridge)
        target = regression_target(heats, element, self.fixed_ell)
        ok = ~np.isnan(target)
        if not ok.any():
            raise DomainError("no observed heats to fit")
        rows = np.flatnonzero(ok)[-self.window:]
        Xw = heats.scrap_mass[rows]
        G = Xw.T @ Xw
        scale = np.diag(G).mean()
        live = np.diag(G) > 1e-12 * scale
        coef = np.zeros(heats.n_scrap)
        if live.any():
            idx = np.flatnonzero(live)
            coef[idx] = nnls_gram(G[np.ix_(idx, idx)] + self.ridge * scale * np.eye(idx.size),
                                  Xw[:, idx].T @ target[rows])
        self.coef_ = coef
        self.unidentifiable_ = ~live
        self.result_ = windowed_nnls(heats, element, cfg) if len(heats) > self.window else None
        self.n_scrap_ = heats.n_scrap
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        element = self._element()
        heats = check_heats(X, n_scrap=self.n_scrap_)
        alpha = np.broadcast_to(self.coef_, heats.scrap_mass.shape)
        return predict_from_alpha(alpha, heats, element, self.fixed_ell)
