"""Turn a :class:`RunConfig` into model hyperparameters."""

from __future__ import annotations

from typing import Optional

import numpy as np

from . import presets
from .baseline import WindowConfig, ols_init
from .exceptions import DomainError
from .filters import DEFAULT_K
from .io import RunConfig
from .model import (
    ElementSpec,
    Heats,
    NoiseSpec,
    estimate_obs_variance_linear,
    gamma_from_half_life,
    process_noise_from_stationary,
)


def element_spec(cfg: RunConfig) -> ElementSpec:
    return ElementSpec.for_symbol(cfg.element)


def resolve_gamma(noise: dict) -> float:
    if "gamma" in noise:
        return float(noise["gamma"])
    return gamma_from_half_life(float(noise.get("half_life_heats", presets.HALF_LIFE_HEATS)))


def resolve_q(cfg: RunConfig, heats: Optional[Heats] = None) -> np.ndarray:
    nz = cfg.noise
    src = nz.get("q_source", "preset")
    if src == "literal":
        q = np.asarray(nz["q_ppm"], dtype=float) * 1e-6
        if q.size != cfg.n_scrap:
            raise DomainError(f"noise.q_ppm has {q.size} entries, expected {cfg.n_scrap}")
        return q
    if src == "ols-init":
        if heats is None:
            raise DomainError("q_source=ols-init needs heats (set heats_path)")
        window = cfg.window
        return ols_init(heats, element_spec(cfg), n_heats=int(nz.get("ols_init_heats", 5000)),
                        method=nz.get("ols_init_method", "ols"),
                        fixed_ell=float(window.get("fixed_ell", 10.0)))
    if cfg.element not in presets.MEAN_FRACTION_PPM:
        raise DomainError(f"no preset mean vector for {cfg.element}; use q_source=literal or ols-init")
    return presets.mean_fraction(cfg.element, cfg.n_scrap)


def resolve_H(cfg: RunConfig) -> float:
    nz = cfg.noise
    if "H_kg2" in nz:
        return float(nz["H_kg2"])
    el = cfg.element
    if "sd_f_steel_ppm" not in nz and el not in presets.SD_F_STEEL_PPM:
        raise DomainError(f"no preset observation variance for {el}; give noise.H_kg2 or its inputs")
    m_steel = float(nz.get("m_steel_kg", presets.M_STEEL_KG))
    sd_steel = float(nz.get("sd_f_steel_ppm", presets.SD_F_STEEL_PPM.get(el, 0.0))) * 1e-6
    sd_hm = nz.get("sd_f_hm_ppm", presets.SD_F_HM_PPM.get(el))
    if sd_hm is None:
        return (m_steel * sd_steel) ** 2
    m_hm = float(nz.get("m_hm_kg", presets.M_HM_KG))
    return estimate_obs_variance_linear(m_steel, sd_steel, m_hm, float(sd_hm) * 1e-6)


def resolve_noise_spec(cfg: RunConfig, heats: Optional[Heats] = None, check_beta: bool = True) -> NoiseSpec:
    """Apply the parameter recipes: ``q`` source, stationary rule for ``Q``, ``H`` inputs and partition terms."""
    nz = cfg.noise
    gamma = resolve_gamma(nz)
    q = resolve_q(cfg, heats)
    if "Q_ppm2" in nz:
        Q = np.asarray(nz["Q_ppm2"], dtype=float) * 1e-12
    else:
        Q = process_noise_from_stationary(gamma, (float(nz.get("p_inf_rel_sd", presets.P_INF_REL_SD)) * q) ** 2)
    q_c = Q_c = None
    if element_spec(cfg).transfers_to_slag:
        if "q_c" in nz:
            q_c = np.asarray(nz["q_c"], dtype=float)
        elif cfg.element in presets.PARTITION_MEAN:
            q_c = np.asarray(presets.PARTITION_MEAN[cfg.element], dtype=float)
        else:
            raise DomainError(f"{cfg.element} transfers to slag; give noise.q_c")
        if "Q_c" in nz:
            Q_c = np.asarray(nz["Q_c"], dtype=float)
        else:
            rel = float(nz.get("p_c_inf_rel_sd", presets.P_C_INF_REL_SD))
            Q_c = process_noise_from_stationary(gamma, (rel * q_c) ** 2)
    return NoiseSpec(gamma, q, Q, resolve_H(cfg), q_c, Q_c, beta_sampling=check_beta)


def config_k(cfg: RunConfig):
    return cfg.noise.get("k", DEFAULT_K)


def window_config(cfg: RunConfig) -> WindowConfig:
    w = cfg.window
    return WindowConfig(
        window=int(w.get("window_heats", 2000)),
        min_rows=int(w.get("min_rows", 1)),
        fixed_ell=float(w.get("fixed_ell", 10.0)),
        stride=int(w.get("stride", 1)),
    )
