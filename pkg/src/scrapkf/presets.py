"""Reference hyperparameters for synthetic experiments.

The mean element fractions (ppm) hold 45 scrap types.  Types 01, 02 and 45
carry reference values; the remaining entries are fixed surrogate
draws (log-uniform over a plausible range) so experiments are repeatable.
"""

import numpy as np

from .model import NoiseSpec, estimate_obs_variance_linear, gamma_from_half_life, process_noise_from_stationary

MEAN_FRACTION_PPM = {
    "Cu": [
        208.8, 900.0, 181.16, 655.35, 127.88, 335.47, 1562.55, 200.5, 511.8, 1089.36,
        1596.3, 2589.75, 513.75, 935.0, 888.31, 1653.6, 2136.04, 1459.85, 2249.65, 861.8,
        1200.45, 1689.97, 1307.64, 2394.13, 171.9, 644.2, 121.49, 509.37, 638.71, 146.7,
        723.01, 1063.05, 139.73, 246.13, 2467.41, 1737.95, 1108.02, 1771.62, 434.66, 1414.47,
        782.14, 404.51, 210.27, 259.56, 3060.99,
    ],
    "Ni": [
        227.7, 227.7, 507.09, 998.74, 455.35, 124.74, 423.23, 616.24, 562.84, 146.91,
        362.68, 105.14, 139.62, 263.14, 676.07, 283.36, 263.15, 216.67, 546.61, 177.86,
        170.1, 1436.79, 160.5, 129.67, 131.36, 313.41, 291.02, 146.97, 320.21, 331.12,
        858.54, 289.94, 218.9, 348.65, 179.18, 489.69, 442.42, 103.94, 250.8, 1005.29,
        1441.42, 276.3, 1083.6, 177.08, 1147.95,
    ],
    "Cr": [
        180.0, 900.0, 1474.0, 295.74, 543.92, 684.26, 141.43, 315.35, 725.88, 140.59,
        1017.59, 156.57, 540.08, 149.74, 571.5, 158.06, 617.98, 1063.08, 606.82, 692.27,
        170.05, 936.51, 466.67, 152.8, 213.34, 1492.89, 129.93, 707.97, 110.52, 677.17,
        536.08, 504.51, 841.58, 896.14, 1252.87, 117.51, 156.19, 435.62, 132.23, 378.04,
        920.11, 335.31, 295.42, 312.55, 1601.64,
    ],
    "S": [
        99.0, 351.0, 307.34, 148.98, 204.33, 373.32, 285.92, 75.93, 105.94, 68.97,
        104.34, 302.48, 358.55, 230.63, 153.18, 223.06, 62.82, 300.03, 148.02, 65.79,
        73.41, 107.85, 60.0, 99.59, 199.23, 310.43, 386.66, 197.72, 256.84, 327.43,
        82.06, 128.5, 79.91, 322.9, 142.94, 119.56, 213.04, 143.44, 68.67, 283.73,
        64.18, 267.19, 218.27, 77.9, 342.0,
    ],
}

HALF_LIFE_HEATS = 1000.0
P_INF_REL_SD = 0.042
PARTITION_MEAN = {"Cr": [9.7, 0.01]}
P_C_INF_REL_SD = 0.01

# typical masses and measurement spreads behind the observation variances
M_STEEL_KG = 330e3
M_HM_KG = 280e3
SD_F_STEEL_PPM = {"Cu": 12.0, "Ni": 12.0, "Cr": 4.0}
SD_F_HM_PPM = {"Cu": 5.0, "Ni": 5.0}

# surrogate hot-metal element fractions (ppm)
HOT_METAL_PPM = {"Cu": 30.0, "Ni": 40.0, "Cr": 300.0, "S": 250.0}


def mean_fraction(element: str, n_scrap: int = 45) -> np.ndarray:
    values = MEAN_FRACTION_PPM[element]
    if not 1 <= n_scrap <= len(values):
        raise ValueError(f"preset for {element} has {len(values)} scrap types")
    return np.array(values[:n_scrap]) * 1e-6


def observation_variance(element: str) -> float:
    """H in kg^2 for the linear recipe (with hot metal) or the slag recipe."""
    sd_steel = SD_F_STEEL_PPM[element] * 1e-6
    if element in SD_F_HM_PPM:
        return estimate_obs_variance_linear(M_STEEL_KG, sd_steel, M_HM_KG, SD_F_HM_PPM[element] * 1e-6)
    return (M_STEEL_KG * sd_steel) ** 2


def synthetic_noise_spec(element: str, n_scrap: int = 45, beta_sampling: bool = True) -> NoiseSpec:
    """Data-generating hyperparameters for ``element``.

    ``Q`` is derived exactly from the stationary rule ``(0.042 q_i)^2``,
    i.e. about ``5.09 q_i^2`` rather than the rounded ``5 q_i^2``.
    """
    gamma = gamma_from_half_life(HALF_LIFE_HEATS)
    q = mean_fraction(element, n_scrap)
    Q = process_noise_from_stationary(gamma, (P_INF_REL_SD * q) ** 2)
    q_c = Q_c = None
    if element in PARTITION_MEAN:
        q_c = np.array(PARTITION_MEAN[element])
        Q_c = process_noise_from_stationary(gamma, (P_C_INF_REL_SD * q_c) ** 2)
    return NoiseSpec(gamma, q, Q, observation_variance(element), q_c, Q_c, beta_sampling=beta_sampling)

