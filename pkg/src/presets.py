from __future__ import annotations
from typing import Any, Dict, List

from .pipeline.errors import ConfigError

# Общие значения протоколов (итерации, соседи, фильтр)
COMMON: Dict[str, Any] = {
    "T": 5,
    "p": 20,
    "N": 3,
    "tau": 0.8,
}

# Наборы гиперпараметров по бенчмаркам
PRESETS: Dict[str, Dict[str, Any]] = {
    "usps_mnist":     {"scenario": "csda", "k": 100, "gamma": 0.1,  "beta": 1.0, "lambda": 0.01, "delta": 1.0},
    "coil":           {"scenario": "csda", "k": 20,  "gamma": 0.01, "beta": 1.0, "lambda": 0.01, "delta": 1.0},
    "msrc_voc":       {"scenario": "csda", "k": 20,  "gamma": 0.05, "beta": 0.5, "lambda": 0.01, "delta": 0.0},
    "office_caltech": {"scenario": "csda", "k": 20,  "gamma": 0.05, "beta": 0.5, "lambda": 0.01, "delta": 0.1},
    "office_home":    {"scenario": "csda", "k": 100, "gamma": 0.5,  "beta": 1.0, "lambda": 0.1,  "delta": 1.0},
    "office31_osda": {
        "scenario": "osda", "k": 100, "gamma": 1.0, "lambda": 0.1, "delta": 1.0,
        "tie_projections": True, "alpha_set": 0.98,
    },
    "office_home_osda": {
        "scenario": "osda", "k": 100, "gamma": 1.0, "lambda": 0.1, "delta": 1.0,
        "tie_projections": True, "alpha_set": 0.98,
    },
}

DESCRIPTIONS: Dict[str, str] = {
    "usps_mnist":       "Цифры USPS <-> MNIST, пиксельные признаки.",
    "coil":             "COIL20, два набора ракурсов.",
    "msrc_voc":         "MSRC <-> VOC2007, 6 общих классов, без MMD-слагаемых.",
    "office_caltech":   "Office + Caltech-256, 10 общих классов.",
    "office_home":      "Office-Home, 65 классов, глубокие признаки.",
    "office31_osda":    "Office-31 открытого множества, общие проекции.",
    "office_home_osda": "Office-Home открытого множества, общие проекции.",
}

ALIASES: Dict[str, str] = {
    # дефис и регистр нормализуем
    "usps-mnist": "usps_mnist",
    "msrc-voc": "msrc_voc",
    "office-caltech": "office_caltech",
    "office-home": "office_home",
    "office31-osda": "office31_osda",
    "office-home-osda": "office_home_osda",
}


def preset_names() -> List[str]:
    return sorted(PRESETS)


def get_preset(name: str) -> Dict[str, Any]:
    """Гиперпараметры пресета поверх общих значений протокола"""
    key = name.strip().lower()
    key = ALIASES.get(key, key)
    if key not in PRESETS:
        raise ConfigError(f"unknown preset '{name}', available: {', '.join(preset_names())}")
    return {**COMMON, **PRESETS[key]}
