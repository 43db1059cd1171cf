"""Named experiment presets.

Desk-scale presets keep every run in the minutes range (p up to 1000,
five trials) while preserving the trends the experiments measure;
reference-scale presets carry the original operating points (p = 1500 or
2000, 500 test points) for anyone willing to wait.  The JSON files under
``configs/`` mirror these dictionaries one-to-one and can be passed to
``--config`` directly.

The ``depth`` parameter of the ntk kernel counts recursion levels, i.e.
hidden layers of the corresponding fully connected ReLU network.
"""

from __future__ import annotations

PRESETS: dict[str, dict] = {
    "equivalence-desk": {
        "experiment": "equivalence",
        "description": "Kernel ridge vs matched affine model, ReLU-teacher data; "
                       "deep tangent kernel at desk scale.",
        "kernel": {"type": "ntk", "params": {"depth": 3}},
        "covariance": {"kind": "identity"},
        "p": [250, 500, 1000],
        "n_ratios": [0.25, 0.5, 1.0, 2.0, 4.0],
        "n_ts": 200,
        "sigma2": 0.1,
        "lam": 0.005,
        "teacher": {"kind": "relu_net", "widths": [100, 100]},
        "trials": 5,
        "master_seed": 42,
    },
    "equivalence-reference": {
        "experiment": "equivalence",
        "description": "Reference operating point: p=1500, sigma2=0.1, lam=0.005, "
                       "tangent kernel of a one-hidden-layer network, "
                       "ReLU teacher with two 100-unit hidden layers.",
        "kernel": {"type": "ntk", "params": {"depth": 1}},
        "covariance": {"kind": "identity"},
        "p": [1500],
        "n_ratios": [0.25, 0.5, 1.0, 2.0, 4.0],
        "n_ts": 200,
        "sigma2": 0.1,
        "lam": 0.005,
        "teacher": {"kind": "relu_net", "widths": [100, 100]},
        "trials": 3,
        "master_seed": 42,
    },
    "gd-dynamics-desk": {
        "experiment": "gd_dynamics",
        "description": "Gradient-descent trajectories of the kernel model and the "
                       "scaled affine model, compared step by step.",
        "kernel": {"type": "ntk", "params": {"depth": 3}},
        "covariance": {"kind": "identity"},
        "p": [250, 500, 1000],
        "n_ratios": [0.5],
        "n_ts": 200,
        "sigma2": 0.1,
        "lam": 0.005,
        "t_list": [0, 1, 2, 5, 10, 20, 50, 100],
        "teacher": {"kind": "relu_net", "widths": [100, 100]},
        "trials": 5,
        "master_seed": 42,
    },
    "gp-optimality-desk": {
        "experiment": "gp_optimality",
        "description": "Gaussian-process data with a degree-2 polynomial kernel "
                       "(c=0.1); posterior mean vs matched affine model vs the "
                       "Bayes risk floor.  lam = sigma2 = 0.1.",
        "kernel": {"type": "polynomial", "params": {"c": 0.1, "d": 2}},
        "covariance": {"kind": "identity"},
        "p": [250, 500],
        "n_ratios": [0.5, 1.0, 2.0],
        "n_ts": 200,
        "sigma2": 0.1,
        "lam": None,
        "teacher": {"kind": "gp"},
        "trials": 5,
        "master_seed": 42,
    },
    "gp-optimality-reference": {
        "experiment": "gp_optimality",
        "description": "Reference operating point: p=2000, 500 test points, "
                       "polynomial kernel c=0.1 d=2, sigma2=0.1.",
        "kernel": {"type": "polynomial", "params": {"c": 0.1, "d": 2}},
        "covariance": {"kind": "identity"},
        "p": [2000],
        "n_ratios": [0.25, 0.5, 1.0, 2.0],
        "n_ts": 500,
        "sigma2": 0.1,
        "lam": None,
        "teacher": {"kind": "gp"},
        "trials": 5,
        "master_seed": 42,
    },
    "counterexample-desk": {
        "experiment": "counterexample",
        "description": "Low-rank Gaussian-mixture inputs (rank 50 per component, "
                       "p=500): the affine matching breaks and the kernel model "
                       "wins.",
        "kernel": {"type": "polynomial", "params": {"c": 0.1, "d": 2}},
        "covariance": {"kind": "low_rank_mixture", "rank": 50, "components": 2},
        "p": [500],
        "n_ratios": [1.0],
        "n_ts": 200,
        "sigma2": 0.1,
        "lam": None,
        "teacher": {"kind": "gp"},
        "trials": 5,
        "master_seed": 42,
    },
    "counterexample-reference": {
        "experiment": "counterexample",
        "description": "Reference operating point: p=2000, rank 200 per component "
                       "(data spans a 400-dimensional subspace).",
        "kernel": {"type": "polynomial", "params": {"c": 0.1, "d": 2}},
        "covariance": {"kind": "low_rank_mixture", "rank": 200, "components": 2},
        "p": [2000],
        "n_ratios": [0.5, 1.0],
        "n_ts": 500,
        "sigma2": 0.1,
        "lam": None,
        "teacher": {"kind": "gp"},
        "trials": 5,
        "master_seed": 42,
    },
    "gap-sweep-poly": {
        "experiment": "gap_sweep",
        "description": "Operator-norm gap between the polynomial kernel matrix "
                       "and its linear surrogate, n = p.",
        "kernel": {"type": "polynomial", "params": {"c": 0.1, "d": 2}},
        "covariance": {"kind": "identity"},
        "p": [200, 400, 800],
        "beta": 1.0,
        "trials": 5,
        "master_seed": 42,
    },
    "gap-sweep-ntk": {
        "experiment": "gap_sweep",
        "description": "Operator-norm gap for the depth-3 tangent kernel, n = p.",
        "kernel": {"type": "ntk", "params": {"depth": 3}},
        "covariance": {"kind": "identity"},
        "p": [200, 400, 800],
        "beta": 1.0,
        "trials": 5,
        "master_seed": 42,
    },
    "gap-sweep-linear": {
        "experiment": "gap_sweep",
        "description": "Sanity preset: for the linear kernel the surrogate is the "
                       "kernel matrix itself, so gaps sit at rounding level.",
        "kernel": {"type": "linear", "params": {}},
        "covariance": {"kind": "identity"},
        "p": [200, 400],
        "beta": 1.0,
        "trials": 3,
        "master_seed": 42,
    },
}


def preset_overrides(name: str) -> tuple[str, dict]:
    """(experiment, config overrides) for a preset name."""
    if name not in PRESETS:
        raise KeyError(
            f"unknown preset {name!r}; available: {', '.join(sorted(PRESETS))}"
        )
    body = dict(PRESETS[name])
    experiment = body.pop("experiment")
    body.pop("description", None)
    return experiment, body
