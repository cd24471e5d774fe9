"""Configuration dataclasses: energy weights and solver/proposal settings."""
from dataclasses import dataclass, fields
from typing import Optional, Union

AUTO = "auto"


@dataclass
class EnergyWeights:
    w_scale: float = 20.0
    w_app: float = 1.0
    w_color: float = 1.0
    w_kp_contrast: float = 0.5
    w_rgn_contrast: float = 1.0
    w_overlap: float = 2.0
    w_singleton: float = 3.0
    w_planar_singleton: float = 1.0
    subset_cost_plane: float = 20.0
    subset_cost_pattern: float = 4.0
    sigma1_sq: float = 0.08
    sigma2_sq: float = 0.08
    # Written as "lambda" in weight files; None or "auto" picks 2 * mean(phi^2).
    lambda_: Union[float, str, None] = AUTO

    def __post_init__(self):
        for name in ("w_scale", "w_app", "w_color", "w_kp_contrast", "w_rgn_contrast", "w_overlap",
                     "subset_cost_plane", "subset_cost_pattern"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("sigma1_sq", "sigma2_sq"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.lambda_ is None:
            self.lambda_ = AUTO
        if self.lambda_ != AUTO and not float(self.lambda_) > 0:
            raise ValueError("lambda must be positive or 'auto'")

    @classmethod
    def zeros(cls, **overrides):
        base = {f.name: 0.0 for f in fields(cls) if f.name.startswith(("w_", "subset_"))}
        base.update(overrides)
        return cls(**base)

    def file_items(self):
        for f in fields(self):
            key = "lambda" if f.name == "lambda_" else f.name
            yield key, getattr(self, f.name)


@dataclass
class ProposalConfig:
    cluster_tau: float = 0.35
    n_samples: int = 500
    log_tol: float = 0.2
    max_planes: int = 8
    nms_angle_deg: float = 2.0
    gmm_components: int = 5
    seed: int = 0


@dataclass
class SolverConfig:
    max_iters: int = 20
    rel_tol: float = 1e-4
    sweeps_max: int = 10
    gmm_components: int = 5
    gmm_iters: int = 10
    knn: int = 10
    seed: int = 0
    debug: bool = False
    threads: int = 1
    proposal: Optional[ProposalConfig] = None

    def __post_init__(self):
        if self.proposal is None:
            self.proposal = ProposalConfig(gmm_components=self.gmm_components, seed=self.seed)
