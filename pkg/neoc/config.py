from pydantic import field_validator
from pydantic_settings import BaseSettings


class Settings(BaseSettings):
    # Policy iteration
    max_iter: int = 100
    tol_w: float = 1e-10
    tol_res: float = 1e-9
    cond_limit: float = 1e12
    divergence_limit: float = 1e9
    monotone_slack: float = 1e-7
    monotone_abort_after: int = 3  # consecutive violating iterations tolerated

    # Kleinman / Lyapunov
    kleinman_max_iter: int = 50
    kleinman_tol: float = 1e-12
    rank_tol: float = 1e-10

    # Closed-loop simulation
    dt: float = 1e-3
    horizon: float = 50.0
    decay_tol: float = 1e-8
    escape_factor: float = 10.0

    # Admissibility gate for the initial law
    gate_horizon: float = 20.0
    gate_ratio: float = 1e-3
    gate_dt: float = 1e-2

    # Grids
    grid_pts: int = 201
    grid_cap_2d: int = 201 * 201
    quad_node_limit: int = 10**6
    positivity_pts: int = 513
    positivity_cap: int = 4096

    # Validation harnesses
    fd_step: float = 1e-4
    alpha_samples: int = 5
    seed: int = 0

    log_level: str = "INFO"
    output_dir: str = "out"

    @field_validator(
        "tol_w", "tol_res", "cond_limit", "divergence_limit", "monotone_slack",
        "kleinman_tol", "rank_tol", "dt", "horizon", "decay_tol", "escape_factor",
        "gate_horizon", "gate_ratio", "gate_dt", "fd_step",
    )
    @classmethod
    def must_be_positive(cls, v: float) -> float:
        if v <= 0:
            raise ValueError("must be > 0")
        return v

    @field_validator("log_level", mode="before")
    @classmethod
    def upper_level(cls, v: str) -> str:
        return str(v).upper()

    model_config = {"env_prefix": "NEOC_", "env_file": ".env", "env_file_encoding": "utf-8"}


settings = Settings()
