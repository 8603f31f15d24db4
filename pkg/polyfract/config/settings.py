from pydantic_settings import BaseSettings
from typing import Literal
import os

class Settings(BaseSettings):
    app_name: str = "polyfract"
    environment: Literal["dev", "test", "prod"] = "dev"

    log_level: str = "INFO"
    log_file: str = ""  # empty disables the rotating file sink

    # Interval refinement for exact sign decisions
    precision_start: int = 64
    precision_cap: int = 4096

    # Guards
    oracle_max_nodes: int = 10_000
    max_level_nodes: int = 200_000
    point_budget: int = 256

    workers: int = os.cpu_count() or 1

    # Energy solvers
    cg_rtol: float = 1e-10
    energy_rtol: float = 1e-9
    eps_start: float = 1e-1
    eps_final: float = 1e-8
    eps_stages: int = 6
    newton_max_iter: int = 200

    # Path sampling
    path_attempts: int = 10_000
    default_seed: int = 20240601

    class Config:
        env_prefix = "POLYFRACT_"
        env_file = f".env.{os.getenv('ENVIRONMENT', 'dev')}"
        env_file_encoding = 'utf-8'
        extra = "ignore"

settings = Settings()
