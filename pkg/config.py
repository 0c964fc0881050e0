"""
Configuración de FreudGas
Valores por defecto de cuadraturas, muestreador y almacenamiento, sobreescribibles por entorno o .env
"""
import os
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    model_config = SettingsConfigDict(env_prefix="FREUDGAS_", env_file=".env", extra="ignore")

    # Almacenamiento de ejecuciones
    database_url: str = "sqlite:///./freudgas.db"
    store_runs: bool = False

    # Logging
    log_level: str = "INFO"

    # Cuadraturas
    grid_order: int = 256
    fine_grid_order: int = 2048
    entropy_grid_order: int = 1024
    r_inner_order: int = 1024
    cdf_panels: int = 512
    tricomi_order: int = 129
    tricomi_max_order: int = 1025

    # Muestreador
    sweeps: int = 2000
    burn_in_fraction: float = 0.2
    thinning: int = 10
    proposal_scale: float = 1.0
    acceptance_target: float = 0.3
    cache_check_interval: int = 1000
    debug_cache_checks: bool = False

    # Experimentos
    default_seed: int = 20240607
    threads: int = 0
    alpha_order: int = 15

    def worker_count(self) -> int:
        """Número de procesos para la granja de réplicas (0 = todos los núcleos)"""
        if self.threads > 0:
            return self.threads
        return os.cpu_count() or 1


settings = Settings()
