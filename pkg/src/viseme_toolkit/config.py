import os
from typing import Optional

from dotenv import load_dotenv

# Load environment variables from .env file
load_dotenv()


class Config:
    # Output handling
    OUTPUT_DIR: str = os.getenv("VISEME_OUTPUT_DIR", "output")

    # Fold-level parallelism and default seed
    JOBS: int = int(os.getenv("VISEME_JOBS", "1"))
    SEED: int = int(os.getenv("VISEME_SEED", "0"))

    # Logging
    LOG_LEVEL: str = os.getenv("VISEME_LOG_LEVEL", "WARNING")

    # Gaussian variance handling
    VARIANCE_FLOOR_SCALE: float = float(os.getenv("VISEME_VARIANCE_FLOOR_SCALE", "1e-4"))
    MIN_VARIANCE: float = float(os.getenv("VISEME_MIN_VARIANCE", "1e-8"))

    # Re-estimation of occupancy-starved mixture components
    STARVED_OCCUPANCY: float = float(os.getenv("VISEME_STARVED_OCCUPANCY", "2.0"))
    MIX_WEIGHT_FLOOR: float = float(os.getenv("VISEME_MIX_WEIGHT_FLOOR", "1e-5"))

    # Short-pause skip probability added when silence models are tied
    TEE_PROBABILITY: float = float(os.getenv("VISEME_TEE_PROBABILITY", "0.3"))

    # Analysis
    TIE_EPSILON: float = float(os.getenv("VISEME_TIE_EPSILON", "0.005"))
    SIGNIFICANCE: float = float(os.getenv("VISEME_SIGNIFICANCE", "0.05"))

    # Flat-start mixture jitter, in units of the global standard deviation
    JITTER_SCALE: float = 0.2

    def __init__(self) -> None:
        if self.JOBS < 1:
            self.JOBS = 1
        self.LOG_LEVEL = self.LOG_LEVEL.upper()

    def output_dir(self, override: Optional[str] = None) -> str:
        """Resolve the output directory, command-line value first"""
        return override or self.OUTPUT_DIR


config = Config()
