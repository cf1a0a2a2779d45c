"""
Configuration module for the Dose-Response Analysis System
Handles run settings with support for:
- Command-line flags - highest priority
- Environment variables (.env file) - fallback
- JSON configuration documents for models and prior sweeps
"""

import json
import os
from pathlib import Path
from typing import List, Literal, Optional, Tuple

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from app.core.errors import UsageError

# Load environment variables
load_dotenv()

ModelKind = Literal['simple', 'hier_centered', 'hier_ncp', 'beta_binomial']

# Default sweep rows, applied to both alpha and beta
DEFAULT_SWEEP_PRIORS = [
    'normal(0,20)',
    'normal(0,1)',
    'normal(0,100)',
    'normal(0,10000)',
    'normal(-100,100)',
    'logistic(0,1)',
    'logistic(0,10)',
    'logistic(10,10)',
    'uniform(-100,100)',
    'uniform(-1000,1000)',
    'flat',
]


class ModelConfig(BaseModel):
    """Model configuration document"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    kind: ModelKind = 'simple'
    prior_alpha: str = 'normal(0,20)'
    prior_beta: str = 'normal(0,20)'
    mu_prior: str = 'normal(0,20)'
    sigma_prior: str = 'half_normal(0,2)'
    beta_prior: Tuple[float, float] = (1.0, 1.0)

    @field_validator('prior_alpha', 'prior_beta', 'mu_prior', 'sigma_prior')
    @classmethod
    def _parseable(cls, value: str) -> str:
        from app.inference.models import PriorSpec
        return str(PriorSpec.parse(value))

    @field_validator('sigma_prior')
    @classmethod
    def _half_normal_sigma(cls, value: str) -> str:
        if not value.startswith('half_normal'):
            raise ValueError("sigma_prior must be a half_normal(0,s) prior")
        return value

    @field_validator('beta_prior')
    @classmethod
    def _positive_shapes(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if value[0] <= 0 or value[1] <= 0:
            raise ValueError("beta_prior shapes must be positive")
        return value


class SweepConfig(BaseModel):
    """Prior sweep document: one posterior run per prior row"""

    model_config = ConfigDict(extra='forbid', frozen=True)

    priors: List[str] = Field(default_factory=lambda: list(DEFAULT_SWEEP_PRIORS))
    iterations: int = 4000

    @field_validator('priors')
    @classmethod
    def _at_least_two(cls, value: List[str]) -> List[str]:
        if len(value) < 2:
            raise ValueError("a prior sweep needs at least 2 prior rows")
        from app.inference.models import PriorSpec
        return [str(PriorSpec.parse(text)) for text in value]


class Config:
    """Configuration class for run settings"""

    SEED: str = os.getenv("DOSERESP_SEED", "")
    OUT_DIR: str = os.getenv("DOSERESP_OUT_DIR", "out")
    DATASET: str = os.getenv("DOSERESP_DATASET", "")
    PARALLEL: str = os.getenv("DOSERESP_PARALLEL", "0")

    DEFAULT_SEED: int = 1

    @classmethod
    def get_seed(cls, cli_seed: Optional[int] = None) -> int:
        """
        Resolve the run seed with priority: --seed flag > DOSERESP_SEED > default

        Args:
            cli_seed: Seed given on the command line, if any

        Returns:
            Integer seed
        """
        if cli_seed is not None:
            return int(cli_seed)
        env_seed = os.getenv("DOSERESP_SEED", cls.SEED)
        if env_seed and env_seed.strip():
            try:
                return int(env_seed)
            except ValueError:
                raise UsageError(f"DOSERESP_SEED must be an integer, got {env_seed!r}")
        return cls.DEFAULT_SEED

    @classmethod
    def output_dir(cls, cli_value: Optional[str] = None) -> Path:
        """Output directory with priority: --out-dir flag > DOSERESP_OUT_DIR > out"""
        if cli_value:
            return Path(cli_value)
        return Path(os.getenv("DOSERESP_OUT_DIR", cls.OUT_DIR) or "out")

    @classmethod
    def parallel_chains(cls) -> bool:
        return os.getenv("DOSERESP_PARALLEL", cls.PARALLEL).strip().lower() in ('1', 'true', 'yes')

    @classmethod
    def dataset_path(cls) -> Optional[Path]:
        """Path to the original trial file, when one is configured and present"""
        raw = os.getenv("DOSERESP_DATASET", cls.DATASET)
        if raw and raw.strip():
            path = Path(raw)
            if path.is_file():
                return path
        return None

    @classmethod
    def load_model_config(cls, path: Optional[str] = None, **overrides) -> ModelConfig:
        """
        Load a model configuration document

        Args:
            path: JSON file; None starts from the defaults
            overrides: Non-None values replace document fields (CLI flags)

        Returns:
            Validated ModelConfig
        """
        document = cls._read_json(path) if path else {}
        document.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return ModelConfig(**document)
        except ValidationError as e:
            raise UsageError(f"Invalid model config: {_first_message(e)}")

    @classmethod
    def load_sweep_config(cls, path: Optional[str] = None, **overrides) -> SweepConfig:
        """Load a prior sweep document (defaults to DEFAULT_SWEEP_PRIORS)"""
        document = cls._read_json(path) if path else {}
        document.update({k: v for k, v in overrides.items() if v is not None})
        try:
            return SweepConfig(**document)
        except ValidationError as e:
            raise UsageError(f"Invalid sweep config: {_first_message(e)}")

    @classmethod
    def validate_config(cls) -> dict:
        """Validate configuration and return status"""
        env_seed = os.getenv("DOSERESP_SEED", cls.SEED)
        return {
            "seed": cls.get_seed(),
            "seed_source": "env" if env_seed and env_seed.strip() else "default",
            "out_dir": os.getenv("DOSERESP_OUT_DIR", cls.OUT_DIR),
            "dataset": str(cls.dataset_path()) if cls.dataset_path() else None,
            "parallel_chains": cls.parallel_chains(),
        }

    @staticmethod
    def _read_json(path: str) -> dict:
        try:
            with open(path, encoding='utf-8') as handle:
                document = json.load(handle)
        except FileNotFoundError:
            raise UsageError(f"Config file not found: {path}")
        except json.JSONDecodeError as e:
            raise UsageError(f"Config file {path} is not valid JSON: {e}")
        if not isinstance(document, dict):
            raise UsageError(f"Config file {path} must hold a JSON object")
        return document


def _first_message(error: ValidationError) -> str:
    first = error.errors()[0]
    location = '.'.join(str(part) for part in first.get('loc', ()))
    return f"{location}: {first.get('msg', '')}" if location else first.get('msg', '')
