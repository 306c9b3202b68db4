"""
Configuration management
Process settings come from the environment (.env supported); run
configurations come from INI-style .cfg files whose values are JSON literals.
"""
import configparser
import json
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from exceptions import ConfigError
from profiles import ProfileSpec
from rmt.sampling import SampleConfig
from solvers.brown import QuadratureConfig
from solvers.dyson import SolverConfig
from solvers.support import SupportConfig
from utils.fields import GridSpec
from utils.io import calculate_hash


class Settings(BaseSettings):
    """Application settings loaded from environment variables (prefix BROWN_)"""

    log_level: str = Field(default="INFO")
    threads: int = Field(default=1, ge=1)
    output_dir: str = Field(default="output")
    config_dir: str = Field(default="configs")

    model_config = SettingsConfigDict(env_prefix="BROWN_", env_file=".env", case_sensitive=False, extra="ignore")


# Global settings instance
settings = Settings()


SECTIONS = ("model", "run", "grid", "solver", "quadrature", "support", "sample", "acceptance")
DEFAULT_GRID = {"re_min": -1.5, "re_max": 1.5, "im_min": -1.5, "im_max": 1.5, "h": 0.05}


class RunConfig(BaseModel):
    """Everything one CLI invocation needs"""

    model_config = ConfigDict(frozen=True, extra="forbid")

    model: ProfileSpec
    grid: GridSpec
    n: int = Field(default=100, ge=1)
    zeta_re: float = 0.0
    zeta_im: float = 0.0
    eta: float = Field(default=1.0, gt=0)
    eps: Tuple[float, ...] = (0.0, 0.1)
    seeds: Tuple[int, ...] = (0,)
    solver: SolverConfig = SolverConfig()
    quad: QuadratureConfig = QuadratureConfig()
    support: SupportConfig = SupportConfig()
    sample: SampleConfig = SampleConfig()
    acceptance: Dict[str, Any] = Field(default_factory=dict)
    output_dir: str = "output"

    @property
    def zeta(self) -> complex:
        return complex(self.zeta_re, self.zeta_im)

    def config_hash(self) -> str:
        """Hash of every value that can change an output"""
        return calculate_hash(self.model_dump(mode="json", exclude={"output_dir"}))


def resolve_config_path(path: Path) -> Path:
    """`path` as given, else relative to settings.config_dir when that file exists"""
    path = Path(path)
    if path.is_file() or path.is_absolute():
        return path
    candidate = Path(settings.config_dir) / path
    return candidate if candidate.is_file() else path


def read_cfg(path: Path) -> Dict[str, Dict[str, Any]]:
    """
    Parse a .cfg file into {section: {key: value}} with JSON-decoded values

    Raises:
        ConfigError: unreadable file, unknown section or non-JSON value
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}", "config.load")

    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        parser.read(path)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse {path}: {e}", "config.load") from e

    raw: Dict[str, Dict[str, Any]] = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}] in {path}", "config.load")
        raw[section] = {}
        for key, text in parser.items(section):
            try:
                raw[section][key] = json.loads(text)
            except json.JSONDecodeError as e:
                raise ConfigError(f"[{section}] {key}: value is not a JSON literal ({e})", "config.load") from e
    if "model" not in raw:
        raise ConfigError(f"{path} has no [model] section", "config.load")
    return raw


def build_run_config(raw: Dict[str, Dict[str, Any]], output_dir: Optional[str] = None) -> RunConfig:
    """Validate parsed sections into a RunConfig"""
    run = dict(raw.get("run", {}))
    n = run.get("n", 100)
    sample = {"n": n, **raw.get("sample", {})}
    if "seeds" in run and "seed" not in raw.get("sample", {}):
        seeds = run["seeds"]
        sample["seed"] = seeds[0] if isinstance(seeds, list) and seeds else 0
    try:
        return RunConfig(
            model=raw["model"],
            grid=raw.get("grid", DEFAULT_GRID),
            solver=raw.get("solver", {}),
            quad=raw.get("quadrature", {}),
            support=raw.get("support", {}),
            sample=sample,
            acceptance=raw.get("acceptance", {}),
            output_dir=output_dir or settings.output_dir,
            **run,
        )
    except ValidationError as e:
        raise ConfigError(f"invalid configuration: {e}", "config.load") from e
    except TypeError as e:
        raise ConfigError(f"invalid configuration: {e}", "config.load") from e


def load_run_config(path: Path, overrides: Optional[Dict[str, Dict[str, Any]]] = None,
                    output_dir: Optional[str] = None) -> RunConfig:
    """
    Load a run configuration, applying section-level overrides

    Args:
        path: .cfg file, looked up under settings.config_dir when not found as given
        overrides: {section: {key: value}} merged over the file values
        output_dir: output directory (defaults to settings.output_dir)

    Returns:
        validated RunConfig
    """
    raw = read_cfg(resolve_config_path(path))
    for section, values in (overrides or {}).items():
        raw.setdefault(section, {}).update(values)
    cfg = build_run_config(raw, output_dir)
    logger.debug(f"Loaded {path} (config hash {cfg.config_hash()[:12]})")
    return cfg
