"""
Configuration loader for MEW-UNet runs.

Loads configuration from config.yaml (or any YAML/JSON file) and provides
access to settings.
"""

import copy
import yaml
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from mew_unet.data import TextureSpec
from mew_unet.errors import ConfigError
from mew_unet.model import ModelConfig
from mew_unet.train import TrainConfig

# keys of the data section that the model config mirrors
_DATA_TO_MODEL = ("in_channels", "n_classes", "image_size")


def default_config_path() -> Path:
    """config.yaml in the project root (parent of the mew_runner directory)."""
    return Path(__file__).parent.parent / "config.yaml"


class Config:
    """Configuration manager for the runner."""

    def __init__(self, config_path: Optional[str] = None,
                 data: Optional[Dict[str, Any]] = None):
        """
        Initialize configuration from a YAML file or a ready dict.

        Parameters
        ----------
        config_path : str, optional
            Path to configuration YAML file. If not provided, looks for
            config.yaml in the project root (parent of mew_runner directory).
        data : dict, optional
            Already-parsed configuration; takes precedence over the file.
        """
        self.config_path = Path(config_path) if config_path is not None else default_config_path()
        self._config = copy.deepcopy(data) if data is not None else self._load_config()

    def _load_config(self) -> Dict[str, Any]:
        """Load configuration from YAML file."""
        if not self.config_path.exists():
            raise FileNotFoundError(f"Configuration file not found: {self.config_path}")

        try:
            with open(self.config_path, 'r') as f:
                config = yaml.safe_load(f)
        except yaml.YAMLError as e:
            raise ConfigError(f"Cannot parse {self.config_path}: {e}") from e

        if config is None:
            return {}
        if not isinstance(config, dict):
            raise ConfigError(f"{self.config_path} must contain a mapping at the top level")
        return config

    def get(self, key: str, default: Any = None) -> Any:
        """
        Get configuration value by dot-notation key.

        Parameters
        ----------
        key : str
            Dot-notation key (e.g., 'train.lr_init', 'model.branch_mask')
        default : Any
            Default value if key not found

        Returns
        -------
        Any
            Configuration value
        """
        keys = key.split('.')
        value = self._config

        for k in keys:
            if isinstance(value, dict) and k in value:
                value = value[k]
            else:
                return default

        return value

    def get_section(self, section: str) -> Dict[str, Any]:
        """
        Get entire configuration section.

        Parameters
        ----------
        section : str
            Section name (e.g., 'model', 'train')

        Returns
        -------
        Dict[str, Any]
            Configuration section dictionary
        """
        value = self._config.get(section, {})
        if value is None:
            return {}
        if not isinstance(value, dict):
            raise ConfigError(f"Section '{section}' must be a mapping")
        return value

    def with_overrides(self, overrides: Dict[str, Any]) -> "Config":
        """
        Copy of this configuration with dot-notation keys replaced.

        ``None`` values are ignored, so unset CLI flags can be passed as-is.
        """
        data = copy.deepcopy(self._config)
        for key, value in overrides.items():
            if value is None:
                continue
            node = data
            parts = key.split('.')
            for part in parts[:-1]:
                node = node.setdefault(part, {})
                if not isinstance(node, dict):
                    raise ConfigError(f"Cannot override '{key}': '{part}' is not a section")
            node[parts[-1]] = value
        return Config(self.config_path, data=data)

    def to_dict(self) -> Dict[str, Any]:
        return copy.deepcopy(self._config)

    def model_config(self) -> ModelConfig:
        """Validated ModelConfig from the model section plus data shape keys."""
        section = dict(self.get_section('model'))
        data = self.get_section('data')
        for key in _DATA_TO_MODEL:
            if key in data:
                section.setdefault(key, data[key])
        return ModelConfig.from_dict(section)

    def train_config(self) -> TrainConfig:
        try:
            return TrainConfig.from_dict(self.get_section('train'))
        except TypeError as e:
            raise ConfigError(f"Invalid train section: {e}") from e

    def texture_spec(self) -> TextureSpec:
        return TextureSpec.default(self.n_classes, self.in_channels, self.noise)

    # Convenience properties for commonly used settings
    @property
    def data_dir(self) -> str:
        """Dataset root directory (holds train/ and test/)."""
        return self.get('data.dir', 'runs/data')

    @property
    def n_train(self) -> int:
        return int(self.get('data.n_train', 200))

    @property
    def n_test(self) -> int:
        return int(self.get('data.n_test', 50))

    @property
    def image_size(self) -> int:
        return int(self.get('data.image_size', 64))

    @property
    def in_channels(self) -> int:
        return int(self.get('data.in_channels', 3))

    @property
    def n_classes(self) -> int:
        return int(self.get('data.n_classes', 2))

    @property
    def noise(self) -> float:
        return float(self.get('data.noise', 0.01))

    @property
    def data_seed(self) -> int:
        return int(self.get('data.seed', 0))

    @property
    def output_dir(self) -> str:
        return self.get('output.dir', 'runs')

    @property
    def eval_batch_size(self) -> int:
        return int(self.get('eval.batch_size', 8))

    @property
    def ablation_seeds(self) -> List[int]:
        return [int(s) for s in self.get('ablation.seeds', [0, 1, 2])]

    @property
    def ablation_epochs(self) -> Optional[int]:
        """Epoch override for ablation runs (None keeps train.epochs)."""
        return self.get('ablation.epochs')

    @property
    def ablation_parallel(self) -> bool:
        return bool(self.get('ablation.parallel', False))

    @property
    def ablation_workers(self) -> int:
        return int(self.get('ablation.workers', 3))

    @property
    def patch_size(self) -> int:
        return int(self.get('analysis.patch_size', 10))

    @property
    def support_tol(self) -> float:
        return float(self.get('analysis.support_tol', 0.5))

    @property
    def analysis_max_samples(self) -> int:
        return int(self.get('analysis.max_samples', 20))

    @property
    def verbose_logging(self) -> bool:
        """Whether verbose logging is enabled."""
        return bool(self.get('debug.verbose', True))


# Global config instances, one per path and modification time
_config_instances: Dict[Tuple[str, int], Config] = {}


def get_config(config_path: Optional[str] = None) -> Config:
    """
    Get global configuration instance.

    A file edited since it was last loaded is read again.

    Parameters
    ----------
    config_path : str, optional
        Path to configuration file; defaults to the project config.yaml

    Returns
    -------
    Config
        Configuration instance
    """
    path = Path(config_path) if config_path is not None else default_config_path()
    if not path.exists():
        raise FileNotFoundError(f"Configuration file not found: {path}")
    key = (str(path.resolve()), path.stat().st_mtime_ns)
    if key not in _config_instances:
        _config_instances[key] = Config(str(path))
    return _config_instances[key]
