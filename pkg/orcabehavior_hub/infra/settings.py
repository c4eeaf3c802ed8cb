import json
import os
import time

from orcabehavior_hub.core.models import SegmentationConfig, SpectrogramConfig


class SettingsLoader:
    """
    Singleton для конфигурации проекта.
    Реализация через __new__: один экземпляр на процесс,
    безопасно при множественных импортах.

    Порядок: _DEFAULTS ← config.json ← переменные окружения
    (ORCA_PLL_CACHE_DIR, ORCA_PLL_LOG_DIR).
    """

    _instance = None
    _initialized = False

    _DEFAULTS = {
        # --- пути ---
        "CACHE_DIR": "data/cache",
        "OUTPUT_DIR": "data/runs",
        # --- логирование ---
        "LOG_DIR": "logs",
        "LOG_FILE": "pipeline.log",
        "LOG_LEVEL": "INFO",
        "LOG_FORMAT": "%(levelname)s %(asctime)s %(message)s",
        "LOG_DATEFMT": "%Y-%m-%dT%H:%M:%S",
        "LOG_TO_STDERR": False,
        # --- звук и спектрограмма ---
        "SAMPLE_RATE": 21_900,
        "FFT_SIZE": 512,
        "HOP": 512,
        "N_MELS": 128,
        "FMIN": 0.0,
        "FMAX": 10_950.0,
        "PAD_VALUE": 0.0,
        # --- сегментация ---
        "MIN_DURATION_S": 0.5,
        "MERGE_GAP_S": 2.0,
        "FRAME_S": 0.05,
        "THRESHOLD_DB": 10.0,
        # --- обучение и протокол ---
        "EPOCHS": 30,
        "BATCH_SIZE": 10,
        "BASE_LR": 2e-4,
        "LR_DECAY_FACTOR": 10.0,
        "LR_DECAY_EVERY": 10,
        "N_REPS": 20,
        "TEST_FRACTION": 0.2,
        "SEED": 0,
        "JOBS": 1,
    }

    _ENV_OVERRIDES = {
        "CACHE_DIR": "ORCA_PLL_CACHE_DIR",
        "LOG_DIR": "ORCA_PLL_LOG_DIR",
    }

    def __new__(cls, *args, **kwargs):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __init__(self, config_path: str = "config.json"):
        if not self.__class__._initialized:
            self._config_path = config_path
            self._cfg = dict(self._DEFAULTS)
            self._loaded_at = 0.0
            self._load()
            self.__class__._initialized = True

    # --- internal ---
    def _load(self) -> None:
        try:
            with open(self._config_path, "r", encoding="utf-8") as f:
                data = json.load(f)
            if isinstance(data, dict):
                self._cfg.update(data)
        except FileNotFoundError:
            pass
        except Exception:
            pass
        for key, env in self._ENV_OVERRIDES.items():
            val = os.getenv(env, "").strip()
            if val:
                self._cfg[key] = val
        self._loaded_at = time.time()

    # --- public API ---
    def get(self, key, default=None):
        return self._cfg.get(key, default)

    def reload(self, config_path: str | None = None) -> None:
        if config_path is not None:
            self._config_path = config_path
        self._cfg = dict(self._DEFAULTS)
        self._load()

    # удобные геттеры
    def cache_dir(self) -> str:
        return str(self.get("CACHE_DIR", "data/cache"))

    def output_dir(self) -> str:
        return str(self.get("OUTPUT_DIR", "data/runs"))

    def _num(self, key: str, cast):
        try:
            return cast(self.get(key, self._DEFAULTS[key]))
        except Exception:
            return cast(self._DEFAULTS[key])

    def spectrogram_config(self) -> SpectrogramConfig:
        return SpectrogramConfig(
            fft_size=self._num("FFT_SIZE", int),
            hop=self._num("HOP", int),
            n_mels=self._num("N_MELS", int),
            fmin=self._num("FMIN", float),
            fmax=self._num("FMAX", float),
            sample_rate=self._num("SAMPLE_RATE", float),
        )

    def segmentation_config(self) -> SegmentationConfig:
        return SegmentationConfig(
            min_duration_s=self._num("MIN_DURATION_S", float),
            merge_gap_s=self._num("MERGE_GAP_S", float),
            frame_s=self._num("FRAME_S", float),
            threshold_db_above_noise=self._num("THRESHOLD_DB", float),
        )

    def train_defaults(self) -> dict:
        """Гиперпараметры протокола (эпохи, батч, расписание LR, повторности)."""
        return {
            "epochs": self._num("EPOCHS", int),
            "batch_size": self._num("BATCH_SIZE", int),
            "base_lr": self._num("BASE_LR", float),
            "decay_factor": self._num("LR_DECAY_FACTOR", float),
            "decay_every_epochs": self._num("LR_DECAY_EVERY", int),
            "n_reps": self._num("N_REPS", int),
            "test_fraction": self._num("TEST_FRACTION", float),
            "seed": self._num("SEED", int),
            "jobs": self._num("JOBS", int),
        }
