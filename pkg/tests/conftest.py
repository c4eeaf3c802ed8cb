import os
import tempfile

# логи импорта (декораторы use-case'ов) — во временный каталог, не в ./logs
os.environ.setdefault("ORCA_PLL_LOG_DIR", tempfile.mkdtemp(prefix="orca-pll-logs-"))

import numpy as np  # noqa: E402
import pytest  # noqa: E402

from orcabehavior_hub.audio.wav_io import write_wav  # noqa: E402
from orcabehavior_hub.core.models import AudioSegment  # noqa: E402
from orcabehavior_hub.infra.settings import SettingsLoader  # noqa: E402
from orcabehavior_hub.logging_config import reset_logging  # noqa: E402

SR = 21_900


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    """Каждый тест: свой cwd (без config.json), свои каталоги логов и кэша."""
    monkeypatch.chdir(tmp_path)
    monkeypatch.setenv("ORCA_PLL_LOG_DIR", str(tmp_path / "logs"))
    monkeypatch.setenv("ORCA_PLL_CACHE_DIR", str(tmp_path / "cache"))
    SettingsLoader._instance = None
    SettingsLoader._initialized = False
    reset_logging()
    yield
    reset_logging()
    SettingsLoader._instance = None
    SettingsLoader._initialized = False


@pytest.fixture
def wav_writer(tmp_path):
    """write(name, samples, sample_rate=21900, encoding="pcm16") -> путь."""

    def write(name, samples, sample_rate=SR, encoding="pcm16"):
        path = tmp_path / name
        write_wav(str(path), AudioSegment(samples, sample_rate), encoding)
        return str(path)

    return write


def bursts(duration_s, windows, sample_rate=SR, freq=1_000.0, amp=0.5,
           noise=1e-4, seed=0):
    """Тихий шум + тональные вспышки в окнах [(start_s, end_s), ...]."""
    rng = np.random.default_rng(seed)
    n = int(round(duration_s * sample_rate))
    t = np.arange(n) / sample_rate
    x = rng.normal(0.0, noise, size=n)
    for start, end in windows:
        a, b = int(round(start * sample_rate)), int(round(end * sample_rate))
        x[a:b] += amp * np.sin(2 * np.pi * freq * t[a:b])
    return x


@pytest.fixture
def burst_signal():
    return bursts


def _numeric_grad(fn, arr, eps=1e-6):
    """Центральные разности d fn() / d arr; arr меняется на месте и восстанавливается."""  # noqa: E501
    g = np.zeros_like(arr, dtype=np.float64)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + eps
        plus = fn()
        arr[idx] = old - eps
        minus = fn()
        arr[idx] = old
        g[idx] = (plus - minus) / (2 * eps)
    return g


@pytest.fixture
def numeric_grad():
    return _numeric_grad


def relative_error(a, b) -> float:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    denom = max(np.linalg.norm(a) + np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / denom)


@pytest.fixture
def rel_err():
    return relative_error
