import time
from functools import wraps
from typing import Any, Callable, Iterable

from orcabehavior_hub.logging_config import get_logger

# --- helpers ---------------------------------------------------------

_MAX_VALUE_LEN = 60


def _short(value: Any) -> str:
    """Компактное представление аргумента для строки лога."""
    if isinstance(value, (list, tuple)):
        head = ", ".join(_short(v) for v in list(value)[:3])
        more = f", ...+{len(value) - 3}" if len(value) > 3 else ""
        return f"[{head}{more}]"
    s = str(value)
    if len(s) > _MAX_VALUE_LEN:
        s = s[: _MAX_VALUE_LEN - 3] + "..."
    return s


def _describe_args(fields: Iterable[str], args, kwargs, func) -> str:
    """
    Собираем key=value для перечисленных полей:
      - сперва kwargs[field],
      - затем позиционно по сигнатуре функции.
    """
    names = list(func.__code__.co_varnames[: func.__code__.co_argcount])
    parts = []
    for field in fields:
        if field in kwargs:
            val = kwargs[field]
        elif field in names and names.index(field) < len(args):
            val = args[names.index(field)]
        else:
            continue
        parts.append(f"{field}={_short(val)!s}")
    return " ".join(parts)


def _describe_result(result: Any) -> str:
    if isinstance(result, dict):
        wanted = ("count", "n_instances", "mean_accuracy", "out")
        keys = [k for k in wanted if k in result]
        return " ".join(f"{k}={_short(result[k])}" for k in keys)
    return ""


# --- decorator -------------------------------------------------------

def log_action(action: str, fields: Iterable[str] = ()) -> Callable:
    """
    Декоратор логирования use-case'ов пайплайна.
    Поля лога:
      - action (SEGMENT/PREPROCESS/SYNTH/TRAIN/BASELINE/REPORT)
      - выбранные аргументы вызова (fields)
      - elapsed (секунды)
      - result (OK/ERROR)
      - error_type / error_message (при исключении)
    Пример строки:
      INFO 2025-10-09T12:05:22 TRAIN n_reps=20 epochs=30 elapsed=812.4s result=OK mean_accuracy=0.97
    """  # noqa: E501
    logger = get_logger()
    fields = tuple(fields)

    def decorator(func: Callable):
        @wraps(func)
        def wrapper(*args, **kwargs):
            described = _describe_args(fields, args, kwargs, func)
            started = time.perf_counter()
            try:
                result = func(*args, **kwargs)
                elapsed = time.perf_counter() - started
                msg = f"{action} {described} elapsed={elapsed:.2f}s result=OK"
                extra = _describe_result(result)
                if extra:
                    msg += f" {extra}"
                logger.info(msg)
                return result
            except Exception as e:
                elapsed = time.perf_counter() - started
                etype = e.__class__.__name__
                emsg = str(e)
                logger.info(
                    f"{action} {described} elapsed={elapsed:.2f}s "
                    f"result=ERROR error_type={etype} error_message=\"{emsg}\""
                )
                raise

        return wrapper

    return decorator
