class PipelineError(Exception):
    """Базовое исключение пайплайна (от него наследуются все доменные ошибки)."""


class InvalidArgumentError(PipelineError):
    """Некорректный аргумент: {reason}"""

    def __init__(self, reason: str):
        self.reason = str(reason)
        super().__init__(f"Некорректный аргумент: {self.reason}")


class ShapeMismatchError(InvalidArgumentError):
    """Несовпадение формы: ожидалось {expected}, получено {actual}"""

    def __init__(self, expected, actual):
        self.expected = tuple(expected) if expected is not None else None
        self.actual = tuple(actual)
        super().__init__(
            f"несовпадение формы: ожидалось {self.expected}, получено {self.actual}"
        )


class ValidationError(PipelineError):
    """Ошибка валидации входных данных: {reason}"""

    def __init__(self, reason: str):
        self.reason = str(reason)
        super().__init__(f"Ошибка валидации: {self.reason}")


class AudioFormatError(PipelineError):
    """Некорректный RIFF/WAVE: чанк '{chunk}': {reason}"""

    def __init__(self, chunk: str, reason: str):
        self.chunk = str(chunk)
        self.reason = str(reason)
        super().__init__(f"Некорректный RIFF/WAVE, чанк '{self.chunk}': {self.reason}")


class UnsupportedEncodingError(PipelineError):
    """Неподдерживаемая кодировка WAV: format_tag={format_tag}, bits={bits}"""

    def __init__(self, format_tag: int, bits: int):
        self.format_tag = int(format_tag)
        self.bits = int(bits)
        super().__init__(
            f"Неподдерживаемая кодировка WAV: format_tag=0x{self.format_tag:04X}, "
            f"bits={self.bits} (поддерживаются PCM 8/16/24 и float32)"
        )


class MissingGradError(PipelineError):
    """У параметра '{name}' нет градиента: сначала вызовите backward()"""

    def __init__(self, name: str):
        self.name = str(name)
        super().__init__(
            f"У параметра '{self.name}' нет градиента: сначала вызовите backward()"
        )


class SourceProcessingError(PipelineError):
    """Ошибка при обработке источника '{source_id}': {cause}"""

    def __init__(self, source_id: str, cause: BaseException):
        self.source_id = str(source_id)
        self.cause = cause
        super().__init__(
            f"Ошибка при обработке источника '{self.source_id}': {cause}"
        )
