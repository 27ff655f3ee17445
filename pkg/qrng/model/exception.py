from typing import Optional


class QrngError(Exception):
    default_message = 'Ошибка симулятора.'

    def __init__(self, *args: object) -> None:
        super().__init__(*args)

        self.__message = args[0] if args else None

    def __str__(self):
        if self.__message is not None:
            return str(self.__message)

        else:
            return f'{self.__class__.__name__}: {self.default_message}'


class InvalidParameterError(QrngError, ValueError):
    default_message = 'Недопустимое значение параметра.'


class UnimodalPdfError(QrngError):
    default_message = 'Плотность распределения не имеет двух максимумов.'


class EmptyHistogramError(QrngError):
    default_message = 'Гистограмма пуста.'


class UntrustedSourceError(QrngError):
    default_message = 'Квантовый фактор редукции бесконечен, источнику нельзя доверять.'


class OutOfModelError(QrngError):
    default_message = 'Значение B вне области определения кривой.'


class ConfigError(QrngError):
    default_message = 'Неверный формат файла конфигурации.'


class NeedsMoreEntropyError(QrngError):
    default_message = 'Недостаточно сырых бит для генерации зерна.'

    def __init__(self, deficit: int, *args: object) -> None:
        super().__init__(*args)
        self.deficit = deficit

    def __str__(self):
        return f'{super().__str__()} Не хватает бит: {self.deficit}.'


class DataFormatError(QrngError):
    default_message = 'Неверный формат файла данных.'

    def __init__(self, *args: object, line: Optional[int] = None) -> None:
        super().__init__(*args)
        self.line = line

    def __str__(self):
        if self.line is None:
            return super().__str__()

        return f'строка {self.line}: {super().__str__()}'
