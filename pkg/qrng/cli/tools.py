import logging
import struct
from pathlib import Path
from time import time
from typing import Any, Coroutine, Dict, Optional, Tuple, TypeVar

import aiofiles as aiof
import aiofiles.os as aos
import numpy as np
import yaml

from qrng.db import CatalogHandler
from qrng.model.exception import DataFormatError
from qrng.model.extractors import BitBuffer, ToeplitzSeed


logger = logging.getLogger(__name__)

T = TypeVar('T', bound=Path)

SAMPLES_MAGIC = b'QRNG'
SEED_MAGIC = b'QSED'
# magic, n, число отсчетов; little endian
SAMPLES_HEADER = struct.Struct('<4sIQ')
# magic, длина зерна в битах, сколько сырых бит на него ушло
SEED_HEADER = struct.Struct('<4sQQ')


def samples_to_csv(codes: np.ndarray, n: int) -> str:
    lines = [f'# n={n}'] + [str(int(code)) for code in codes]

    return '\n'.join(lines) + '\n'


def samples_from_csv(text: str, n: Optional[int] = None) -> Tuple[Optional[int], np.ndarray]:
    codes = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line:
            continue

        if line.startswith('#'):
            key, sep, value = line[1:].strip().partition('=')
            if sep and key.strip() == 'n':
                try:
                    header_n = int(value)

                except ValueError as e:
                    raise DataFormatError(f'Неверная разрядность в заголовке: {value.strip()!r}.', line=line_no) from e

                if n is not None and header_n != n:
                    raise DataFormatError(f'Разрядность файла {header_n} не совпадает с заданной {n}.', line=line_no)

                n = header_n
            continue

        try:
            code = int(line)

        except ValueError as e:
            raise DataFormatError(f'Ожидался целый код АЦП, получено {line!r}.', line=line_no) from e

        if code < 0 or (n is not None and code >= 2 ** n):
            raise DataFormatError(f'Код {code} вне диапазона АЦП.', line=line_no)

        codes.append(code)

    return n, np.array(codes, dtype=np.int64)


def samples_to_binary(codes: np.ndarray, n: int) -> bytes:
    if n > 16:
        raise DataFormatError(f'Двоичный формат хранит до 16 бит на отсчет, запрошено {n}.')

    return SAMPLES_HEADER.pack(SAMPLES_MAGIC, n, len(codes)) + np.asarray(codes, dtype='<u2').tobytes()


def samples_from_binary(data: bytes) -> Tuple[int, np.ndarray]:
    if len(data) < SAMPLES_HEADER.size:
        raise DataFormatError('Файл короче заголовка.')

    magic, n, count = SAMPLES_HEADER.unpack_from(data)
    if magic != SAMPLES_MAGIC:
        raise DataFormatError(f'Неверная сигнатура {magic!r}.')

    body = data[SAMPLES_HEADER.size:]
    if len(body) != 2 * count:
        raise DataFormatError(f'Заявлено {count} отсчетов, в файле {len(body) // 2}.')

    codes = np.frombuffer(body, dtype='<u2').astype(np.int64)
    if codes.size and codes.max() >= 2 ** n:
        raise DataFormatError(f'Код {int(codes.max())} вне диапазона {n}-битного АЦП.')

    return n, codes


def seed_to_bytes(seed: ToeplitzSeed) -> bytes:
    return SEED_HEADER.pack(SEED_MAGIC, len(seed), seed.consumed_raw) + seed.bits.data


def seed_from_bytes(data: bytes) -> ToeplitzSeed:
    if len(data) < SEED_HEADER.size:
        raise DataFormatError('Файл зерна короче заголовка.')

    magic, length, consumed = SEED_HEADER.unpack_from(data)
    if magic != SEED_MAGIC:
        raise DataFormatError(f'Неверная сигнатура зерна {magic!r}.')

    try:
        return ToeplitzSeed(BitBuffer(data[SEED_HEADER.size:], length), consumed)

    except ValueError as e:
        raise DataFormatError(f'Поврежденное зерно: {e}') from e


def key_value_dump(values: Dict[str, Any]) -> str:
    return ''.join(f'{key}={value}\n' for key, value in values.items())


def manifest_dump(name: str, document: Dict[str, Any], extra: Optional[Dict[str, Any]] = None) -> str:
    manifest = {'experiments': {name: document}}
    if extra:
        manifest['run_info'] = extra

    return yaml.safe_dump(manifest, allow_unicode=True, sort_keys=False)


class FileHandler:
    def __init__(self, path: T, chunk_size: int = 65535) -> None:
        self._path = path
        self._chunk_size = chunk_size

    async def _dir_make(self) -> Coroutine[Any, Any, None]:
        if not await aos.path.exists(self._path.parent):
            await aos.makedirs(self._path.parent, exist_ok=True)

    async def file_writer(self, content: bytes) -> Coroutine[Any, Any, int]:
        await self._dir_make()

        size = 0
        async with aiof.open(self._path, 'wb') as fd:
            for start in range(0, len(content), self._chunk_size):
                chunk = content[start:start + self._chunk_size]
                size += len(chunk)
                await fd.write(chunk)

        return size

    async def file_reader(self) -> Coroutine[Any, Any, bytes]:
        if not await aos.path.exists(self._path):
            raise FileNotFoundError(self._path)

        async with aiof.open(self._path, 'rb') as fd:
            return await fd.read()

    @staticmethod
    def path_constructor(save_dir_path: T, path: str = '', name: str = '', ext: str = '') -> T:
        if name and ext:
            file_name = '.'.join((name.lstrip('/'), ext.lstrip('./\\')))
            rel_path = Path(path.lstrip('./')).joinpath(file_name)

        else:
            rel_path = Path('artifact_{tm}.bin'.format(tm=int(time() * 1000)))

        return save_dir_path.joinpath(rel_path)


async def samples_read(path: T, n: Optional[int] = None) -> Coroutine[Any, Any, Tuple[int, np.ndarray]]:
    data = await FileHandler(path).file_reader()

    if data[:len(SAMPLES_MAGIC)] == SAMPLES_MAGIC:
        file_n, codes = samples_from_binary(data)

    else:
        try:
            text = data.decode('utf-8')

        except UnicodeDecodeError as e:
            raise DataFormatError('Файл не является ни CSV, ни двоичным файлом отсчетов.') from e

        file_n, codes = samples_from_csv(text, n)

    if n is not None and file_n is not None and file_n != n:
        raise DataFormatError(f'Разрядность файла {file_n} не совпадает с заданной {n}.')

    file_n = n if file_n is None else file_n
    if file_n is None:
        raise DataFormatError('Разрядность АЦП не указана ни в файле, ни в параметрах.')

    if codes.size and codes.max() >= 2 ** file_n:
        raise DataFormatError(f'Код {int(codes.max())} вне диапазона {file_n}-битного АЦП.')

    return file_n, codes


class ArtifactWriter:
    """Запись артефактов запуска с регистрацией в каталоге."""

    def __init__(self, output_dir: T, catalog: Optional[CatalogHandler] = None, experiment: Optional[str] = None) -> None:
        self.__output_dir = output_dir
        self.__catalog = catalog
        self.__experiment = experiment
        self.written = []

    @property
    def output_dir(self) -> T:
        return self.__output_dir

    async def write(
        self, relative: str, content: bytes, kind: str, comment: Optional[str] = None
        ) -> Coroutine[Any, Any, Path]:
        rel_path = Path(relative)
        path = FileHandler.path_constructor(self.__output_dir, str(rel_path.parent), rel_path.stem, rel_path.suffix)
        size = await FileHandler(path).file_writer(content)

        if self.__catalog is not None:
            artifact = await self.__catalog.artifact_make(self.__output_dir, path.relative_to(self.__output_dir), kind, self.__experiment, comment)
            await self.__catalog.insert(artifact)

        logger.info('Записан %s (%d байт).', path, size)
        self.written.append(path)

        return path

    async def write_text(
        self, relative: str, text: str, kind: str, comment: Optional[str] = None
        ) -> Coroutine[Any, Any, Path]:
        return await self.write(relative, text.encode('utf-8'), kind, comment)
