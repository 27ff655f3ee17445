import asyncio
import logging
from argparse import ArgumentParser
from pathlib import Path
from typing import Optional, Sequence

from qrng.cli import commands_setup
from qrng.model.exception import (
    ConfigError, DataFormatError, InvalidParameterError, NeedsMoreEntropyError, OutOfModelError, QrngError,
    UnimodalPdfError, UntrustedSourceError
    )


PROJECT_DIR = Path(__file__).parent.parent
CONFIG_DIR = PROJECT_DIR.joinpath('config')

LOG_FORMAT = '%(asctime)s %(levelname)s %(name)s: %(message)s'

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_CONFIG = 2
EXIT_UNTRUSTED = 3
EXIT_DATA = 4

EXIT_CODES = (
    (ConfigError, EXIT_CONFIG),
    (UntrustedSourceError, EXIT_UNTRUSTED),
    ((DataFormatError, OutOfModelError, UnimodalPdfError, NeedsMoreEntropyError, InvalidParameterError), EXIT_DATA),
    (QrngError, EXIT_FAILURE),
    )

logger = logging.getLogger(__name__)


def logging_setup(verbose: bool = False) -> None:
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO, format=LOG_FORMAT, force=True)


def exit_code(error: BaseException) -> int:
    for classes, code in EXIT_CODES:
        if isinstance(error, classes):
            return code

    return EXIT_FAILURE


def parser_make() -> ArgumentParser:
    parser = ArgumentParser(prog='qrng', description='Симулятор интерференционного КГСЧ.')
    commands_setup(parser, CONFIG_DIR.joinpath('qrng_config.yaml'))

    return parser


def starter(argv: Optional[Sequence[str]] = None) -> int:
    args = parser_make().parse_args(argv)
    logging_setup(args.verbose)

    try:
        return asyncio.run(args.handler(args))

    except QrngError as e:
        logger.error('%s', e)
        return exit_code(e)

    except FileNotFoundError as e:
        logger.error('Файл не найден: %s', e.filename or e)
        return EXIT_DATA
