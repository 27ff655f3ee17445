import logging
import os
import re
import yaml
from typing import Type, Union

from yaml import SafeLoader, UnsafeLoader, CBaseLoader, CFullLoader, ScalarNode

from qrng.model.exception import ConfigError


logger = logging.getLogger(__name__)

Loader = Union[SafeLoader, UnsafeLoader, CBaseLoader, CFullLoader]

ENV_TAG = '!env'
# ${NAME} или ${NAME:-значение по умолчанию}
env_matcher = re.compile(r'\$\{([a-zA-Z0-9_]+)(?::-([^}]*))?\}')


def env_substitute(value: str) -> str:
    def replace(match: re.Match) -> str:
        name, default = match.group(1), match.group(2)

        if name in os.environ:
            return os.environ[name]

        if default is not None:
            return default

        logger.error('Не задана переменная окружения %s.', name)
        raise ConfigError(f'Не задана переменная окружения {name}, значения по умолчанию нет.')

    return env_matcher.sub(replace, value)


def yaml_env_setup(loader: Type[Loader]) -> Type[Loader]:
    def env_constructor(loader: Loader, node: ScalarNode) -> str:
        return env_substitute(node.value)

    yaml.add_implicit_resolver(ENV_TAG, env_matcher, first=['$'], Loader=loader)
    yaml.add_constructor(ENV_TAG, env_constructor, Loader=loader)

    return loader
