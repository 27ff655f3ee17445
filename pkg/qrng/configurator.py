import logging
from dataclasses import dataclass, field
from os import environ
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Tuple, TypeVar

from yaml import SafeLoader, load

import qrng.yaml_env_parser as yml
from qrng.model.adc_model import AdcConfig, enob
from qrng.model.exception import ConfigError
from qrng.model.extractors import ExtractorConfig
from qrng.model.signal_model import LaserParams, NoiseParams, PulseInterferenceConfig, PulseShape
from qrng.model.simulation import SignalMode
from qrng.presets import PRESETS, deep_merge


logger = logging.getLogger(__name__)

T = TypeVar('T', bound=Path)
V = TypeVar('V')

MIN_MC_SAMPLES = 10_000
LOG_LEVELS = ('DEBUG', 'INFO', 'WARNING', 'ERROR')


@dataclass(frozen=True)
class ExperimentConfig:
    name: str
    preset: str
    interference: PulseInterferenceConfig
    adc: AdcConfig
    extractor: ExtractorConfig
    mode: SignalMode
    mc_samples: int
    rng_seed: int
    workers: int = 1
    batch_size: int = 65_536
    log_level: str = 'INFO'
    output_dir: Path = Path('output')
    write_samples: bool = False
    bandwidths: Tuple[float, ...] = ()
    jitters: Tuple[float, ...] = ()
    bits: Tuple[int, ...] = ()
    sigma_zetas: Tuple[float, ...] = ()
    catalog: Optional[Dict[str, Any]] = field(default=None, compare=False)

    def to_dict(self) -> Dict[str, Dict[str, Any]]:
        """Блок эксперимента в формате YAML-конфигурации (для манифеста)."""
        pulse, laser, noise = self.interference.pulse, self.interference.laser, self.interference.noise
        scenario: Dict[str, Any] = {'preset': self.preset}
        for key in ('bandwidths', 'jitters', 'bits', 'sigma_zetas'):
            if getattr(self, key):
                scenario[key] = list(getattr(self, key))

        r = {
            'scenario': scenario,
            'pulse': {
                'kind': pulse.kind.value, 'width': pulse.width, 'edge_width': pulse.edge_width,
                'peak_power': pulse.peak_power, 'offset': self.interference.pulse_offset
                },
            'laser': {
                'alpha': laser.alpha, 'repetition_period': laser.repetition_period,
                'sigma_s1': laser.sigma_s1, 'sigma_s2': laser.sigma_s2,
                'mean_s1': laser.mean_s1, 'mean_s2': laser.mean_s2
                },
            'noise': {'sigma_jitter': noise.sigma_jitter, 'sigma_zeta': noise.sigma_zeta},
            'adc': {
                'n': self.adc.n, 'delta_u': self.adc.delta_u, 'bandwidth': self.adc.bandwidth,
                'sample_time': self.adc.sample_time, 'gain': self.adc.gain, 'sinad_db': self.adc.sinad_db
                },
            'extractor': {'block_len': self.extractor.block_len},
            'run': {
                'mode': self.mode.value, 'mc_samples': self.mc_samples, 'rng_seed': self.rng_seed,
                'workers': self.workers, 'batch_size': self.batch_size, 'log_level': self.log_level
                },
            'output': {'directory': str(self.output_dir), 'write_samples': self.write_samples},
            }

        if self.catalog is not None:
            r['catalog'] = dict(self.catalog)

        return r


class ConfigGetter:
    def __init__(self, conf_file_path: T) -> None:
        self.__config_file = conf_file_path
        self.__config_loader = yml.yaml_env_setup(SafeLoader)
        self.__config = self.__conf_file_parser()

    def __conf_file_parser(self) -> Dict[str, Any]:
        try:
            with open(self.__config_file, 'r', encoding='utf-8') as fd:
                config = load(fd, self.__config_loader)

        except OSError as e:
            logger.error('Не удалось открыть файл конфигурации %s.', self.__config_file)
            raise ConfigError(f'Не удалось открыть файл конфигурации {self.__config_file}: {e}.') from e

        return config

    @property
    def config(self) -> Dict[str, Any]:
        return self.__config


class ExperimentConfigurator:
    def __init__(self, config_path: Optional[T] = None, document: Optional[Dict[str, Any]] = None) -> None:
        self.__config = ConfigGetter(config_path).config if document is None else document
        self.__experiments = self.__experiments_get()

    def __fail(self, message: str) -> None:
        logger.error(message)
        raise ConfigError(message)

    def __experiments_get(self) -> Dict[str, Any]:
        if not isinstance(self.__config, dict):
            self.__fail('Неверный формат файла конфигурации.')

        experiments = self.__config.get('experiments')
        if experiments is None:
            self.__fail('Отсутствует обязательный элемент верхнего уровня "experiments".')

        if not isinstance(experiments, dict) or not experiments:
            self.__fail('Элемент "experiments" должен содержать хотя бы один эксперимент.')

        return experiments

    @property
    def names(self) -> List[str]:
        return list(self.__experiments)

    def __parameter_get(self, source: Dict[str, Any], key: str, error_message: str) -> Any:
        try:
            value = source[key]

        except (KeyError, TypeError):
            self.__fail(error_message)

        return value

    def __typed(
        self, source: Dict[str, Any], key: str, path: str, cast: Callable[[Any], V], optional: bool = False
        ) -> Optional[V]:
        value = self.__parameter_get(source, key, f'Отсутствует обязательный элемент "{path}.{key}".')
        if value is None:
            if not optional:
                self.__fail(f'{path}.{key}: значение обязательно.')

            return None

        try:
            return cast(value)

        except (TypeError, ValueError):
            self.__fail(f'{path}.{key}: неверное значение {value!r}.')

    def __block(self, source: Dict[str, Any], key: str, path: str) -> Dict[str, Any]:
        block = self.__parameter_get(source, key, f'Отсутствует обязательный элемент "{path}.{key}".')
        if not isinstance(block, dict):
            self.__fail(f'{path}.{key}: ожидался вложенный блок.')

        return block

    @staticmethod
    def __flag(value: Any) -> bool:
        if isinstance(value, str):
            if value.lower() not in ('true', 'false', 'yes', 'no', '1', '0'):
                raise ValueError(value)

            return value.lower() in ('true', 'yes', '1')

        return bool(value)

    def __merged(self, name: str) -> Dict[str, Any]:
        block = self.__experiments[name] or {}
        if not isinstance(block, dict):
            self.__fail(f'{name}: ожидался вложенный блок.')

        preset_name = (block.get('scenario') or {}).get('preset', name if name in PRESETS else 'custom')
        if preset_name not in PRESETS:
            self.__fail(f'{name}.scenario.preset: неизвестный сценарий {preset_name!r}, допускается: {", ".join(PRESETS)}.')

        return deep_merge(PRESETS[preset_name]().get_data(), block)

    def experiment(self, name: str) -> ExperimentConfig:
        if name not in self.__experiments:
            self.__fail(f'Эксперимент "{name}" не найден, есть: {", ".join(self.__experiments)}.')

        data = self.__merged(name)
        blocks = {key: self.__block(data, key, name) for key in ('scenario', 'pulse', 'laser', 'noise', 'adc', 'extractor', 'run', 'output')}
        scenario = blocks['scenario']

        def number(block: str, key: str, cast: Callable[[Any], V] = float, optional: bool = False) -> V:
            return self.__typed(blocks[block], key, f'{name}.{block}', cast, optional)

        def listed(key: str, cast: Callable[[Any], V]) -> Tuple[V, ...]:
            values = scenario.get(key) or []
            try:
                return tuple(cast(item) for item in values)

            except (TypeError, ValueError):
                self.__fail(f'{name}.scenario.{key}: ожидался список чисел.')

        try:
            interference = PulseInterferenceConfig(
                pulse=PulseShape(
                    kind=number('pulse', 'kind', str),
                    width=number('pulse', 'width'),
                    edge_width=number('pulse', 'edge_width'),
                    peak_power=number('pulse', 'peak_power')
                    ),
                laser=LaserParams(
                    alpha=number('laser', 'alpha'),
                    repetition_period=number('laser', 'repetition_period'),
                    sigma_s1=number('laser', 'sigma_s1'),
                    sigma_s2=number('laser', 'sigma_s2'),
                    mean_s1=number('laser', 'mean_s1'),
                    mean_s2=number('laser', 'mean_s2')
                    ),
                noise=NoiseParams(number('noise', 'sigma_jitter'), number('noise', 'sigma_zeta')),
                pulse_offset=number('pulse', 'offset')
                )
            adc_config = AdcConfig(
                n=number('adc', 'n', int),
                delta_u=number('adc', 'delta_u'),
                bandwidth=number('adc', 'bandwidth'),
                sample_time=number('adc', 'sample_time', optional=True),
                gain=number('adc', 'gain', optional=True),
                sinad_db=number('adc', 'sinad_db')
                )
            extractor_config = ExtractorConfig(block_len=number('extractor', 'block_len', int))

        except ValueError as e:
            # и InvalidParameterError, и ошибка Enum для pulse.kind
            self.__fail(f'{name}.{e}')

        if enob(adc_config.sinad_db) > adc_config.n:
            self.__fail(f'{name}.adc.sinad_db: ENOB {enob(adc_config.sinad_db):.2f} больше разрядности {adc_config.n}.')

        mode = number('run', 'mode', str)
        if mode not in [item.value for item in SignalMode]:
            self.__fail(f'{name}.run.mode: допускается integral или waveform, получено {mode!r}.')

        mc_samples = number('run', 'mc_samples', int)
        if mc_samples < MIN_MC_SAMPLES:
            self.__fail(f'{name}.run.mc_samples: должно быть >= {MIN_MC_SAMPLES}, получено {mc_samples}.')

        log_level = number('run', 'log_level', str).upper()
        if log_level not in LOG_LEVELS:
            self.__fail(f'{name}.run.log_level: допускается {", ".join(LOG_LEVELS)}.')

        workers = number('run', 'workers', int)
        batch_size = number('run', 'batch_size', int)
        if workers < 1 or batch_size < 1:
            self.__fail(f'{name}.run: workers и batch_size должны быть >= 1.')

        catalog = data.get('catalog')
        if catalog is not None and not isinstance(catalog, dict):
            self.__fail(f'{name}.catalog: ожидался вложенный блок.')

        return ExperimentConfig(
            name=name,
            preset=str(scenario.get('preset', name if name in PRESETS else 'custom')),
            interference=interference,
            adc=adc_config,
            extractor=extractor_config,
            mode=SignalMode(mode),
            mc_samples=mc_samples,
            rng_seed=number('run', 'rng_seed', int),
            workers=workers,
            batch_size=batch_size,
            log_level=log_level,
            output_dir=Path(number('output', 'directory', str)),
            write_samples=number('output', 'write_samples', self.__flag),
            bandwidths=listed('bandwidths', float),
            jitters=listed('jitters', float),
            bits=listed('bits', int),
            sigma_zetas=listed('sigma_zetas', float),
            catalog=catalog
            )

    def experiments(self) -> Dict[str, ExperimentConfig]:
        return {name: self.experiment(name) for name in self.names}


def _setting_get(source: Dict[str, Any], key: str, error_message: str) -> Any:
    try:
        return source[key]

    except KeyError:
        logger.error(error_message)
        raise ConfigError(error_message)


def catalog_url_make(config: ExperimentConfig) -> str:
    key = config.name
    settings = config.catalog

    if settings is None:
        config.output_dir.mkdir(parents=True, exist_ok=True)
        return f'sqlite+aiosqlite:///{config.output_dir.joinpath("catalog.sqlite")}'

    db_type = _setting_get(settings, 'db_type', f'Отсутствует обязательный элемент "db_type" в {key}.catalog.')
    db_name = _setting_get(settings, 'db_name', f'Отсутствует обязательный элемент "db_name" в {key}.catalog.')

    if db_type == 'SQLite':
        db_path = Path(_setting_get(settings, 'db_path', f'Отсутствует обязательный элемент "db_path" в {key}.catalog.'))
        db_path.mkdir(parents=True, exist_ok=True)
        url = f'sqlite+aiosqlite:///{db_path.joinpath(db_name)}'

    elif db_type == 'PostgreSQL':
        db_port = _setting_get(settings, 'db_port', f'Отсутствует обязательный элемент "db_port" в {key}.catalog.')
        db_host = _setting_get(settings, 'db_host', f'Отсутствует обязательный элемент "db_host" в {key}.catalog.')
        db_password = _setting_get(environ, f'{key.upper()}_DB_PASSWORD', f'Отсутствует пароль от базы данных для {key}.')
        db_username = _setting_get(environ, f'{key.upper()}_DB_USERNAME', f'Отсутствует имя пользователя от базы данных для {key}.')
        url = f'postgresql+asyncpg://{db_username}:{db_password}@{db_host}:{db_port}/{db_name}'

    else:
        message = f'{key}.catalog.db_type: допускается "SQLite" или "PostgreSQL".'
        logger.error(message)
        raise ConfigError(message)

    return url
