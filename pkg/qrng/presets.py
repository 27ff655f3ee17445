from typing import Any, Dict, Type


def deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    result = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(result.get(key), dict):
            result[key] = deep_merge(result[key], value)

        else:
            result[key] = value

    return result


class CustomPreset:
    name = 'custom'

    def get_data(self) -> Dict[str, Dict[str, Any]]:
        r = {
            'scenario': {'preset': self.name},
            'pulse': {'kind': 'gaussian', 'width': 20e-12, 'edge_width': 30e-12, 'peak_power': 1.0, 'offset': 100e-12},
            'laser': {
                'alpha': 4.0, 'repetition_period': 400e-12,
                'sigma_s1': 0.0, 'sigma_s2': 0.0, 'mean_s1': 1.0, 'mean_s2': 1.0
                },
            'noise': {'sigma_jitter': 0.0, 'sigma_zeta': 0.0},
            'adc': {'n': 8, 'delta_u': 1.0, 'bandwidth': 20e9, 'sample_time': None, 'gain': None, 'sinad_db': 45.0},
            'extractor': {'block_len': 4096},
            'run': {
                'mode': 'integral', 'mc_samples': 100_000, 'rng_seed': 0,
                'workers': 1, 'batch_size': 65_536, 'log_level': 'INFO'
                },
            'output': {'directory': 'output', 'write_samples': False},
            }

        return r


class Fig2Preset(CustomPreset):
    """Короткие гауссовы импульсы, полоса АЦП от 1 до 20 ГГц."""
    name = 'fig2'

    def get_data(self) -> Dict[str, Dict[str, Any]]:
        r = deep_merge(super().get_data(), {
            'scenario': {'bandwidths': [1e9, 2.5e9, 20e9], 'jitters': [0.0, 10e-12]},
            'pulse': {'kind': 'gaussian', 'width': 20e-12, 'offset': 100e-12},
            'laser': {'alpha': 6.0, 'repetition_period': 400e-12, 'sigma_s1': 0.01, 'sigma_s2': 0.01},
            'noise': {'sigma_jitter': 10e-12, 'sigma_zeta': 0.005},
            'run': {'mode': 'waveform', 'mc_samples': 200_000},
            })

        return r


class Fig3Preset(Fig2Preset):
    """Длинные импульсы с плоской вершиной, выборка далеко от фронта."""
    name = 'fig3'

    def get_data(self) -> Dict[str, Dict[str, Any]]:
        r = deep_merge(super().get_data(), {
            'scenario': {'bandwidths': [1e9, 20e9]},
            'pulse': {'kind': 'flat_top', 'width': 1e-9, 'edge_width': 30e-12, 'offset': 200e-12},
            'laser': {'repetition_period': 2e-9},
            'adc': {'bandwidth': 1e9, 'sample_time': 800e-12},
            # длинная сетка: пачки меньше, чтобы уложиться в память
            'run': {'batch_size': 8192},
            })

        return r


class Fig4Preset(CustomPreset):
    """Факторы редукции от шума фотоприемника при sigma_s = 5 %."""
    name = 'fig4'

    def get_data(self) -> Dict[str, Dict[str, Any]]:
        r = deep_merge(super().get_data(), {
            'scenario': {'bits': [8, 10, 12], 'sigma_zetas': [round(0.005 * k, 4) for k in range(1, 11)]},
            'laser': {'sigma_s1': 0.05, 'sigma_s2': 0.05},
            'adc': {'n': 10, 'sinad_db': 40.0},
            'run': {'mode': 'integral', 'mc_samples': 1_000_000},
            })

        return r


class Fig5Preset(Fig4Preset):
    name = 'fig5'


class Fig6Preset(Fig4Preset):
    """Кривая B -> gamma_n^Q * Gamma."""
    name = 'fig6'

    def get_data(self) -> Dict[str, Dict[str, Any]]:
        r = deep_merge(super().get_data(), {
            'scenario': {'sigma_zetas': [round(0.005 * k, 4) for k in range(0, 21)]},
            'run': {'mc_samples': 200_000},
            })

        return r


PRESETS: Dict[str, Type[CustomPreset]] = {
    preset.name: preset for preset in (CustomPreset, Fig2Preset, Fig3Preset, Fig4Preset, Fig5Preset, Fig6Preset)
    }
