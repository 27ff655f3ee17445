from argparse import ArgumentParser
from pathlib import Path

from qrng.cli import handlers


def commands_setup(parser: ArgumentParser, config_path: Path) -> None:
    simulate_handler = handlers.SimulateHandler(config_path)
    analyze_handler = handlers.AnalyzeHandler(config_path)
    extract_handler = handlers.ExtractHandler(config_path)
    curve_handler = handlers.CurveHandler(config_path)
    figures_handler = handlers.FiguresHandler(config_path)

    parser.add_argument('--config', help=f'YAML-файл конфигурации (по умолчанию {config_path}).')
    parser.add_argument('--verbose', '-v', action='store_true', help='Подробный журнал (DEBUG).')
    commands = parser.add_subparsers(dest='command', required=True)

    simulate = commands.add_parser('simulate', help='Моделирование, гистограмма и отчет о факторах редукции.')
    curve = commands.add_parser('curve', help='Таблица B -> gamma_n^Q * Gamma.')
    figures = commands.add_parser('figures', help='Наборы данных для всех графиков в CSV.')
    analyze = commands.add_parser('analyze', help='Отчет по файлу отсчетов АЦП через статистику B.')
    extract = commands.add_parser('extract', help='Извлечение случайных бит из файла отсчетов.')

    for command in (simulate, curve, figures, analyze, extract):
        command.add_argument('--experiment', '-e', action='append', help='Имя эксперимента из конфигурации.')
        command.add_argument('--output', '-o', help='Каталог для артефактов.')

    for command in (analyze, extract):
        command.add_argument('samples', help='Файл отсчетов: CSV или двоичный с заголовком QRNG.')
        command.add_argument('--bits', '-n', type=int, help='Разрядность АЦП, если ее нет в файле.')

    analyze.add_argument('--curve', required=True, help='CSV-кривая B -> gamma_n^Q * Gamma.')
    extract.add_argument('--report', required=True, help='Отчет key=value с Gamma_ADC.')
    extract.add_argument('--seed', help='Файл зерна Теплица от предыдущего запуска.')
    extract.add_argument('--block-len', type=int, help='Длина блока N в битах.')

    simulate.set_defaults(handler=simulate_handler.handle)
    curve.set_defaults(handler=curve_handler.handle)
    figures.set_defaults(handler=figures_handler.handle)
    analyze.set_defaults(handler=analyze_handler.handle)
    extract.set_defaults(handler=extract_handler.handle)
