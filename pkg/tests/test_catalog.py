import asyncio
from pathlib import Path

import pytest

from qrng.cli.tools import ArtifactWriter
from qrng.db import CatalogHandler, ext_make, kind_guess, stem_make


def catalog_make(tmp_path: Path) -> CatalogHandler:
    return CatalogHandler(f'sqlite+aiosqlite:///{tmp_path.joinpath("catalog.sqlite")}')


@pytest.mark.parametrize('path, ext, stem', [
    ('run.csv', 'csv', 'run'),
    ('sub/run.tar.gz', 'tar.gz', 'run'),
    ('README', '', 'README'),
    ])
def test_name_parts(path, ext, stem):
    assert ext_make(Path(path)) == ext
    assert stem_make(Path(path)) == stem


@pytest.mark.parametrize('path, kind', [
    ('a_bits.bin', 'bits'),
    ('lab_samples.bin', 'samples'),
    ('lab_report.txt', 'report'),
    ('a_bits.txt', 'metadata'),
    ('a_seed.seed', 'seed'),
    ('fig6_curve.csv', 'curve'),
    ('fig2_histogram.csv', 'histogram'),
    ('run_manifest.yaml', 'manifest'),
    ('plot.png', 'other'),
    ])
def test_kind_guess(path, kind):
    assert kind_guess(Path(path)) == kind


def test_writer_registers_artifacts(tmp_path):
    async def scenario():
        catalog = catalog_make(tmp_path)
        await catalog.create()
        writer = ArtifactWriter(tmp_path, catalog, 'lab')

        try:
            await writer.write_text('lab_report.txt', 'gamma_total=2.0\n', 'report')
            await writer.write_text('curves/lab_curve.csv', 'b,gamma\n', 'curve')
            return await catalog.list(), await catalog.list(kind='curve'), await catalog.list(experiment='other')

        finally:
            await catalog.release()

    everything, curves, foreign = asyncio.run(scenario())

    assert len(everything) == 2
    assert foreign == []
    assert len(curves) == 1
    assert curves[0]['name'] == 'lab_curve'
    assert curves[0]['ext'] == 'csv'
    assert curves[0]['path'] == 'curves'
    assert curves[0]['size'] == len('b,gamma\n')
    assert curves[0]['experiment'] == 'lab'
    assert tmp_path.joinpath('curves', 'lab_curve.csv').read_text(encoding='utf-8') == 'b,gamma\n'


def test_rewrite_keeps_single_entry(tmp_path):
    async def scenario():
        catalog = catalog_make(tmp_path)
        await catalog.create()
        writer = ArtifactWriter(tmp_path, catalog, 'lab')

        try:
            await writer.write_text('lab_report.txt', 'a=1\n', 'report')
            await writer.write_text('lab_report.txt', 'a=1\nb=2\n', 'report')
            return await catalog.list()

        finally:
            await catalog.release()

    entries = asyncio.run(scenario())

    assert len(entries) == 1
    assert entries[0]['size'] == len('a=1\nb=2\n')


def test_normalize_follows_disk(tmp_path):
    async def scenario():
        catalog = catalog_make(tmp_path)
        await catalog.create()
        writer = ArtifactWriter(tmp_path, catalog, 'lab')

        try:
            await writer.write_text('lab_report.txt', 'a=1\n', 'report')
            tmp_path.joinpath('lab_report.txt').unlink()
            tmp_path.joinpath('extra').mkdir()
            tmp_path.joinpath('extra', 'old_bits.bin').write_bytes(b'\x00\x01')

            await catalog.normalize(tmp_path)
            return await catalog.list()

        finally:
            await catalog.release()

    entries = asyncio.run(scenario())

    assert [(item['path'], item['name'], item['ext']) for item in entries] == [('extra', 'old_bits', 'bin')]
    assert entries[0]['kind'] == 'bits'
    assert entries[0]['size'] == 2
    assert entries[0]['experiment'] is None


def test_writer_without_catalog(tmp_path):
    writer = ArtifactWriter(tmp_path)
    path = asyncio.run(writer.write('out/data.bin', b'\xff' * 10, 'bits'))

    assert path == tmp_path.joinpath('out', 'data.bin')
    assert path.read_bytes() == b'\xff' * 10
    assert writer.written == [path]


def test_unknown_kind_becomes_other(tmp_path):
    async def scenario():
        catalog = catalog_make(tmp_path)
        await catalog.create()

        try:
            await ArtifactWriter(tmp_path, catalog).write_text('notes.txt', 'x', 'diary')
            return await catalog.list(kind='other')

        finally:
            await catalog.release()

    assert [item['name'] for item in asyncio.run(scenario())] == ['notes']


def test_normalize_guesses_report_and_seed(tmp_path):
    async def scenario():
        catalog = catalog_make(tmp_path)
        await catalog.create()

        try:
            tmp_path.joinpath('lab_report.txt').write_text('gamma_total=2.0\n', encoding='utf-8')
            tmp_path.joinpath('lab_seed.seed').write_bytes(b'QSED')
            await catalog.normalize(tmp_path)
            return await catalog.list()

        finally:
            await catalog.release()

    kinds = {item['name']: item['kind'] for item in asyncio.run(scenario())}

    assert kinds == {'lab_report': 'report', 'lab_seed': 'seed'}
