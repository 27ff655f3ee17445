import asyncio
import logging
from contextlib import asynccontextmanager
from datetime import datetime
from pathlib import Path
from typing import Any, Coroutine, Dict, List, Optional, Set, Tuple, TypeVar, Union

import aiofiles.os as aos
import sqlalchemy as sql
from sqlalchemy.ext.asyncio import AsyncSession, create_async_engine
from sqlalchemy.orm import declarative_base, sessionmaker
from sqlalchemy.orm.decl_api import DeclarativeMeta


logger = logging.getLogger(__name__)

Base = declarative_base()
T = TypeVar('T', bound=Path)

ARTIFACT_KINDS = ('histogram', 'report', 'manifest', 'samples', 'bits', 'metadata', 'seed', 'curve', 'figure', 'other')
# файлы самой базы каталога в каталог не попадают
CATALOG_SUFFIXES = ('.sqlite', '.sqlite-journal')


class Artifact(Base):
    __tablename__ = 'artifacts'

    name = sql.Column('name', sql.String)
    ext = sql.Column('extension', sql.String)
    path = sql.Column('path', sql.String)
    sz = sql.Column('size', sql.Integer, nullable=False)
    create = sql.Column('created_at', sql.String, nullable=False)
    experiment = sql.Column('experiment', sql.String)
    kind = sql.Column('kind', sql.String, nullable=False)
    comment = sql.Column('comment', sql.String)

    sql.PrimaryKeyConstraint(name, ext, path, name='pk_artifacts')

    def __repr__(self):
        return f'Artifact(name={self.name}, extension={self.ext}, path={self.path}, size={self.sz}, \
    kind={self.kind}, experiment={self.experiment})'

    def relative_path(self) -> Path:
        file_name = f'{self.name}.{self.ext}' if self.ext else self.name
        return Path(self.path).joinpath(file_name)


def ext_make(path: Path, default: str = '') -> str:
    return ''.join(path.suffixes).lstrip('.') if path.suffixes else default


def stem_make(path: Path) -> str:
    ext = ext_make(path)
    return path.name[:-len(ext) - 1] if ext else path.name


def kind_guess(path: Path) -> str:
    ext, stem = ext_make(path), stem_make(path)
    if ext == 'bin':
        return 'samples' if stem.endswith('_samples') else 'bits'

    if ext == 'txt':
        return 'metadata' if stem.endswith('_bits') else 'report'

    if ext == 'seed':
        return 'seed'

    if ext.endswith('csv'):
        return 'curve' if 'curve' in path.name else 'histogram'

    if ext.endswith('yaml'):
        return 'manifest'

    return 'other'


class CatalogHandler:
    def __init__(self, db_url: str, echo: bool = False, future: bool = True) -> None:
        self.__engine = create_async_engine(db_url, echo=echo, future=future)
        self.__session_maker = sessionmaker(self.__engine, expire_on_commit=False, class_=AsyncSession)

    async def create(self, base: DeclarativeMeta = Base) -> Coroutine[Any, Any, None]:
        async with self.__engine.begin() as connection:
            await connection.run_sync(base.metadata.create_all)

    @asynccontextmanager
    async def get_session(self):
        async with self.__session_maker() as session:
            yield session

    async def insert(self, artifact: Union[Artifact, List[Artifact]]) -> Coroutine[Any, Any, None]:
        async with self.get_session() as session:
            if isinstance(artifact, Artifact):
                await session.merge(artifact)

            else:
                for item in artifact:
                    await session.merge(item)

            await session.commit()

    @staticmethod
    def __result_unpacker(item: Artifact) -> Dict[str, Any]:
        res = {
            'name': item.name,
            'ext': item.ext,
            'path': item.path,
            'size': item.sz,
            'created_at': item.create,
            'experiment': item.experiment,
            'kind': item.kind,
            'comment': item.comment
            }

        return res

    async def list(self, kind: Optional[str] = None, experiment: Optional[str] = None) -> Coroutine[Any, Any, List[Dict[str, Any]]]:
        sql_query = sql.select(Artifact).order_by(Artifact.path, Artifact.name, Artifact.ext)
        if kind is not None:
            sql_query = sql_query.where(Artifact.kind == kind)

        if experiment is not None:
            sql_query = sql_query.where(Artifact.experiment == experiment)

        async with self.get_session() as session:
            result = await session.execute(sql_query)

            return [self.__result_unpacker(item) for item in result.scalars()]

    async def release(self) -> Coroutine[Any, Any, None]:
        await self.__engine.dispose()

    async def _path_aggregate(self, entry_path: T) -> Coroutine[Any, Any, List[T]]:
        result = []
        for item in [Path(entry_path).joinpath(name) for name in await aos.listdir(entry_path)]:
            if await aos.path.isdir(item):
                result.extend(await self._path_aggregate(item))

            elif not item.name.endswith(CATALOG_SUFFIXES):
                result.append(item)

        return result

    async def _disk_paths(self, output_dir: T) -> Coroutine[Any, Any, Set[Path]]:
        return {path.relative_to(output_dir) for path in await self._path_aggregate(output_dir)}

    async def _db_paths(self) -> Coroutine[Any, Any, Set[Path]]:
        async with self.get_session() as session:
            result = await session.execute(sql.select(Artifact))

            return {item.relative_path() for item in result.scalars()}

    @staticmethod
    def _difference_get(disk_paths: Set[Path], db_paths: Set[Path]) -> Tuple[Set[Path], Set[Path]]:
        return db_paths - disk_paths, disk_paths - db_paths

    async def artifact_make(
        self, output_dir: T, relative: Path, kind: str, experiment: Optional[str] = None, comment: Optional[str] = None
        ) -> Coroutine[Any, Any, Artifact]:
        try:
            file_stat = await aos.stat(output_dir.joinpath(relative))

        except FileNotFoundError:
            created, sz = '', 0

        else:
            created, sz = datetime.utcfromtimestamp(file_stat.st_mtime).isoformat(), file_stat.st_size

        if kind not in ARTIFACT_KINDS:
            logger.warning('Неизвестный вид артефакта %s для %s, записан как other.', kind, relative)
            kind = 'other'

        return Artifact(
            name=stem_make(relative),
            ext=ext_make(relative),
            path=str(relative.parent),
            sz=sz,
            create=created,
            experiment=experiment,
            kind=kind,
            comment=comment
            )

    async def _add(self, output_dir: T, paths: Set[Path]) -> Coroutine[Any, Any, None]:
        if paths:
            artifacts = [await self.artifact_make(output_dir, path, kind_guess(path), comment='Найден на диске.') for path in paths]
            await self.insert(artifacts)

    async def _clean(self, paths: Set[Path]) -> Coroutine[Any, Any, None]:
        params = [{'path_': str(path.parent), 'name_': stem_make(path), 'ext_': ext_make(path)} for path in paths]

        if params:
            table = Artifact.__table__
            sql_query = sql.delete(table).where(
                table.c.name == sql.bindparam('name_'),
                table.c.path == sql.bindparam('path_'),
                table.c.extension == sql.bindparam('ext_')
                )

            async with self.__engine.begin() as connection:
                await connection.execute(sql_query, params)

    async def normalize(self, output_dir: T) -> Coroutine[Any, Any, None]:
        """Сверка каталога с диском: новые файлы добавляются, исчезнувшие удаляются."""
        disk_paths, db_paths = await asyncio.gather(self._disk_paths(output_dir), self._db_paths())
        vanished, missing = self._difference_get(disk_paths, db_paths)

        if vanished or missing:
            logger.info('Каталог: добавлено %d, удалено %d записей.', len(missing), len(vanished))

        await self._add(output_dir, missing)
        await self._clean(vanished)
