import logging
import os

from src.config import scenario_dir
from src.models.errors import ValidationError
from src.models.spec import parse_spec

logger = logging.getLogger(__name__)

# Scenario store
store = None

FLAT_SCENARIO = """\
[meta]
name = flat

[chart]
vars = z1, z2
basepoint = 1, 1

[divisor]
z1 = z1 ; 1

[expect]
torsion.zero = true ; TRIVIAL
curvature.zero = true ; TRIVIAL
killing.subspace_dimension = 6 ; DERIVED
"""


def init_store(directory=None):
    global store
    directory = directory or scenario_dir()

    try:
        store = DirectoryStore(directory)
        logger.info('Loaded %d scenarios from %s', len(store.names()), directory)

    except (OSError, ValidationError) as e:
        logger.warning('Scenario directory unavailable (%s): %s', directory, e)
        # Fallback to the builtin flat scenario
        store = InMemoryStore({'flat': FLAT_SCENARIO})
    return store


def get_store():
    """Get scenario store instance"""
    if store is None:
        return init_store()
    return store


class InMemoryStore:
    """Scenario texts keyed by name"""
    def __init__(self, texts):
        self.texts = dict(texts)
        self._parsed = {}

    def names(self):
        return sorted(self.texts)

    def text(self, name):
        if name not in self.texts:
            raise ValidationError(f'Unknown scenario: {name} (known: {", ".join(self.names())})')
        return self.texts[name]

    def get(self, name):
        if name not in self._parsed:
            self._parsed[name] = parse_spec(self.text(name))
        return self._parsed[name]

    def resolve(self, name_or_path):
        """A bundled scenario name or a path to a .conn file"""
        if os.path.isfile(name_or_path):
            with open(name_or_path, encoding='utf-8') as handle:
                return parse_spec(handle.read())
        return self.get(name_or_path)


class DirectoryStore(InMemoryStore):
    """Every *.conn file of a directory, read eagerly and parsed on demand"""
    def __init__(self, directory):
        if not os.path.isdir(directory):
            raise ValidationError(f'Not a directory: {directory}')
        texts = {}
        for filename in sorted(os.listdir(directory)):
            if filename.endswith('.conn'):
                with open(os.path.join(directory, filename), encoding='utf-8') as handle:
                    texts[filename[:-len('.conn')]] = handle.read()
        super().__init__(texts)
        self.directory = directory
