"""
Exact reference values for the end-to-end runs.

A missing ``fixtures/<name>.json`` is written from the current run and
reported; after that every run must reproduce it bit for bit. Delete the
file to re-record after an intended change of the corpus or the filter.
"""
import json
import logging
from pathlib import Path

from autolabel.formats import atomic_write

logger = logging.getLogger('autolabel.tests')

FIXTURES = Path(__file__).resolve().parent / 'fixtures'


def _plain(values):
    # tuples become lists, numpy scalars plain numbers
    return json.loads(json.dumps(values, default=lambda v: v.item()))


class PinnedValuesMixin:

    def assertPinned(self, name, values):
        values = _plain(values)
        path = FIXTURES / f'{name}.json'
        if not path.exists():
            atomic_write(path, json.dumps(values, indent=2, sort_keys=True) + '\n')
            logger.warning("recorded reference values %s", path)
            return
        self.assertEqual(values, json.loads(path.read_text()), f"differs from {path.name}")
