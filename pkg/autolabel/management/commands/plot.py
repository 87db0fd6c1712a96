from pathlib import Path

from autolabel.charts import CHARTS
from autolabel.formats import read_table
from autolabel.management.base import PipelineCommand


class Command(PipelineCommand):
    help = 'Render a sweep, noise or histogram CSV as an SVG chart.'

    def add_command_arguments(self, parser):
        parser.add_argument('csv')
        parser.add_argument('--kind', choices=sorted(CHARTS), default='line')
        parser.add_argument('--out', required=True, help='SVG file to write')
        parser.add_argument('--title', default=None)

    def run(self, config, **options):
        path = Path(options['csv'])
        header, rows = read_table(path)
        title = options['title'] if options['title'] is not None else path.stem
        svg = CHARTS[options['kind']](header, rows, title=title, path=path)
        self.write(options['out'], svg)
        self.stdout.write(f"{options['kind']} chart of {len(rows)} rows -> {options['out']}")
