from pathlib import Path

from autolabel import rng
from autolabel.exceptions import AutolabelError
from autolabel.formats import encode_grid, encode_table
from autolabel.licl import check_gradient, random_instance
from autolabel.management.base import PipelineCommand

HEADER = ('instance', 'width', 'height', 'channels', 'positives', 'negatives',
          'loss', 'max_rel_error', 'untouched_max', 'passed')
TOLERANCE = 1e-4


class Command(PipelineCommand):
    help = 'Check the contrastive-loss gradient against central finite differences on random grids.'

    def add_command_arguments(self, parser):
        parser.add_argument('--instances', type=int, default=None)
        parser.add_argument('--out', required=True, help='output directory')
        parser.add_argument('--save-grids', action='store_true', help='also write every grid as .fgrd')

    def run(self, config, **options):
        params = config.licl
        count = options['instances'] or config.eval.licl_instances
        min_positives = 2 if params.variant == 'infonce' else 1
        out = Path(options['out'])

        rows, failures = [], 0
        for k in range(count):
            gen = rng.stream(config.seed, rng.LICL_CHECK, k)
            grid, pos, neg = random_instance(gen, config.scene.extent, min_positives=min_positives)
            check = check_gradient(grid, pos, neg, params)
            passed = check.passed(TOLERANCE)
            failures += not passed
            width, height, channels = check.shape
            rows.append((k, width, height, channels, check.positives, check.negatives,
                         check.loss, check.max_rel_error, check.untouched_max, passed))
            if options['save_grids']:
                self.write(out / 'grids' / f'instance_{k:04d}.fgrd', encode_grid(grid))

        self.write(out / 'licl_check.csv', encode_table(HEADER, rows))
        self.write_resolved_config(out, config)
        worst = max(row[7] for row in rows)
        self.stdout.write(f"{count} instances, worst relative error {worst:.3e}, {failures} failed")
        if failures:
            raise AutolabelError(f"{failures} of {count} gradient checks exceeded {TOLERANCE:g}")
