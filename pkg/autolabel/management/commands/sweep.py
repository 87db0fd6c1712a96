from pathlib import Path

from autolabel.evaluation import (
    build_corpus, spearman, sweep_ablation, sweep_delta, sweep_mbe, sweep_noise,
)
from autolabel.formats import encode_table, labels_for_frames, read_scene
from autolabel.management.base import PipelineCommand
from autolabel.prelim import SOURCES, preliminary_labels

KINDS = ('phi', 'eta', 'noise', 'delta', 'ablation')


class Command(PipelineCommand):
    help = 'Parameter sweeps over a corpus: phi thresholds, eta scales, noise, delta, MBE ablation.'

    def add_command_arguments(self, parser):
        parser.add_argument('kind', choices=KINDS)
        parser.add_argument('--out', required=True, help='output directory')
        parser.add_argument('--scene', default=None, help='use this scene instead of generating one')
        parser.add_argument('--labels', default=None, help='labels for --scene; default: surrogate')
        parser.add_argument('--source', choices=SOURCES, default='surrogate')

    def corpus(self, config, options):
        if options['scene'] is None:
            return build_corpus(config, options['source'])
        frames = read_scene(options['scene'])
        if options['labels'] is None:
            return frames, [preliminary_labels(f, config.surrogate, options['source']) for f in frames]
        return frames, labels_for_frames(frames, options['labels'])

    def run(self, config, **options):
        kind = options['kind']
        frames, label_sets = self.corpus(config, options)
        cfg, params = config.eval, config.mbe
        scoring = dict(iou_threshold=cfg.iou_threshold, mode=cfg.mode)
        out = Path(options['out'])

        if kind == 'phi':
            tables = {'sweep_phi.csv': sweep_mbe(frames, label_sets, cfg.phi_r_grid, cfg.phi_o_grid, (), params, **scoring)}
        elif kind == 'eta':
            tables = {'sweep_eta.csv': sweep_mbe(frames, label_sets, (), (), cfg.eta_grid, params, **scoring)}
        elif kind == 'delta':
            tables = {'sweep_delta.csv': sweep_delta(frames, label_sets, cfg.deltas, params, **scoring)}
        elif kind == 'ablation':
            tables = {'sweep_ablation.csv': sweep_ablation(frames, label_sets, params, **scoring)}
        else:
            per_run, summary = sweep_noise(
                frames, label_sets, cfg.sigma_grid, cfg.noise_seeds, params, config.noise, **scoring,
            )
            tables = {'noise.csv': per_run, 'noise_summary.csv': summary}
            sigmas = summary.column('sigma')
            self.stdout.write(
                f"spearman(sigma, recall) = {spearman(sigmas, summary.column('recall_mean')):.4f}, "
                f"spearman(sigma, precision) = {spearman(sigmas, summary.column('precision_mean')):.4f}"
            )

        for name, table in tables.items():
            self.write(out / name, encode_table(table.header, table.rows))
        self.write_resolved_config(out, config)
        self.stdout.write(f"{kind} sweep over {len(frames)} frames -> {out}")
