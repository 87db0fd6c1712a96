from pathlib import Path

from autolabel.formats import encode_labels, label_rows, read_scene
from autolabel.management.base import PipelineCommand
from autolabel.prelim import SOURCES, preliminary_labels, threshold_filter


class Command(PipelineCommand):
    help = 'Write preliminary labels for a scene (detector surrogate and/or shared agent boxes).'

    def add_command_arguments(self, parser):
        parser.add_argument('scene', help='scene.jsonl written by gen')
        parser.add_argument('--out', required=True, help='label CSV to write')
        parser.add_argument('--delta', type=float, default=0.0, help='confidence threshold')
        parser.add_argument('--source', choices=SOURCES, default='surrogate')

    def run(self, config, **options):
        frames = read_scene(options['scene'])
        delta = options['delta']
        label_sets = [
            threshold_filter(preliminary_labels(frame, config.surrogate, options['source']), delta)
            for frame in frames
        ]
        out = Path(options['out'])
        rows = label_rows([frame.frame_id for frame in frames], label_sets)
        self.write(out, encode_labels(rows))
        self.write_resolved_config(out.parent, config)
        total = sum(len(labels) for labels in label_sets)
        self.stdout.write(f"{total} labels over {len(frames)} frames (delta={delta:g}) -> {out}")
