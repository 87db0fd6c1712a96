from pathlib import Path

from autolabel.formats import write_scene
from autolabel.management.base import PipelineCommand
from autolabel.scene import generate_corpus


class Command(PipelineCommand):
    help = 'Generate a synthetic multi-agent corpus: scene.jsonl plus one point file per view.'

    def add_command_arguments(self, parser):
        parser.add_argument('--out', required=True, help='output directory')

    def run(self, config, **options):
        out = Path(options['out'])
        frames = generate_corpus(config.scene, config.seed, config.corpus.n_frames, config.corpus.first_frame)
        scene_path = out / 'scene.jsonl'
        written = write_scene(frames, scene_path)
        self.write_resolved_config(out, config)
        self.stdout.write(f"{len(frames)} frames, {len(written) - 1} point files -> {scene_path}")
