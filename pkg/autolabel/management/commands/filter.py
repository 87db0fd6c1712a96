from pathlib import Path

from autolabel.formats import encode_labels, encode_verdicts, labels_for_frames, read_scene, verdict_record
from autolabel.management.base import PipelineCommand
from autolabel.mbe import filter_labels
from autolabel.pool import ordered_map


class Command(PipelineCommand):
    help = 'Split labels into high and low quality with multi-scale box encoding.'

    def add_command_arguments(self, parser):
        parser.add_argument('scene')
        parser.add_argument('labels', help='label CSV (prelim output or external detector)')
        parser.add_argument('--out', required=True, help='output directory')

    def run(self, config, **options):
        frames = read_scene(options['scene'])
        label_sets = labels_for_frames(frames, options['labels'])
        params = config.mbe
        results = ordered_map(lambda job: filter_labels(job[0], job[1], params), zip(frames, label_sets))

        high_rows, low_rows, records = [], [], []
        for frame, labels, (_, _, verdicts) in zip(frames, label_sets, results):
            for label, verdict in zip(labels, verdicts):
                (high_rows if verdict.is_high else low_rows).append((frame.frame_id, label))
                records.append(verdict_record(frame.frame_id, label, verdict))

        out = Path(options['out'])
        self.write(out / 'high.csv', encode_labels(high_rows))
        self.write(out / 'low.csv', encode_labels(low_rows))
        self.write(out / 'verdicts.json', encode_verdicts(records))
        self.write_resolved_config(out, config)
        self.stdout.write(f"{len(high_rows)} high / {len(low_rows)} low -> {out}")
