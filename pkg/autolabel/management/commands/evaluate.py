from dataclasses import replace
import json
from pathlib import Path

from autolabel.evaluation import HISTOGRAM_HEADER, MODES, empty_histogram, iou_histogram, match_labels, merge_reports
from autolabel.formats import encode_table, labels_for_frames, read_scene
from autolabel.management.base import PipelineCommand

REPORT_HEADER = ('mode', 'iou_threshold', 'recall', 'precision', 'tp', 'fp', 'fn')
EVAL_FLAGS = {'mode': 'mode', 'iou_threshold': 'iou', 'bins': 'bins'}


class Command(PipelineCommand):
    help = 'Recall, precision and the IoU distribution of labels against ground truth.'

    def add_command_arguments(self, parser):
        parser.add_argument('labels')
        parser.add_argument('scene')
        parser.add_argument('--mode', choices=sorted(MODES), default=None, help='headline IoU mode')
        parser.add_argument('--iou', type=float, default=None, help='headline IoU threshold')
        parser.add_argument('--bins', type=int, default=None)
        parser.add_argument('--out', required=True, help='output directory')

    def run(self, config, **options):
        # command-line values go through the same validation as the config file
        given = {key: options[flag] for key, flag in EVAL_FLAGS.items() if options[flag] is not None}
        config = replace(config, eval=replace(config.eval, **given)).validate()
        mode, iou, bins = config.eval.mode, config.eval.iou_threshold, config.eval.bins
        frames = read_scene(options['scene'])
        label_sets = labels_for_frames(frames, options['labels'])

        thresholds = sorted(set(config.eval.thresholds) | {iou})
        rows, headline = [], None
        for table_mode in sorted(MODES):
            for threshold in thresholds:
                report = merge_reports([
                    match_labels(labels, frame.gt_boxes, threshold, table_mode)
                    for frame, labels in zip(frames, label_sets)
                ], threshold)
                rows.append((table_mode, threshold, report.recall, report.precision, report.tp, report.fp, report.fn))
                if table_mode == mode and threshold == iou:
                    headline = report

        histogram = empty_histogram(bins)
        for frame, labels in zip(frames, label_sets):
            histogram = histogram + iou_histogram(labels, frame.gt_boxes, bins, mode)

        out = Path(options['out'])
        self.write(out / 'report.csv', encode_table(REPORT_HEADER, rows))
        self.write(out / 'histogram.csv', encode_table(HISTOGRAM_HEADER, histogram.rows()))
        summary = {
            'mode': mode,
            'iou_threshold': iou,
            'recall': headline.recall,
            'precision': headline.precision,
            'tp': headline.tp,
            'fp': headline.fp,
            'fn': headline.fn,
            'frames': len(frames),
            'histogram_unmatched': histogram.unmatched,
        }
        self.write(out / 'report.json', json.dumps(summary, indent=2) + '\n')
        self.write_resolved_config(out, config)
        self.stdout.write(
            f"{mode} IoU>={iou:g}: recall {headline.recall:.4f} precision {headline.precision:.4f}"
        )
