from dataclasses import replace

from django.test import SimpleTestCase
import numpy as np

from autolabel.conf import SceneConfig, SurrogateConfig
from autolabel.evaluation import match_labels
from autolabel.geometry import bev_iou
from autolabel.prelim import (
    AGENT_SHARED, FP_MAX_IOU, SURROGATE_FP, SURROGATE_TP, ScoredLabel, agent_labels, preliminary_labels,
    surrogate_detect, threshold_filter,
)

from .factories import boxes_only_frame, car

EXACT = SurrogateConfig(
    p_detect=1.0, p_detect_agent=1.0, jitter_pos=0.0, jitter_size=0.0, jitter_yaw=0.0, jitter_margin=0.0,
    fp_per_frame=0.0,
)


class ScoredLabelTests(SimpleTestCase):

    def test_score_range(self):
        with self.assertRaises(ValueError):
            ScoredLabel(car(), 1.5)
        with self.assertRaises(ValueError):
            ScoredLabel(car(), -0.1)

    def test_origin_tag(self):
        with self.assertRaises(ValueError):
            ScoredLabel(car(), 0.5, 'detector')
        self.assertEqual(ScoredLabel(car(), 0.5).origin, 'external')


class AgentLabelTests(SimpleTestCase):

    def test_one_exact_label_per_agent(self):
        for n_agents in (2, 5):
            frame = boxes_only_frame(SceneConfig(n_agents=n_agents, n_objects=4))
            found = agent_labels(frame)
            self.assertEqual(len(found), n_agents)
            for label, agent in zip(found, frame.agents):
                self.assertEqual(label.box, agent.box)
                self.assertEqual(bev_iou(label.box, agent.box), 1.0)
                self.assertEqual(label.score, 1.0)
                self.assertEqual(label.origin, AGENT_SHARED)


class SurrogateTests(SimpleTestCase):

    def test_noiseless_limit_reproduces_ground_truth(self):
        frame = boxes_only_frame()
        found = surrogate_detect(frame, EXACT)
        self.assertEqual([label.box for label in found], list(frame.gt_boxes))
        self.assertTrue(all(label.origin == SURROGATE_TP for label in found))

    def test_nothing_detected(self):
        frame = boxes_only_frame()
        cfg = replace(EXACT, p_detect=0.0, p_detect_agent=0.0)
        self.assertEqual(surrogate_detect(frame, cfg), [])

    def test_deterministic(self):
        frame = boxes_only_frame(seed=3)
        cfg = SurrogateConfig(seed=12)
        self.assertEqual(surrogate_detect(frame, cfg), surrogate_detect(frame, cfg))

    def test_false_positive_count_is_poisson(self):
        cfg = replace(EXACT, p_detect=0.0, p_detect_agent=0.0, fp_per_frame=10.0, seed=4)
        total = 0
        for frame_id in range(100):
            frame = boxes_only_frame(seed=1, frame_id=frame_id)
            found = surrogate_detect(frame, cfg)
            self.assertTrue(all(label.origin == SURROGATE_FP for label in found))
            total += len(found)
        self.assertLessEqual(abs(total - 1000), 95)

    def test_false_positives_avoid_objects(self):
        cfg = SurrogateConfig(fp_per_frame=20.0, fp_clutter_fraction=0.5)
        for frame_id in range(10):
            frame = boxes_only_frame(frame_id=frame_id)
            for label in surrogate_detect(frame, cfg):
                if label.origin == SURROGATE_FP:
                    self.assertTrue(all(bev_iou(label.box, gt) < FP_MAX_IOU for gt in frame.gt_boxes))

    def test_jittered_boxes_stay_loose_fits(self):
        frame = boxes_only_frame()
        cfg = replace(EXACT, jitter_margin=0.2, agent_jitter=1.0)
        for label, gt in zip(surrogate_detect(frame, cfg), frame.gt_boxes):
            self.assertAlmostEqual(label.box.l, gt.l + 0.4)
            self.assertAlmostEqual(label.box.w, gt.w + 0.4)
            self.assertAlmostEqual(label.box.h, gt.h + 0.4)

    def test_agents_are_fitted_exactly_by_default(self):
        frame = boxes_only_frame(seed=6)
        found = surrogate_detect(frame, SurrogateConfig(seed=1))
        for label, agent in zip(found, frame.agents):
            self.assertEqual(label.box, agent.box)
        objects = found[frame.n_views:]
        self.assertTrue(any(label.box not in frame.gt_boxes for label in objects))

    def test_clutter_false_positives_sit_on_clutter(self):
        cfg = replace(EXACT, p_detect=0.0, p_detect_agent=0.0, fp_per_frame=8.0, fp_clutter_fraction=1.0,
                      jitter_pos=0.1, jitter_size=0.02, jitter_yaw=0.02, jitter_margin=0.2, seed=3)
        seen = 0
        for frame_id in range(10):
            frame = boxes_only_frame(frame_id=frame_id)
            self.assertEqual(len(frame.clutter), SceneConfig().n_clutter)
            for label in surrogate_detect(frame, cfg):
                seen += 1
                self.assertGreater(max(bev_iou(label.box, obstacle) for obstacle in frame.clutter), 0.5)
                self.assertTrue(all(bev_iou(label.box, gt) < FP_MAX_IOU for gt in frame.gt_boxes))
        self.assertGreater(seen, 40)

    def test_without_clutter_false_positives_use_free_space(self):
        cfg = replace(EXACT, p_detect=0.0, p_detect_agent=0.0, fp_per_frame=8.0, fp_clutter_fraction=1.0)
        frame = boxes_only_frame(SceneConfig(n_clutter=0), frame_id=2)
        found = surrogate_detect(frame, cfg)
        self.assertTrue(found)
        self.assertTrue(all(label.origin == SURROGATE_FP for label in found))

    def test_both_sources_share_object_detections(self):
        frame = boxes_only_frame(seed=2)
        cfg = SurrogateConfig(seed=5)
        n_agents = frame.n_views
        surrogate = surrogate_detect(frame, cfg)
        both = preliminary_labels(frame, cfg, 'both')
        self.assertEqual(both[:n_agents], agent_labels(frame))
        # default p_detect_agent is 1, so the surrogate's first V labels are the agents
        self.assertEqual(both[n_agents:], surrogate[n_agents:])
        self.assertEqual(preliminary_labels(frame, cfg, 'agents'), agent_labels(frame))
        self.assertEqual(preliminary_labels(frame, cfg), surrogate)


class ThresholdFilterTests(SimpleTestCase):

    def setUp(self):
        self.labels = [ScoredLabel(car(cx=float(i)), s) for i, s in enumerate((0.2, 1.0, 0.05, 0.9, 1.0))]

    def test_zero_keeps_everything(self):
        self.assertEqual(threshold_filter(self.labels, 0.0), self.labels)

    def test_one_keeps_certain_labels_in_order(self):
        kept = threshold_filter(self.labels, 1.0)
        self.assertEqual(kept, [self.labels[1], self.labels[4]])

    def test_recall_does_not_grow_with_delta(self):
        cfg = SurrogateConfig(seed=2)
        frames = [boxes_only_frame(frame_id=k) for k in range(10)]
        found = [surrogate_detect(frame, cfg) for frame in frames]
        recalls = []
        for delta in (0.0, 0.01, 0.1, 0.3, 0.5, 0.7, 0.9, 1.0):
            tp = sum(match_labels(threshold_filter(labels, delta), frame.gt_boxes).tp
                     for frame, labels in zip(frames, found))
            recalls.append(tp)
        self.assertEqual(recalls, sorted(recalls, reverse=True))

    def test_high_threshold_trades_recall_for_precision(self):
        frames = [boxes_only_frame(frame_id=k) for k in range(10)]
        low, high = [], []
        for seed in range(10):
            cfg = SurrogateConfig(seed=seed)
            found = [surrogate_detect(frame, cfg) for frame in frames]
            for delta, sink in ((0.01, low), (0.9, high)):
                tp = fp = 0
                for frame, labels in zip(frames, found):
                    report = match_labels(threshold_filter(labels, delta), frame.gt_boxes)
                    tp, fp = tp + report.tp, fp + report.fp
                sink.append(tp / (tp + fp))
        self.assertGreater(np.mean(high), np.mean(low))
