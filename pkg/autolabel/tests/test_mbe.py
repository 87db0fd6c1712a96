from dataclasses import replace
from fractions import Fraction
import math

from django.test import SimpleTestCase
import numpy as np
from shapely.geometry import MultiPoint

from autolabel.conf import MbeParams
from autolabel.geometry import PointCloud, SURFACE_TOLERANCE, points_in_box, scale_box
from autolabel.mbe import (
    HIGH, LOW, EncodingTriple, discriminate, encode_bae, encode_cpe, encode_ice, encode_labels, encode_view,
    filter_labels,
)
from autolabel.scene import AgentPose

from .factories import car, face_grid, frame_of, labels, random_box

PARAMS = MbeParams()


def inside(p, box, scale=0.0, bev=False):
    """Containment written out as the box-frame inequalities."""
    c, s = math.cos(box.yaw), math.sin(box.yaw)
    dx, dy = p[0] - box.cx, p[1] - box.cy
    x = dx * c + dy * s
    y = -dx * s + dy * c
    z = p[2] - box.cz
    tol = SURFACE_TOLERANCE
    ok = abs(x) <= box.l * (1 + scale) / 2 + tol and abs(y) <= box.w * (1 + scale) / 2 + tol
    return ok and (bev or abs(z) <= box.h / 2 + tol)


def ratio_oracle(box, points, eta):
    n = sum(inside(p, box) for p in points)
    grown = sum(inside(p, box, eta) for p in points)
    return None if n == 0 else Fraction(grown - n, n)


def occupancy_oracle(box, points, eta):
    interior = [p for p in points if inside(p, box)]
    hull = MultiPoint([(p[0], p[1]) for p in interior]).convex_hull
    if hull.geom_type != 'Polygon':
        return None
    vertices = list(hull.exterior.coords)[:-1]
    outside = sum(not inside((x, y, box.cz), box, -eta, bev=True) for x, y in vertices)
    return Fraction(outside, len(vertices))


class EncodingOracleTests(SimpleTestCase):

    def instances(self, count, seed):
        gen = np.random.default_rng(seed)
        for _ in range(count):
            box = random_box(gen, spread=0.0, min_size=1.5, max_size=4.0)
            n = int(gen.integers(0, 80))
            points = np.column_stack([gen.uniform(-2.5, 2.5, (n, 2)), gen.uniform(-1.5, 1.5, n)])
            yield box, points

    def test_collision_ratio(self):
        for box, points in self.instances(120, seed=1):
            r, n = encode_cpe(box, points, 0.5)
            expected = ratio_oracle(box, points, 0.5)
            if expected is None:
                self.assertIsNone(r)
                self.assertEqual(n, 0)
            else:
                self.assertEqual(Fraction(r).limit_denominator(1000), expected)
                self.assertAlmostEqual(r, float(expected), delta=1e-12)

    def test_boundary_occupancy(self):
        checked = 0
        for box, points in self.instances(200, seed=2):
            expected = occupancy_oracle(box, points, 0.2)
            o = encode_bae(box, points, 0.2)
            if expected is None:
                self.assertIsNone(o)
                continue
            checked += 1
            self.assertAlmostEqual(o, float(expected), delta=1e-12)
        self.assertGreaterEqual(checked, 100)

    def test_information_confidence(self):
        gen = np.random.default_rng(3)
        for _ in range(100):
            box = random_box(gen, spread=30.0)
            agent = random_box(gen, spread=30.0)
            dist2 = (agent.cx - box.cx) ** 2 + (agent.cy - box.cy) ** 2
            expected = 1.0 / max(dist2, PARAMS.epsilon_d)
            self.assertAlmostEqual(encode_ice(box, agent, PARAMS.epsilon_d), expected, delta=1e-9 * expected)

    def test_information_confidence_floor(self):
        box = car()
        self.assertEqual(encode_ice(box, box, 0.01), 100.0)

    def test_discriminator(self):
        gen = np.random.default_rng(4)
        for k in range(120):
            views = []
            for view_id in range(int(gen.integers(1, 6))):
                n_points = int(gen.integers(0, 30))
                r = None if gen.uniform() < 0.1 else float(gen.uniform(0, 0.3))
                o = None if gen.uniform() < 0.1 else float(gen.uniform(0, 1))
                views.append(EncodingTriple(view_id, r, o, float(gen.uniform(1e-4, 1.0)), n_points))
            verdict = discriminate(views, PARAMS, k)

            voters = [t for t in views if t.n_points >= PARAMS.n_min and t.r is not None and t.o is not None]
            if not voters:
                self.assertEqual(verdict.verdict, LOW)
                self.assertIsNone(verdict.aggregated_r)
                continue
            total = sum(t.d for t in voters)
            r = sum(t.d * t.r for t in voters) / total
            o = sum(t.d * t.o for t in voters) / total
            self.assertAlmostEqual(verdict.aggregated_r, r, delta=1e-9 * max(abs(r), 1e-300) + 1e-15)
            self.assertAlmostEqual(verdict.aggregated_o, o, delta=1e-9 * max(abs(o), 1e-300) + 1e-15)
            expected = HIGH if (r < PARAMS.phi_r and o > PARAMS.phi_o) else LOW
            self.assertEqual(verdict.verdict, expected)
            self.assertEqual(verdict.label_index, k)


class EncodingMonotonicityTests(SimpleTestCase):

    def setUp(self):
        self.gen = np.random.default_rng(11)

    def case(self):
        box = random_box(self.gen, spread=0.0, min_size=1.5, max_size=4.0)
        n = int(self.gen.integers(10, 120))
        points = np.column_stack([self.gen.uniform(-4, 4, (n, 2)), self.gen.uniform(-2, 2, n)])
        return box, points

    def ring(self, box, count):
        """Points inside the grown box but outside the box itself."""
        grown = scale_box(box, PARAMS.eta_enlarge)
        candidates = np.column_stack([
            self.gen.uniform(-4, 4, (20 * count, 2)), self.gen.uniform(box.z_min, box.z_max, 20 * count),
        ])
        keep = points_in_box(candidates, grown) & ~points_in_box(candidates, box)
        return candidates[keep][:count]

    def test_ring_points_never_lower_the_ratio(self):
        for _ in range(100):
            box, points = self.case()
            r, n = encode_cpe(box, points, PARAMS.eta_enlarge)
            if r is None:
                continue
            more, m = encode_cpe(box, np.vstack([points, self.ring(box, 5)]), PARAMS.eta_enlarge)
            self.assertEqual(m, n)
            self.assertGreaterEqual(more, r)

    def test_points_beyond_the_grown_box_change_nothing(self):
        grown_by = PARAMS.eta_enlarge
        for _ in range(100):
            box, points = self.case()
            near = points[points_in_box(points, scale_box(box, grown_by))]
            self.assertEqual(encode_cpe(box, near, grown_by), encode_cpe(box, points, grown_by))
            self.assertEqual(encode_bae(box, near, PARAMS.eta_reduce), encode_bae(box, points, PARAMS.eta_reduce))

    def test_points_outside_the_box_leave_occupancy(self):
        for _ in range(100):
            box, points = self.case()
            interior = points[points_in_box(points, box)]
            self.assertEqual(encode_bae(box, interior, PARAMS.eta_reduce), encode_bae(box, points, PARAMS.eta_reduce))

    def test_confidence_scales_with_distance_squared(self):
        for _ in range(100):
            box = random_box(self.gen, spread=30.0)
            agent = random_box(self.gen, spread=30.0)
            d = encode_ice(box, agent, PARAMS.epsilon_d)
            if 1.0 / d <= PARAMS.epsilon_d * 16:
                continue
            for c in (0.5, 2.0, 4.0):
                scaled = encode_ice(
                    box.replace(cx=c * box.cx, cy=c * box.cy), agent.replace(cx=c * agent.cx, cy=c * agent.cy),
                    PARAMS.epsilon_d,
                )
                self.assertEqual(scaled * c * c, d)
            scaled = encode_ice(
                box.replace(cx=3.7 * box.cx, cy=3.7 * box.cy), agent.replace(cx=3.7 * agent.cx, cy=3.7 * agent.cy),
                PARAMS.epsilon_d,
            )
            self.assertAlmostEqual(scaled * 3.7 ** 2, d, delta=1e-12 * d)

    def test_vote_weights_sum_to_one(self):
        for k in range(200):
            views = [
                EncodingTriple(view_id, float(self.gen.uniform(0, 0.3)), float(self.gen.uniform()),
                               float(10.0 ** self.gen.uniform(-6, 2)), PARAMS.n_min)
                for view_id in range(int(self.gen.integers(1, 8)))
            ]
            for params in (PARAMS, replace(PARAMS, use_ice=False)):
                weights = discriminate(views, params, k).weights
                self.assertEqual(len(weights), len(views))
                self.assertLess(abs(sum(weights) - 1.0), 1e-12)
                self.assertTrue(all(w > 0 for w in weights))


class DiscriminatorRuleTests(SimpleTestCase):

    def test_thresholds_are_strict(self):
        on_r = EncodingTriple(0, PARAMS.phi_r, 0.9, 1.0, 20)
        on_o = EncodingTriple(0, 0.0, PARAMS.phi_o, 1.0, 20)
        self.assertEqual(discriminate([on_r], PARAMS).verdict, LOW)
        self.assertEqual(discriminate([on_o], PARAMS).verdict, LOW)
        self.assertEqual(discriminate([EncodingTriple(0, 0.0, 0.9, 1.0, 20)], PARAMS).verdict, HIGH)

    def test_sparse_views_abstain(self):
        sparse = EncodingTriple(0, 5.0, 0.0, 100.0, PARAMS.n_min - 1)
        good = EncodingTriple(1, 0.0, 1.0, 0.01, PARAMS.n_min)
        verdict = discriminate([sparse, good], PARAMS)
        self.assertEqual(verdict.verdict, HIGH)
        self.assertEqual(verdict.weights, (1.0,))

    def test_no_valid_view_is_low(self):
        verdict = discriminate([EncodingTriple(0, None, None, 1.0, 0)], PARAMS)
        self.assertEqual(verdict.verdict, LOW)
        self.assertIsNone(verdict.aggregated_o)

    def test_near_views_weigh_more(self):
        near = EncodingTriple(0, 0.0, 1.0, 1 / 25, 30)
        far = EncodingTriple(1, 0.4, 1.0, 1 / 400, 30)
        verdict = discriminate([near, far], PARAMS)
        self.assertAlmostEqual(verdict.aggregated_r, 0.4 * (1 / 400) / (1 / 25 + 1 / 400))
        self.assertEqual(verdict.verdict, HIGH)
        uniform = discriminate([near, far], replace(PARAMS, use_ice=False))
        self.assertAlmostEqual(uniform.aggregated_r, 0.2)
        self.assertEqual(uniform.verdict, LOW)

    def test_ablation_switches(self):
        crowded = EncodingTriple(0, 0.5, 1.0, 1.0, 30)
        loose = EncodingTriple(0, 0.0, 0.1, 1.0, 30)
        flat = EncodingTriple(0, 0.0, None, 1.0, 30)
        self.assertEqual(discriminate([crowded], replace(PARAMS, use_cpe=False)).verdict, HIGH)
        self.assertEqual(discriminate([loose], replace(PARAMS, use_bae=False)).verdict, HIGH)
        self.assertEqual(discriminate([flat], PARAMS).verdict, LOW)
        self.assertEqual(discriminate([flat], replace(PARAMS, use_bae=False)).verdict, HIGH)


class LabelQualityTests(SimpleTestCase):
    """A car sampled on all four side faces, observed by two agents."""

    def setUp(self):
        self.target = car(0.0, 0.0)
        self.cloud = face_grid(self.target)
        self.agents = [car(0.0, 20.0), car(0.0, -25.0)]
        self.frame = frame_of(self.agents, [self.cloud, self.cloud], objects=[self.target])

    def verdict(self, box, params=PARAMS):
        _, _, verdicts = filter_labels(self.frame, labels([box]), params)
        return verdicts[0]

    def test_exact_label_is_high(self):
        verdict = self.verdict(self.target)
        self.assertEqual(verdict.verdict, HIGH)
        self.assertEqual(verdict.aggregated_r, 0.0)
        self.assertAlmostEqual(verdict.aggregated_o, 1.0, places=12)

    def test_half_object_label_is_low(self):
        shifted = self.target.replace(cy=self.target.w / 2)
        r, n = encode_cpe(shifted, self.cloud, PARAMS.eta_enlarge)
        self.assertEqual(n, 280)
        self.assertAlmostEqual(r, 48 / 280)
        self.assertEqual(encode_bae(shifted, self.cloud, PARAMS.eta_reduce), 1.0)
        self.assertEqual(self.verdict(shifted).verdict, LOW)

    def test_oversized_label_is_low(self):
        loose = self.target.replace(l=2 * self.target.l, w=2 * self.target.w)
        self.assertEqual(encode_bae(loose, self.cloud, PARAMS.eta_reduce), 0.0)
        self.assertEqual(self.verdict(loose).verdict, LOW)
        self.assertEqual(self.verdict(loose, replace(PARAMS, use_bae=False)).verdict, HIGH)

    def test_empty_space_label_is_low(self):
        verdict = self.verdict(car(15.0, 0.0))
        self.assertEqual(verdict.verdict, LOW)
        self.assertTrue(all(t.r is None for t in verdict.per_view))

    def test_ground_points_are_ignored(self):
        gen = np.random.default_rng(0)
        ground = np.column_stack([gen.uniform(-6, 6, (5000, 2)), np.zeros(5000)])
        points = np.vstack([self.cloud, ground])
        flags = np.r_[np.zeros(len(self.cloud), dtype=bool), np.ones(5000, dtype=bool)]
        cloud = PointCloud(points, flags)
        frame = frame_of(self.agents, [cloud, cloud], objects=[self.target])
        _, _, verdicts = filter_labels(frame, labels([self.target]), PARAMS)
        self.assertEqual(verdicts[0].verdict, HIGH)
        r, _ = encode_cpe(self.target, PointCloud(points), PARAMS.eta_enlarge)
        self.assertGreater(r, PARAMS.phi_r)

    def test_view_triples(self):
        triple = encode_view(self.target, self.cloud, AgentPose(self.agents[1], 1), PARAMS)
        self.assertEqual(triple.view_id, 1)
        self.assertEqual(triple.n_points, 560)
        self.assertAlmostEqual(triple.d, 1 / 625)

    def test_partition_keeps_order(self):
        boxes = [car(15.0, 0.0), self.target, self.target.replace(cy=0.9), car(-15.0, 5.0), self.target]
        found = labels(boxes)
        high, low, verdicts = filter_labels(self.frame, found, PARAMS)
        self.assertEqual(high, [found[1], found[4]])
        self.assertEqual(low, [found[0], found[2], found[3]])
        self.assertEqual([v.label_index for v in verdicts], list(range(5)))
        encodings = encode_labels(self.frame, found, PARAMS)
        self.assertEqual(filter_labels(self.frame, found, PARAMS, encodings)[2], verdicts)
