import unittest
import os
import tempfile

import numpy as np
from scipy import stats

import sys
sys.path.insert(0, os.path.abspath(os.path.dirname(__file__)))

from window_model import Observation, fit
from workload import (
    CostProfile,
    Disturbance,
    PlanQuery,
    StreamFormatError,
    StreamTask,
    TargetProfile,
    TaskStream,
    calibrated_profile,
    generate_stream,
    input_size,
    node_count,
    normalize_input_size,
    raw_input_size,
    read_stream_csv,
    summarize_stream,
    write_stream_csv,
)

NOISELESS = CostProfile(
    local=TargetProfile(slope=0.04, intercept=0.02),
    cloud=TargetProfile(slope=0.01, intercept=0.08),
)


class TestInputSize(unittest.TestCase):
    """Path-planning query to input size."""

    def test_reference_query_node_count(self):
        """Test the node count of the reference query."""
        n = node_count(PlanQuery((0.0, 0.0), (35.02, 0.0), 0.05))
        self.assertAlmostEqual(n, 245280, delta=1)

    def test_reference_raw_input_size(self):
        """Test the raw input size of the reference query."""
        # Natural log; base 10 would give about 1.32 million
        self.assertAlmostEqual(raw_input_size(245280), 3043962, delta=2)

    def test_small_values(self):
        """Test small hand-checked values."""
        self.assertAlmostEqual(node_count(PlanQuery((0.0, 0.0), (2.0, 0.0), 0.1)), 200.0, places=9)
        self.assertAlmostEqual(raw_input_size(200), 1059.66, delta=0.01)
        self.assertEqual(raw_input_size(0), 0.0)
        self.assertEqual(raw_input_size(1), 0.0)

    def test_start_equals_goal(self):
        """Test that start equal to goal gives zero."""
        query = PlanQuery((3.0, 4.0), (3.0, 4.0))
        self.assertEqual(node_count(query), 0.0)
        self.assertEqual(input_size(query), 0.0)

    def test_bad_grid_resolution(self):
        """Test that a zero grid resolution is refused."""
        with self.assertRaises(ValueError):
            node_count(PlanQuery((0.0, 0.0), (1.0, 1.0), 0.0))

    def test_monotonicity(self):
        """Test monotonicity in distance, resolution and n."""
        counts = [node_count(PlanQuery((0.0, 0.0), (x, 0.0))) for x in (1.0, 5.0, 10.0, 40.0)]
        self.assertEqual(counts, sorted(counts))

        by_resolution = [node_count(PlanQuery((0.0, 0.0), (10.0, 0.0), g)) for g in (0.01, 0.05, 0.1, 0.5)]
        self.assertEqual(by_resolution, sorted(by_resolution, reverse=True))

        sizes = [raw_input_size(n) for n in range(1, 500)]
        self.assertTrue(all(a < b for a, b in zip(sizes, sizes[1:])))

    def test_normalize(self):
        """Test normalisation by the map scale."""
        self.assertAlmostEqual(normalize_input_size(3043962, 1_000_000), 3.043962, places=9)
        self.assertEqual(normalize_input_size(0.0), 0.0)
        self.assertEqual(normalize_input_size(42.0, 42.0), 1.0)
        with self.assertRaises(ValueError):
            normalize_input_size(1.0, 0.0)

    def test_reference_query_lands_in_range(self):
        """Test that the reference query lands in the d range."""
        d = input_size(PlanQuery((0.0, 0.0), (35.02, 0.0), 0.05))
        self.assertTrue(0 < d < 5)


class TestGenerateStream(unittest.TestCase):
    """Seeded stream generation."""

    def test_zero_noise_on_the_lines(self):
        """Test that zero noise puts times on the lines."""
        stream = generate_stream(NOISELESS, 3, seed=1)

        self.assertEqual([task.task_id for task in stream], [1, 2, 3])
        for task in stream:
            self.assertAlmostEqual(task.t_local, 0.04 * task.d + 0.02, places=12)
            self.assertAlmostEqual(task.t_cloud, 0.01 * task.d + 0.08, places=12)

    def test_zero_noise_refits_exactly(self):
        """Test that a noiseless stream refits exactly."""
        stream = generate_stream(NOISELESS, 100, seed=2)

        local = fit(Observation(task.d, task.t_local) for task in stream)
        cloud = fit(Observation(task.d, task.t_cloud) for task in stream)

        self.assertAlmostEqual(local.slope, 0.04, delta=1e-6)
        self.assertAlmostEqual(local.intercept, 0.02, delta=1e-6)
        self.assertAlmostEqual(cloud.slope, 0.01, delta=1e-6)
        self.assertAlmostEqual(cloud.intercept, 0.08, delta=1e-6)

    def test_d_range(self):
        """Test the range of d."""
        d = generate_stream(calibrated_profile(), 1000, seed=4).column('d')
        self.assertTrue(np.all((d >= 0) & (d <= 5)))

    def test_calibrated_profile_shape(self):
        """Test the means and correlations of the calibrated profile."""
        for seed in (1, 7, 99):
            stream = generate_stream(calibrated_profile(), 1000, seed)
            d = stream.column('d')
            t_local, t_cloud = stream.column('t_local'), stream.column('t_cloud')

            self.assertAlmostEqual(t_cloud.mean(), 0.14011, delta=0.15 * 0.14011)
            self.assertAlmostEqual(t_local.mean(), 0.17530, delta=0.15 * 0.17530)
            self.assertGreater(stats.pearsonr(d, t_local)[0], stats.pearsonr(d, t_cloud)[0])

    def test_times_have_floor(self):
        """Test the 1 ms floor on times."""
        profile = CostProfile(
            local=TargetProfile(slope=0.0, intercept=0.0, noise_std=1.0),
            cloud=TargetProfile(slope=0.0, intercept=0.0, noise_std=1.0),
        )
        stream = generate_stream(profile, 500, seed=3)
        self.assertGreaterEqual(stream.column('t_local').min(), 0.001)
        self.assertGreaterEqual(stream.column('t_cloud').min(), 0.001)

    def test_determinism(self):
        """Test that the seed fixes the stream."""
        first = generate_stream(calibrated_profile(), 200, seed=7)
        second = generate_stream(calibrated_profile(), 200, seed=7)
        other = generate_stream(calibrated_profile(), 200, seed=8)

        self.assertEqual(first.tasks, second.tasks)
        self.assertNotEqual(first.tasks, other.tasks)

    def test_count_must_be_positive(self):
        """Test that the count must be positive."""
        with self.assertRaises(ValueError):
            generate_stream(calibrated_profile(), 0, seed=1)

    def test_disturbance_only_inside_interval(self):
        """Test that disturbances apply only inside their interval."""
        slowed = TargetProfile(0.01, 0.08, disturbances=(Disturbance(10, 19, add=0.05, factor=2.0),))
        profile = CostProfile(local=NOISELESS.local, cloud=slowed)
        stream = generate_stream(profile, 30, seed=5)

        for task in stream:
            line = 0.01 * task.d + 0.08
            if 10 <= task.task_id <= 19:
                self.assertAlmostEqual(task.t_cloud, line * 2.0 + 0.05, places=12)
                self.assertGreater(task.t_cloud, line)
            else:
                self.assertAlmostEqual(task.t_cloud, line, places=12)
            self.assertAlmostEqual(task.t_local, 0.04 * task.d + 0.02, places=12)

    def test_expected_matches_draw_without_noise(self):
        """Test the noise-free expected time."""
        profile = TargetProfile(0.02, 0.1, disturbances=(Disturbance(3, 3, add=0.2),))
        self.assertAlmostEqual(profile.expected(3, 1.0), 0.32, places=12)
        self.assertAlmostEqual(profile.expected(4, 1.0), 0.12, places=12)

    def test_profile_validation(self):
        """Test profile validation."""
        with self.assertRaises(ValueError):
            TargetProfile(0.01, -0.1)
        with self.assertRaises(ValueError):
            TargetProfile(0.01, 0.1, noise_std=-1.0)
        with self.assertRaises(ValueError):
            Disturbance(5, 4, add=0.1)

    def test_stream_validation(self):
        """Duplicate ids and non-positive times are rejected."""
        with self.assertRaises(ValueError):
            TaskStream((StreamTask(1, 1.0, 0.1, 0.1), StreamTask(1, 1.0, 0.1, 0.1)))
        with self.assertRaises(ValueError):
            TaskStream((StreamTask(1, 1.0, 0.0, 0.1),))

    def test_stream_ids_start_at_one(self):
        """A stream beginning at any other id is rejected; an empty one is fine."""
        with self.assertRaises(ValueError):
            TaskStream((StreamTask(2, 1.0, 0.1, 0.1), StreamTask(3, 1.0, 0.1, 0.1)))
        self.assertEqual(len(TaskStream(())), 0)

    def test_stream_rejects_bad_input_size(self):
        """Negative or non-finite d never reaches the engine."""
        for d in (-1.0, float('inf'), float('nan')):
            with self.assertRaises(ValueError):
                TaskStream((StreamTask(1, d, 0.1, 0.1),))

    def test_disturbance_must_slow_down(self):
        """A disturbance that changes nothing is rejected."""
        with self.assertRaises(ValueError):
            Disturbance(1, 5)
        with self.assertRaises(ValueError):
            Disturbance(1, 5, add=0.0, factor=1.0)
        self.assertEqual(Disturbance(1, 5, factor=1.5).add, 0.0)

    def test_summary(self):
        """Test the stream summary."""
        summary = summarize_stream(generate_stream(NOISELESS, 50, seed=6))

        self.assertEqual(summary['tasks'], 50)
        self.assertAlmostEqual(summary['corr_local'], 1.0, places=9)
        self.assertAlmostEqual(summary['corr_cloud'], 1.0, places=9)


class TestStreamCsv(unittest.TestCase):
    """Stream CSV interchange."""

    def setUp(self):
        self.temp_dir = tempfile.TemporaryDirectory()
        self.path = os.path.join(self.temp_dir.name, 'stream.csv')

    def tearDown(self):
        self.temp_dir.cleanup()

    def write(self, text):
        with open(self.path, 'w') as f:
            f.write(text)

    def test_written_stream_reads_back(self):
        """Test that a written stream reads back."""
        stream = generate_stream(calibrated_profile(), 100, seed=7)
        write_stream_csv(stream, self.path)

        loaded = read_stream_csv(self.path)

        self.assertEqual(len(loaded), 100)
        for original, read in zip(stream, loaded):
            self.assertEqual(original.task_id, read.task_id)
            self.assertAlmostEqual(original.d, read.d, delta=1e-8)
            self.assertAlmostEqual(original.t_local, read.t_local, delta=1e-9)
            self.assertAlmostEqual(original.t_cloud, read.t_cloud, delta=1e-9)

    def test_header(self):
        """Test the CSV header."""
        write_stream_csv(generate_stream(NOISELESS, 2, seed=1), self.path)
        with open(self.path) as f:
            self.assertEqual(f.readline().strip(), 'task_id,d,t_local,t_cloud')

    def test_same_seed_same_bytes(self):
        """Test that the same seed writes the same bytes."""
        second = os.path.join(self.temp_dir.name, 'again.csv')
        write_stream_csv(generate_stream(calibrated_profile(), 50, seed=3), self.path)
        write_stream_csv(generate_stream(calibrated_profile(), 50, seed=3), second)

        with open(self.path, 'rb') as a, open(second, 'rb') as b:
            self.assertEqual(a.read(), b.read())

    def test_malformed_row_is_named(self):
        """Test that a malformed row is named."""
        self.write("task_id,d,t_local,t_cloud\n1,0.5,0.2,0.1\n2,abc,0.2,0.1\n")

        with self.assertRaises(StreamFormatError) as ctx:
            read_stream_csv(self.path)
        self.assertIn("row 3", str(ctx.exception))

    def test_out_of_range_rows_are_named(self):
        """Negative or infinite d and infinite times are reported with their row."""
        cases = {
            "1,0.5,0.2,0.1\n2,-1.0,0.2,0.1\n": "row 3",
            "1,0.5,0.2,0.1\n2,0.6,0.2,0.1\n3,inf,0.2,0.1\n": "row 4",
            "1,0.5,0.2,inf\n": "row 2",
            "1,0.5,-0.2,0.1\n": "row 2",
        }
        for body, row in cases.items():
            with self.subTest(body=body):
                self.write("task_id,d,t_local,t_cloud\n" + body)

                with self.assertRaises(StreamFormatError) as ctx:
                    read_stream_csv(self.path)
                self.assertIn(row, str(ctx.exception))

    def test_ids_not_starting_at_one(self):
        """Ids must begin at 1."""
        self.write("task_id,d,t_local,t_cloud\n5,0.5,0.2,0.1\n6,0.6,0.2,0.1\n")
        with self.assertRaises(StreamFormatError):
            read_stream_csv(self.path)

    def test_wrong_header(self):
        """Test that a wrong header is refused."""
        self.write("id,d,local,cloud\n1,0.5,0.2,0.1\n")
        with self.assertRaises(StreamFormatError):
            read_stream_csv(self.path)

    def test_fractional_task_id(self):
        """Test that a fractional id is refused."""
        self.write("task_id,d,t_local,t_cloud\n1.5,0.5,0.2,0.1\n")
        with self.assertRaises(StreamFormatError):
            read_stream_csv(self.path)

    def test_non_increasing_ids(self):
        """Test that repeated ids are refused."""
        self.write("task_id,d,t_local,t_cloud\n1,0.5,0.2,0.1\n1,0.6,0.2,0.1\n")
        with self.assertRaises(StreamFormatError):
            read_stream_csv(self.path)

    def test_empty_file(self):
        """Test that an empty file is refused."""
        self.write("")
        with self.assertRaises(StreamFormatError):
            read_stream_csv(self.path)

    def test_missing_file(self):
        """Test that a missing file raises FileNotFoundError."""
        with self.assertRaises(FileNotFoundError):
            read_stream_csv(os.path.join(self.temp_dir.name, 'missing.csv'))


if __name__ == '__main__':
    unittest.main()
