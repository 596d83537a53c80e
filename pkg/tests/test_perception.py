import pytest

from dronecourier import seeding
from dronecourier.geo import GeoPoint, offset_point
from dronecourier.perception import (DEFAULT_PALETTE, ColorCode, Detection,
                                     Detector, DetectorProfile, FaceStream,
                                     PaletteMismatchError, match_color,
                                     next_face_sample, scan_door)
from dronecourier.worldsim import Door


class Truth:
    def __init__(self, oid="o1", height=10.0):
        self.id = oid
        self.height_m = height


class TestColorCode:
    def test_palette_is_bijective(self):
        assert len(set(DEFAULT_PALETTE)) == len(DEFAULT_PALETTE) == 16

    def test_from_index_bounds(self):
        assert ColorCode.from_index(0).rgb == (0, 0, 0)
        with pytest.raises(ValueError):
            ColorCode.from_index(16)
        with pytest.raises(ValueError):
            ColorCode.from_index(-1)

    def test_match_basic(self):
        assert match_color(ColorCode.from_index(7), ColorCode.from_index(7))
        assert not match_color(ColorCode.from_index(7), ColorCode.from_index(8))

    def test_exhaustive_diagonal(self):
        for i in range(16):
            for j in range(16):
                got = match_color(ColorCode.from_index(i), ColorCode.from_index(j))
                assert got == (i == j)

    def test_palette_mismatch_rejected(self):
        impostor = ColorCode(index=3, rgb=(1, 2, 3))
        with pytest.raises(PaletteMismatchError):
            match_color(impostor, ColorCode.from_index(3))


class TestDetectorProfile:
    @pytest.mark.parametrize("kwargs", [
        {"tp_prob": 1.2}, {"tp_prob": -0.1}, {"fp_per_min": -1.0},
        {"tp_prob": 0.95, "misread_rate": 0.1}, {"latency_ticks": -1},
        {"max_range_m": 0.0},
    ])
    def test_validation(self, kwargs):
        with pytest.raises(ValueError):
            DetectorProfile(**kwargs)


class TestDetector:
    def test_perfect_detector_exact_height(self):
        profile = DetectorProfile(tp_prob=1.0, height_sigma_m=0.0, latency_ticks=0)
        detector = Detector(profile, seeding.stream(1, "det"), 0.1)
        out = detector.observe([Truth(height=10.0)], tick=5)
        assert out == [Detection("o1", 10.0, 5)]

    def test_dead_detector_always_empty(self):
        profile = DetectorProfile(tp_prob=0.0, fp_per_min=0.0)
        detector = Detector(profile, seeding.stream(2, "det"), 0.1)
        for tick in range(200):
            assert detector.observe([Truth()], tick) == []

    def test_detection_frequency_within_2pct(self):
        profile = DetectorProfile(tp_prob=0.7, latency_ticks=0, height_sigma_m=0.0)
        detector = Detector(profile, seeding.stream(5, "detector"), 0.1)
        hits = sum(len(detector.observe([Truth()], t)) for t in range(10_000))
        assert abs(hits / 10_000 - 0.7) <= 0.02

    def test_latency_honored(self):
        profile = DetectorProfile(tp_prob=1.0, height_sigma_m=0.0, latency_ticks=3)
        detector = Detector(profile, seeding.stream(3, "det"), 0.1)
        assert detector.observe([Truth()], 0) == []
        assert detector.observe([], 1) == []
        assert detector.observe([], 2) == []
        due = detector.observe([], 3)
        assert [d.detected_at for d in due] == [3]
        # nothing ever surfaces earlier than its truth tick + latency
        detector2 = Detector(profile, seeding.stream(3, "det"), 0.1)
        for tick in range(10):
            for det in detector2.observe([Truth()], tick):
                assert det.detected_at == tick
                assert tick >= profile.latency_ticks

    def test_false_positive_heights_in_range(self):
        profile = DetectorProfile(tp_prob=0.0, fp_per_min=240.0, latency_ticks=0)
        detector = Detector(profile, seeding.stream(6, "det"), 0.1)
        fps = []
        for tick in range(5_000):
            fps.extend(detector.observe([], tick))
        assert fps, "expected poisson false positives at 240/min"
        assert all(1.0 <= d.est_height_m <= 20.0 for d in fps)
        assert all(d.obstacle_id.startswith("fp-") for d in fps)

    def test_negative_height_noise_clamped(self):
        profile = DetectorProfile(tp_prob=1.0, height_sigma_m=50.0, latency_ticks=0)
        detector = Detector(profile, seeding.stream(7, "det"), 0.1)
        for tick in range(300):
            for det in detector.observe([Truth(height=0.5)], tick):
                assert det.est_height_m >= 0.0

    def test_deterministic_per_seed(self):
        profile = DetectorProfile(tp_prob=0.5, height_sigma_m=1.0, latency_ticks=1,
                                  fp_per_min=10.0)
        runs = []
        for _ in range(2):
            detector = Detector(profile, seeding.stream(11, "det"), 0.1)
            runs.append([detector.observe([Truth()], t) for t in range(500)])
        assert runs[0] == runs[1]


def make_door(code_index=3, alt=2.0):
    code = None if code_index is None else ColorCode.from_index(code_index)
    return Door("d1", GeoPoint(19.1, 72.9, alt), code)


class TestScanDoor:
    def setup_method(self):
        self.drone = GeoPoint(19.1, 72.9, 2.0)

    def test_perfect_read(self):
        profile = DetectorProfile(tp_prob=1.0, misread_rate=0.0)
        code = scan_door(self.drone, make_door(7), profile, seeding.stream(1, "s"))
        assert code is not None and code.index == 7

    def test_blank_door_always_none(self):
        profile = DetectorProfile(tp_prob=1.0, misread_rate=0.0)
        rng = seeding.stream(2, "s")
        assert all(scan_door(self.drone, make_door(None), profile, rng) is None
                   for _ in range(100))

    def test_out_of_range_none(self):
        profile = DetectorProfile(tp_prob=1.0, scan_range_m=3.0)
        far = offset_point(GeoPoint(19.1, 72.9, 2.0), 10.0, 0.0)
        assert scan_door(far, make_door(3), profile, seeding.stream(3, "s")) is None
        high = GeoPoint(19.1, 72.9, 30.0)
        assert scan_door(high, make_door(3), profile, seeding.stream(3, "s")) is None

    def test_misread_frequency_within_1pct(self):
        profile = DetectorProfile(tp_prob=0.85, misread_rate=0.1, height_sigma_m=0.0)
        rng = seeding.stream(9, "scan")
        door = make_door(3)
        wrong = 0
        for _ in range(10_000):
            code = scan_door(self.drone, door, profile, rng)
            if code is not None and code.index != 3:
                wrong += 1
        assert abs(wrong / 10_000 - 0.1) <= 0.01

    def test_never_returns_out_of_palette(self):
        profile = DetectorProfile(tp_prob=0.3, misread_rate=0.7)
        rng = seeding.stream(10, "scan")
        door = make_door(15)
        for _ in range(2_000):
            code = scan_door(self.drone, door, profile, rng)
            if code is not None:
                assert 0 <= code.index < 16
                assert code.rgb == DEFAULT_PALETTE[code.index]

    def test_misread_never_equals_truth(self):
        profile = DetectorProfile(tp_prob=0.0, misread_rate=1.0)
        rng = seeding.stream(11, "scan")
        door = make_door(4)
        for _ in range(500):
            code = scan_door(self.drone, door, profile, rng)
            assert code is not None and code.index != 4


class TestFaceStream:
    def test_offsets_strictly_increasing(self):
        with pytest.raises(ValueError):
            FaceStream([(1.0, 0.5), (1.0, 0.6)])

    def test_confidence_bounds(self):
        with pytest.raises(ValueError):
            FaceStream([(1.0, 1.5)])

    def test_empty_stream(self):
        stream = FaceStream([])
        assert all(next_face_sample(stream, t) is None for t in (0.0, 5.0, 1e6))

    def test_due_boundary(self):
        stream = FaceStream([(5.0, 0.95)])
        assert next_face_sample(stream, 4.9) is None
        assert next_face_sample(stream, 5.0) == 0.95
        assert next_face_sample(stream, 6.0) is None  # consumed

    def test_in_order_exactly_once_at_1hz(self):
        stream = FaceStream([(1.0, 0.3), (2.0, 0.85), (3.0, 0.4)])
        delivered = [next_face_sample(stream, float(t)) for t in range(1, 6)]
        assert delivered == [0.3, 0.85, 0.4, None, None]

    def test_late_poll_delivers_latest_only(self):
        stream = FaceStream([(1.0, 0.3), (2.0, 0.85), (3.0, 0.4)])
        assert next_face_sample(stream, 10.0) == 0.4
        assert next_face_sample(stream, 11.0) is None
