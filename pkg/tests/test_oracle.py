import pytest

from amrkit.config import PipelineConfig
from amrkit.dataset import Box
from amrkit.detect import decode_grid, iou, select_counter
from amrkit.errors import ShapeMismatch
from amrkit.metrics import eval_detection, eval_recognition
from amrkit.oracle import OracleNoise, OracleProvider, oracle_provider
from amrkit.recognize import PipelineImage, run_pipeline
from amrkit.tensorio import (
    ROLE_CRNET,
    ROLE_CRNN,
    ROLE_DETECTOR,
    ROLE_MULTITASK,
    DirectoryProvider,
    InferenceRequest,
    write_tensor,
    write_tensor_file,
)

from conftest import synth_annotation, synth_pool

CONFIG = PipelineConfig()


def detector_request(ann, config=CONFIG, image_w=1280, image_h=960):
    spec = config.detector_spec
    return InferenceRequest(
        image_id=ann.image_id, role=ROLE_DETECTOR, image_w=image_w, image_h=image_h,
        target_w=spec.input_w, target_h=spec.input_h,
    )


def test_zero_noise_detector_decode_recovers_counter():
    for seed in range(30):
        ann = synth_annotation(f"m{seed}", "52348", seed=seed)
        provider = oracle_provider([ann], OracleNoise())
        tensor = provider.infer(detector_request(ann))
        boxes = decode_grid(tensor, CONFIG.detector_spec, 0.25)
        best = select_counter(boxes)
        scaled_gt = Box(
            ann.counter.x * 416 / 1280, ann.counter.y * 416 / 960,
            ann.counter.w * 416 / 1280, ann.counter.h * 416 / 960,
        )
        assert iou(best.box, scaled_gt) >= 0.99


def test_zero_noise_end_to_end_reading_for_all_recognizers():
    anns = synth_pool(10, seed=4)
    provider = oracle_provider(anns)
    for ann in anns:
        image = PipelineImage(ann.image_id, 1280, 960)
        for recognizer in ("crnet", "multitask", "crnn"):
            trace = run_pipeline(image, provider, recognizer, CONFIG)
            assert trace.result.status == "accepted"
            assert trace.result.reading == ann.reading, recognizer


def test_confidence_floor_honored_after_decode():
    anns = synth_pool(5, seed=6)
    provider = oracle_provider(anns, OracleNoise(confidence_floor=0.9))
    for ann in anns:
        image = PipelineImage(ann.image_id, 1280, 960)
        for recognizer in ("crnet", "multitask", "crnn"):
            trace = run_pipeline(image, provider, recognizer, CONFIG)
            assert all(c >= 0.9 for c in trace.result.digit_confidences)
        assert trace.counter_confidence >= 0.9


def test_jitter_degrades_iou_but_not_detection():
    anns = synth_pool(50, seed=9)
    noisy = oracle_provider(anns, OracleNoise(box_jitter=0.1, seed=3))
    preds, gts = [], []
    for ann in anns:
        trace = run_pipeline(PipelineImage(ann.image_id, 1280, 960), noisy, "crnet", CONFIG)
        preds.append((ann.image_id, trace.counter_box, trace.counter_confidence))
        gts.append((ann.image_id, ann.counter))
        assert trace.result.reading == ann.reading
    e = eval_detection(preds, gts, 0.5)
    assert e.f_measure == 1.0
    assert e.mean_iou < 0.99


def test_synthesize_grid_round_trips_through_decode():
    from amrkit.oracle import synthesize_grid

    spec = CONFIG.crnet_spec
    wanted = [
        (Box(40, 20, 44, 60), 3, 0.9),
        (Box(160, 18, 44, 64), 8, 0.7),
        (Box(300, 22, 40, 58), 8, 0.95),
    ]
    decoded = decode_grid(synthesize_grid(spec, wanted), spec, 0.5)
    assert len(decoded) == len(wanted)
    for d, (box, cls, conf) in zip(sorted(decoded, key=lambda d: d.box.x), wanted):
        assert d.class_id == cls
        assert d.confidence == pytest.approx(conf, abs=1e-6)
        assert iou(d.box, box) >= 0.999


def test_pipeline_records_margin_box():
    from amrkit.detect import expand_margin

    ann = synth_annotation("m0", "31415", seed=44)
    provider = oracle_provider([ann])
    trace = run_pipeline(PipelineImage("m0", 1280, 960), provider, "crnet", CONFIG)
    expected = expand_margin(trace.counter_box, CONFIG.margin, 1280, 960)
    assert trace.margin_box == expected
    assert iou(trace.margin_box, expand_margin(ann.counter, 0.2, 1280, 960)) > 0.99


def test_oracle_tensors_are_deterministic():
    ann = synth_annotation("m0", "19283", seed=2)
    a = oracle_provider([ann], OracleNoise(box_jitter=0.15, seed=12))
    b = oracle_provider([ann], OracleNoise(box_jitter=0.15, seed=12))
    req = detector_request(ann)
    assert write_tensor(a.infer(req)) == write_tensor(b.infer(req))
    c = oracle_provider([ann], OracleNoise(box_jitter=0.15, seed=13))
    assert write_tensor(a.infer(req)) != write_tensor(c.infer(req))


def test_oracle_output_shapes():
    provider = oracle_provider([synth_annotation("m0", "11111")])
    assert provider.output_shape(ROLE_DETECTOR) == (13, 13, 30)
    assert provider.output_shape(ROLE_CRNET) == (13, 50, 75)
    assert provider.output_shape(ROLE_MULTITASK) == (5, 10)
    assert provider.output_shape(ROLE_CRNN) == (40, 11)
    with pytest.raises(ShapeMismatch):
        provider.output_shape("other")


def test_oracle_rejects_unhostable_annotation():
    from amrkit.config import with_overrides

    ann = synth_annotation("m0", "55555", seed=1)
    tight = with_overrides(PipelineConfig(), crnn_frames=8)  # 5 digits need >= 9 frames
    provider = OracleProvider([ann], config=tight)
    req = InferenceRequest(
        image_id="m0", role=ROLE_CRNN, image_w=1280, image_h=960,
        target_w=160, target_h=40, crop=ann.counter,
    )
    with pytest.raises(ShapeMismatch):
        provider.infer(req)


def test_oracle_noise_validation():
    with pytest.raises(ValueError):
        OracleNoise(box_jitter=0.5)
    with pytest.raises(ValueError):
        OracleNoise(confidence_floor=0.5)
    with pytest.raises(ValueError):
        OracleNoise(confidence_floor=1.2)


def test_oracle_duplicate_ids_rejected():
    ann = synth_annotation("m0", "12345")
    with pytest.raises(ValueError):
        OracleProvider([ann, ann])


def test_unknown_image_raises_key_error():
    provider = oracle_provider([synth_annotation("m0", "12345")])
    with pytest.raises(KeyError):
        provider.infer(
            InferenceRequest(
                image_id="ghost", role=ROLE_DETECTOR, image_w=10, image_h=10,
                target_w=416, target_h=416,
            )
        )


def test_directory_provider_replays_oracle_dumps(tmp_path):
    """Dumping oracle tensors and replaying them through the directory
    provider must reproduce the pipeline results byte-for-byte."""
    anns = synth_pool(4, seed=13)
    oracle = oracle_provider(anns)
    shapes = {
        ROLE_DETECTOR: CONFIG.detector_spec.tensor_dims,
        ROLE_CRNET: CONFIG.crnet_spec.tensor_dims,
    }
    # a real dump directory would come from the training side; here the
    # oracle stands in for it
    for ann in anns:
        image = PipelineImage(ann.image_id, 1280, 960)
        trace = run_pipeline(image, oracle, "crnet", CONFIG)
        det = oracle.infer(detector_request(ann))
        write_tensor_file(det, tmp_path / f"{ann.image_id}.{ROLE_DETECTOR}.amrt")
        rec_req = InferenceRequest(
            image_id=ann.image_id, role=ROLE_CRNET, image_w=1280, image_h=960,
            target_w=CONFIG.crnet_spec.input_w, target_h=CONFIG.crnet_spec.input_h,
            crop=trace.margin_box,
        )
        write_tensor_file(oracle.infer(rec_req), tmp_path / f"{ann.image_id}.{ROLE_CRNET}.amrt")

    replay = DirectoryProvider(tmp_path, shapes)
    results = []
    for ann in anns:
        trace = run_pipeline(PipelineImage(ann.image_id, 1280, 960), replay, "crnet", CONFIG)
        results.append((ann.image_id, trace.result))
    e = eval_recognition(results, [(a.image_id, a.reading) for a in anns])
    assert e.counter_accuracy == 1.0
