import numpy as np
import pytest

from maco.boxes import boxes_mask
from maco.datagen import (
    CLASSES,
    REGIONS,
    IMAGE_MEAN,
    IMAGE_STD,
    SceneSpec,
    _affine_resample,
    augment_image,
    augment_text,
    build_vocabulary,
    generate_corpus,
    generate_sample,
    load_corpus,
    save_corpus,
)
from maco.errors import InputError, SceneSpecError
from maco.text import UNK, split_words, tokenize


class _FixedDraws:
    """Stands in for a Generator: no flip, zero rotation, unit scale."""

    def random(self):
        return 0.9

    def uniform(self, lo, hi):
        return (lo + hi) / 2.0


def test_corpus_regeneration_is_bit_identical():
    a = generate_corpus(SceneSpec(), 5, seed=7)
    b = generate_corpus(SceneSpec(), 5, seed=7)
    for s, t in zip(a, b):
        assert np.array_equal(s.image, t.image)
        assert s.report == t.report
        assert np.array_equal(s.labels, t.labels)
        assert s.boxes == t.boxes


def test_samples_differ_across_indices():
    a, b = generate_corpus(SceneSpec(), 2, seed=7)
    assert not np.array_equal(a.image, b.image)


def test_class_frequencies_are_uniform():
    samples = generate_corpus(SceneSpec(), 10_000, seed=3)
    labels = np.stack([s.labels for s in samples])
    # 1-2 objects per sample, classes drawn without replacement: each class
    # appears with probability E[n_objects]/4 = 0.375
    freq = labels.mean(axis=0)
    expected = np.mean([s.labels.sum() for s in samples]) / len(CLASSES)
    assert np.all(np.abs(freq - expected) <= 0.02)


def test_object_pixels_brighter_than_background():
    for s in generate_corpus(SceneSpec(), 200, seed=5):
        mask = boxes_mask(s.image.shape, s.boxes)
        assert s.image[mask].mean() > s.image[~mask].mean()


def test_global_argmax_lies_in_a_box():
    for s in generate_corpus(SceneSpec(), 200, seed=6):
        r, c = np.unravel_index(np.argmax(s.image), s.image.shape)
        assert boxes_mask(s.image.shape, s.boxes)[r, c]


def test_reports_name_each_object_once():
    for s in generate_corpus(SceneSpec(), 50, seed=8):
        sentences = [t for t in s.report.split(".") if t.strip()]
        assert len(sentences) == len(s.boxes)
        for sentence, box in zip(sentences, s.boxes):
            assert box.label in sentence
            assert box.label in CLASSES
        assert s.labels.sum() == len(s.boxes)
        for box in s.boxes:
            assert s.labels[CLASSES.index(box.label)] == 1.0


def test_boxes_are_tight_and_within_bounds():
    for s in generate_corpus(SceneSpec(), 50, seed=9):
        for b in s.boxes:
            b.validate(*s.image.shape)
            patch = s.image[b.y : b.y + b.height, b.x : b.x + b.width]
            # tight: every edge row/column touches bright object pixels
            bright = patch >= 0.6
            assert bright[0, :].any() and bright[-1, :].any()
            assert bright[:, 0].any() and bright[:, -1].any()


def test_scene_spec_rejects_too_many_objects():
    with pytest.raises(SceneSpecError):
        SceneSpec(regions=("middle center",), max_objects=2).validate()


def test_scene_spec_rejects_tiny_images():
    with pytest.raises(SceneSpecError):
        SceneSpec(image_side=16).validate()


def test_restricted_regions_confine_objects():
    spec = SceneSpec(regions=("middle center",), min_objects=1, max_objects=1)
    for s in generate_corpus(spec, 20, seed=10):
        for b in s.boxes:
            assert 21 <= b.y and b.y + b.height <= 43
            assert 21 <= b.x and b.x + b.width <= 43
            assert "middle center" in b.phrase


# -- image augmentation ---------------------------------------------------------


def test_identity_draw_only_normalizes():
    rng = np.random.default_rng(1)
    image = rng.random((64, 64))
    out = augment_image(image, _FixedDraws())
    assert np.array_equal(out, (image - IMAGE_MEAN) / IMAGE_STD)


def test_constant_image_unaffected_by_affine():
    rng = np.random.default_rng(2)
    for _ in range(5):
        out = augment_image(np.full((32, 32), 0.75), rng)
        assert np.all(out == (0.75 - IMAGE_MEAN) / IMAGE_STD)


def test_augment_image_deterministic_for_fixed_seed():
    image = np.random.default_rng(3).random((64, 64))
    a = augment_image(image, np.random.default_rng(11))
    b = augment_image(image, np.random.default_rng(11))
    assert np.array_equal(a, b)


def test_affine_resample_identity_is_exact():
    image = np.random.default_rng(4).random((16, 16))
    assert np.array_equal(_affine_resample(image, 0.0, 1.0), image)


def test_affine_resample_stays_in_value_range():
    image = np.random.default_rng(5).random((32, 32))
    out = _affine_resample(image, 17.0, 0.85)
    assert out.min() >= image.min() - 1e-12 and out.max() <= image.max() + 1e-12


def test_augment_image_rejects_nonsquare():
    with pytest.raises(InputError):
        augment_image(np.zeros((4, 8)), np.random.default_rng(0))


# -- text augmentation -------------------------------------------------------------


def test_augment_text_single_sentence_unchanged():
    report = "There is a disc in the upper left region."
    assert augment_text(report, np.random.default_rng(0)) == report


def test_augment_text_seed_can_reverse_order():
    report = "There is a disc in the upper left region. There is a ring in the lower right region."
    first, second = [s.strip() + "." for s in report.split(".") if s.strip()]
    reversed_seen = False
    for seed in range(50):
        out = augment_text(report, np.random.default_rng(seed))
        if out == f"{second} {first}":
            reversed_seen = True
            break
    assert reversed_seen


def test_augment_text_output_is_subset_of_input():
    report = "There is a disc in the upper left region. There is a ring in the lower right region."
    sentences = {s.strip() + "." for s in report.split(".") if s.strip()}
    rng = np.random.default_rng(1)
    for _ in range(50):
        out = augment_text(report, rng)
        out_sentences = {s.strip() + "." for s in out.split(".") if s.strip()}
        assert out_sentences <= sentences
        assert len(out_sentences) >= 1


def test_augment_text_never_leaves_vocabulary(vocab):
    rng = np.random.default_rng(2)
    for s in generate_corpus(SceneSpec(), 30, seed=12):
        out = augment_text(s.report, rng)
        ids = tokenize(out, vocab, 40)
        assert vocab.unk_id not in ids


def test_vocabulary_covers_corpus_and_prompts(vocab):
    for s in generate_corpus(SceneSpec(), 100, seed=13):
        assert vocab.unk_id not in tokenize(s.report, vocab, 64)
    for cls in CLASSES:
        assert vocab.unk_id not in tokenize(f"there is no {cls}", vocab, 16)


# -- on-disk corpus ------------------------------------------------------------------


def test_save_load_round_trip(tmp_path):
    samples = generate_corpus(SceneSpec(), 4, seed=14)
    manifest = save_corpus(samples, tmp_path, "train")
    loaded = load_corpus(manifest)
    assert len(loaded) == 4
    for orig, got in zip(samples, loaded):
        assert got.report == orig.report
        assert np.array_equal(got.labels, orig.labels)
        assert got.boxes == orig.boxes
        assert np.abs(got.image - orig.image).max() <= 0.5 / 255.0  # 8-bit quantization


def test_load_rejects_missing_fields(tmp_path):
    samples = generate_corpus(SceneSpec(), 1, seed=15)
    manifest = save_corpus(samples, tmp_path, "train")
    lines = manifest.read_text().splitlines()
    import json

    row = json.loads(lines[0])
    del row["labels"]
    manifest.write_text(json.dumps(row) + "\n")
    with pytest.raises(InputError, match="labels"):
        load_corpus(manifest)


def test_load_rejects_missing_manifest(tmp_path):
    with pytest.raises(InputError):
        load_corpus(tmp_path / "nope.jsonl")
