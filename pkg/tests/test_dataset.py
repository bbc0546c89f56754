import pytest

from mvmocap.dataset import SampleManifest, format_index, parse_index, scan_dataset
from mvmocap.errors import NotADataset, NotADatasetWarning, ParseError

SAMPLES = [
    SampleManifest("s001", 1, "p01", "good", 48),
    SampleManifest("s002", 12, "p02", None, 60),
    SampleManifest("s003", 24, "p01", "poor", 48),
]


def build_tree(root, skip_3d=()):
    (root / "index.txt").write_text(format_index(reversed(SAMPLES)))
    for m in SAMPLES:
        base = root / "samples" / m.sample_id
        for view in ("front", "left"):
            (base / "rgb" / view).mkdir(parents=True)
            (base / "rgb" / view / "000000.png").write_bytes(b"")
            (base / "skeleton2d").mkdir(exist_ok=True)
            (base / "skeleton2d" / f"{view}.txt").write_text("")
        if m.sample_id not in skip_3d:
            (base / "skeleton3d.txt").write_text("")


def test_empty_root_warns(tmp_path):
    with pytest.warns(NotADatasetWarning):
        assert scan_dataset(tmp_path) == []


def test_root_without_index(tmp_path):
    (tmp_path / "stray.txt").write_text("x")
    with pytest.raises(NotADataset):
        scan_dataset(tmp_path)
    with pytest.raises(NotADataset):
        scan_dataset(tmp_path / "missing")


def test_three_sample_tree(tmp_path):
    build_tree(tmp_path)
    got = scan_dataset(tmp_path)
    assert [m.sample_id for m in got] == ["s001", "s002", "s003"]
    assert [(m.action_class, m.subject, m.quality, m.frame_count) for m in got] == \
        [(1, "p01", "good", 48), (12, "p02", None, 60), (24, "p01", "poor", 48)]
    m = got[1]
    assert m.rgb_views == {"front": "samples/s002/rgb/front", "left": "samples/s002/rgb/left"}
    assert m.skeleton2d_views["left"] == "samples/s002/skeleton2d/left.txt"
    assert m.skeleton3d == "samples/s002/skeleton3d.txt" and m.missing == ()


def test_missing_modality_is_reported(tmp_path):
    build_tree(tmp_path, skip_3d={"s002"})
    got = {m.sample_id: m for m in scan_dataset(tmp_path)}
    assert got["s002"].missing == ("skeleton3d",) and not got["s002"].has("skeleton3d")
    assert got["s002"].skeleton3d is None and got["s002"].has("rgb")
    assert got["s001"].missing == ()


def test_sample_without_directory(tmp_path):
    (tmp_path / "index.txt").write_text(format_index(SAMPLES[:1]))
    (m,) = scan_dataset(tmp_path)
    assert m.missing == ("rgb", "skeleton2d", "skeleton3d")


@pytest.mark.parametrize("cls", [0, 25])
def test_class_out_of_range(cls):
    text = format_index([SampleManifest("s1", 3, "p", None, 1)]).replace("s1 3 ", f"s1 {cls} ")
    with pytest.raises(ParseError) as err:
        parse_index(text, "index.txt")
    assert err.value.line == 3


def test_index_round_trip():
    text = format_index(SAMPLES)
    assert parse_index(text) == [(m.sample_id, m.action_class, m.subject, m.quality, m.frame_count) for m in SAMPLES]


def test_duplicate_sample_id():
    text = format_index(SAMPLES[:1]) + "s001 2 p02 - 10\n"
    with pytest.raises(ParseError):
        parse_index(text)
