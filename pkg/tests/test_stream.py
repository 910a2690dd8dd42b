import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from streamdiar.containers import FEATURES_MAGIC, write_matrix
from streamdiar.stream import RollingBuffer, open_stream
from streamdiar.timebase import FrameGrid


def _frames(n, dim=3):
    # row i holds i + 1 so that padding (zeros) is distinguishable from data
    return np.tile(np.arange(1, n + 1, dtype=np.float64)[:, None], (1, dim))


def test_padded_warmup_geometry(grid):
    windows = list(open_stream(_frames(200), grid))
    assert [w.padded_frames for w in windows[:4]] == [281, 250, 219, 187]
    first = windows[0]
    assert first.num_frames == 312
    assert first.start_frame == 31 - 312
    assert np.all(first.features.frames[:281] == 0)
    np.testing.assert_array_equal(first.features.frames[281:, 0], np.arange(1, 32))


def test_unpadded_12_seconds_gives_15_windows(grid):
    windows = list(open_stream(_frames(750), grid, pad_warmup=False))
    assert len(windows) == 15
    assert windows[0].end_time == pytest.approx(5.0)
    assert windows[-1].end_time == pytest.approx(12.0)
    assert all(w.padded_frames == 0 for w in windows)
    assert not any(w.is_tail for w in windows)


def test_short_stream_without_full_window_yields_nothing(grid):
    assert list(open_stream(_frames(100), grid, pad_warmup=False)) == []
    assert list(open_stream(np.zeros((0, 3)), grid)) == []


def test_tail_window_covers_remaining_frames(grid):
    windows = list(open_stream(_frames(340), grid))
    tail = windows[-1]
    assert tail.is_tail
    assert tail.end_frame == 340
    np.testing.assert_array_equal(tail.features.frames[:, 0], np.arange(340 - 312 + 1, 341))


def test_window_rows_match_source(grid):
    x = _frames(1000)
    for w in open_stream(x, grid):
        lo = max(w.start_frame, 0)
        np.testing.assert_array_equal(w.features.frames[w.padded_frames:], x[lo:w.end_frame])


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=120), min_size=1, max_size=30),
       st.booleans())
def test_chunking_does_not_change_windows(sizes, pad):
    grid = FrameGrid()
    x = _frames(sum(sizes))
    whole = list(open_stream(x, grid, pad))
    buf = RollingBuffer(grid, pad)
    pieces, pos = [], 0
    for n in sizes:
        pieces += buf.push(x[pos:pos + n])
        pos += n
    pieces += buf.close()
    assert [(w.window_index, w.end_frame, w.is_tail) for w in pieces] == \
        [(w.window_index, w.end_frame, w.is_tail) for w in whole]
    for a, b in zip(pieces, whole):
        np.testing.assert_array_equal(a.features.frames, b.features.frames)


def test_buffer_rejects_bad_chunks(grid):
    buf = RollingBuffer(grid)
    buf.push(np.zeros((5, 3)))
    with pytest.raises(ValueError):
        buf.push(np.zeros((5, 4)))
    with pytest.raises(ValueError):
        buf.push(np.full((2, 3), np.nan))
    buf.close()
    with pytest.raises(RuntimeError):
        buf.push(np.zeros((1, 3)))


def test_feature_file_source(tmp_path, grid):
    path = tmp_path / "x.sdfe"
    x = _frames(400).astype(np.float32)
    write_matrix(path, FEATURES_MAGIC, x, grid.frame_step)
    from_file = list(open_stream(path, grid, chunk_frames=37))
    from_array = list(open_stream(x, grid))
    assert len(from_file) == len(from_array)
    np.testing.assert_array_equal(from_file[-1].features.frames, from_array[-1].features.frames)


def test_feature_file_with_other_frame_step_is_rejected(tmp_path, grid):
    path = tmp_path / "x.sdfe"
    write_matrix(path, FEATURES_MAGIC, _frames(10), 0.01)
    with pytest.raises(ValueError):
        open_stream(path, grid)
