"""
End-to-end tests: rendered scenarios through the monitor pipeline
"""

import statistics
import threading
import time
from unittest.mock import Mock

import pytest

from src.simulator import load_script, match_events, render, write_scenario
from src.tools.frame_io import FrameSource, encode_pnm
from src.utils.config_loader import NotificationSettings, config_loader, parse_config
from src.utils.regions import EventKind
from src.workflow.notifier import Notifier
from src.workflow.pipeline import run_monitor
from src.workflow.recorder import EVENT_LOG_NAME, read_records
from tests.fakes import RecordingVoiceSink

SCENARIOS = config_loader.config_dir / "scenarios"


def monitor_config(tmp_path, source="frames", output="out"):
    return parse_config(
        {
            "source": {"directory": source, "width": 160, "height": 120},
            "rois": [
                {"id": 1, "kind": "WatchDog", "rect": [5, 40, 40, 60]},
                {"id": 2, "kind": "DangerNotice", "rect": [115, 40, 40, 60]},
                {"id": 3, "kind": "PhotoLink", "rect": [50, 5, 60, 45]},
            ],
            "output_dir": output,
        },
        base_dir=tmp_path,
    )


def prepare(tmp_path, name):
    config = monitor_config(tmp_path)
    outcome = write_scenario(load_script(SCENARIOS / f"{name}.yaml"), config, tmp_path / "frames")
    return config, outcome


class TestGoldenScenarios:
    """Tests comparing monitor output with the scenario oracle."""

    @pytest.mark.parametrize(
        "name",
        [
            "static_scene",
            "visitor_crossing",
            "danger_entry",
            "photo_left",
            "photo_twice",
            "combined",
        ],
    )
    def test_events_match_oracle(self, tmp_path, name):
        """Test every expected event occurs within two frames and nothing else fires."""
        config, outcome = prepare(tmp_path, name)
        summary = run_monitor(config)
        missing, unexpected = match_events(summary.events, outcome, config.source.period_ms)
        assert missing == []
        assert unexpected == []
        assert summary.calibrated

    def test_log_and_snapshots(self, tmp_path):
        """Test one log line and one snapshot per event."""
        config, _ = prepare(tmp_path, "combined")
        summary = run_monitor(config)
        records, malformed = read_records(config.output_dir / EVENT_LOG_NAME)
        assert malformed == 0
        assert len(records) == len(summary.events) == 4
        assert [r.kind for r in records] == [e.kind for e in summary.events]
        assert {p.name for p in config.output_dir.glob("*.ppm")} == {r.snapshot for r in records}

    def test_byte_identical_runs(self, tmp_path):
        """Test two runs over the same frames write identical event logs."""
        config, _ = prepare(tmp_path, "combined")
        run_monitor(config)
        second = config.model_copy(update={"output_dir": tmp_path / "again"})
        run_monitor(second)
        first_log = (config.output_dir / EVENT_LOG_NAME).read_bytes()
        assert first_log == (second.output_dir / EVENT_LOG_NAME).read_bytes()
        assert first_log

    def test_stream_source(self, tmp_path):
        """Test a concatenated frame file gives the same events as a directory."""
        script = load_script(SCENARIOS / "visitor_crossing.yaml")
        stream = tmp_path / "day.ppm"
        stream.write_bytes(b"".join(encode_pnm(frame) for frame in render(script)))
        config = monitor_config(tmp_path)
        source = config.source.model_copy(update={"directory": None, "stream": stream})
        summary = run_monitor(config.model_copy(update={"source": source}))
        assert [(e.kind, e.timestamp) for e in summary.events] == [(EventKind.WATCH_DOG, 2400)]

    def test_summary_render(self, tmp_path):
        """Test the per-kind count lines."""
        config, _ = prepare(tmp_path, "visitor_crossing")
        summary = run_monitor(config)
        assert summary.frames == 60
        assert summary.render() == "WatchDog: 1\nDangerNotice: 0\nPhotoLink: 0"

    def test_empty_source(self, tmp_path):
        """Test an empty frame directory ends cleanly before calibration."""
        (tmp_path / "frames").mkdir()
        summary = run_monitor(monitor_config(tmp_path))
        assert summary.frames == 0
        assert summary.events == []
        assert not summary.calibrated


class TestNotifications:
    """Tests for alerts raised from a monitor run."""

    def test_photo_sends_snapshot(self, tmp_path):
        """Test the pasted photo produces one webhook call carrying its snapshot."""
        config, _ = prepare(tmp_path, "photo_left")
        transport = Mock()
        transport.send.return_value = {"success": True}
        notifier = Notifier(NotificationSettings(), transport=transport)

        run_monitor(config, notifier=notifier)

        assert transport.send.call_count == 1
        message, image, event_ts = transport.send.call_args[0]
        assert message == NotificationSettings().message
        assert event_ts == 2000
        assert image == (config.output_dir / "PhotoLink_2000.ppm").read_bytes()
        assert all(r.delivered for r in notifier.results)

    def test_danger_plays_voice_alert(self, tmp_path):
        """Test entering the danger area plays one reminder."""
        config, _ = prepare(tmp_path, "danger_entry")
        sink = RecordingVoiceSink()
        run_monitor(config, notifier=Notifier(NotificationSettings(), voice_sink=sink))
        assert sink.invocations == [3200]

    def test_watch_dog_only_records(self, tmp_path):
        """Test a visitor is recorded without any alert."""
        config, _ = prepare(tmp_path, "visitor_crossing")
        transport = Mock()
        sink = RecordingVoiceSink()
        notifier = Notifier(NotificationSettings(), transport=transport, voice_sink=sink)
        run_monitor(config, notifier=notifier)
        transport.send.assert_not_called()
        assert sink.invocations == []
        assert (config.output_dir / "WatchDog_2400.ppm").exists()


class TimedSource:
    """Wraps a frame source and records when each frame is handed out."""

    def __init__(self, source, on_exhausted=None):
        self.source = source
        self.on_exhausted = on_exhausted
        self.ticks = []

    def __iter__(self):
        for pair in self.source:
            self.ticks.append(time.perf_counter())
            yield pair
        self.ticks.append(time.perf_counter())
        if self.on_exhausted is not None:
            self.on_exhausted()

    def frame_times(self, skip):
        """Per-frame processing times, ignoring the first skip frames."""
        return [b - a for a, b in zip(self.ticks, self.ticks[1:])][skip:]


class StallingTransport:
    """Webhook transport whose send blocks until released or stall_s passes."""

    def __init__(self, stall_s=10.0):
        self.stall_s = stall_s
        self.started = threading.Event()
        self.release = threading.Event()
        self.calls = 0

    def send(self, message, image, event_ts):
        self.calls += 1
        self.started.set()
        self.release.wait(self.stall_s)
        return {"success": True}


class TestStalledDelivery:
    """Tests that a hung webhook does not slow frame processing."""

    # photo_left fires at frame 20; measure once the delivery is in flight
    SETTLED_FRAME = 25

    def run_once(self, config, output_dir, transport, on_exhausted=None):
        source = TimedSource(
            FrameSource(config.source.path, period_ms=config.source.period_ms), on_exhausted
        )
        notifier = Notifier(NotificationSettings(), transport=transport)
        summary = run_monitor(
            config.model_copy(update={"output_dir": output_dir}),
            notifier=notifier,
            source=source,
        )
        assert summary.frames == 120
        assert all(r.delivered for r in notifier.results)
        return statistics.median(source.frame_times(self.SETTLED_FRAME))

    def test_throughput_within_ten_percent(self, tmp_path):
        """Test frame times with a 10 s transport stall stay within 10% of baseline."""
        config, _ = prepare(tmp_path, "photo_left")
        baseline, stalled = [], []
        for round_ in range(3):
            immediate = Mock()
            immediate.send.return_value = {"success": True}
            baseline.append(self.run_once(config, tmp_path / f"base{round_}", immediate))

            hung = StallingTransport(stall_s=10.0)
            stalled_during_run = []

            def finish(transport=hung, seen=stalled_during_run):
                seen.append(transport.started.is_set() and not transport.release.is_set())
                transport.release.set()

            stalled.append(self.run_once(config, tmp_path / f"hung{round_}", hung, finish))
            assert stalled_during_run == [True]
            assert hung.calls == 1

        assert min(stalled) <= 1.10 * min(baseline)
