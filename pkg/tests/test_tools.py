"""
Tests for the webhook, voice alert and dataset loader tools
"""

import base64
import os
import subprocess
from unittest.mock import Mock, patch

import numpy as np
import pytest
import requests

from src.detectors.fall_classifier import FEATURE_DIM, PatternLabel
from src.tools.dataset_loader_tool import load_dataset, parse_dataset_line
from src.tools.frame_io import GrayFrame, write_frame_file
from src.tools.voice_alert_tool import CommandVoiceSink
from src.tools.webhook_tool import USER_AGENT, WebhookTransport, build_payload


URL = "https://hook.example/x"


def make_session(response=None, error=None):
    session = Mock()
    session.headers = {}
    if error is not None:
        session.post.side_effect = error
    else:
        session.post.return_value = response
    return session


def ok_response(status_code=200):
    response = Mock(status_code=status_code)
    response.raise_for_status.return_value = None
    return response


class TestBuildPayload:
    """Tests for the webhook body."""

    def test_fields(self):
        """Test the image is base64 of the raw snapshot bytes."""
        payload = build_payload("hello", b"P6\n1 1\n255\n\x00\x01\x02", 4200)
        assert payload["message"] == "hello"
        assert payload["event_ts"] == 4200
        assert base64.b64decode(payload["image"]) == b"P6\n1 1\n255\n\x00\x01\x02"


class TestWebhookTransport:
    """Tests for webhook delivery over a mocked session."""

    def test_success(self):
        """Test a 2xx response is reported as success."""
        session = make_session(ok_response(201))
        transport = WebhookTransport(URL, token="t0k", session=session)
        result = transport.send("hi", b"img", 1000)

        assert result == {"success": True, "status_code": 201}
        _, kwargs = session.post.call_args
        assert session.post.call_args[0][0] == URL
        assert kwargs["json"] == build_payload("hi", b"img", 1000)
        assert kwargs["timeout"] == 10.0

    def test_session_headers(self):
        """Test the bearer token and user agent are set once on the session."""
        session = make_session(ok_response())
        WebhookTransport(URL, token="t0k", session=session)
        assert session.headers["Authorization"] == "Bearer t0k"
        assert session.headers["User-Agent"] == USER_AGENT
        assert session.headers["Content-Type"] == "application/json"

    def test_token_from_environment(self):
        """Test the token falls back to SENTINEL_WEBHOOK_TOKEN."""
        session = make_session(ok_response())
        with patch.dict(os.environ, {"SENTINEL_WEBHOOK_TOKEN": "from-env"}):
            WebhookTransport(URL, session=session)
        assert session.headers["Authorization"] == "Bearer from-env"

    def test_no_token(self):
        """Test an empty token sends no authorization header."""
        session = make_session(ok_response())
        with patch.dict(os.environ, {"SENTINEL_WEBHOOK_TOKEN": ""}):
            WebhookTransport(URL, session=session)
        assert "Authorization" not in session.headers

    def test_http_error(self):
        """Test a rejected request reports the status and server message."""
        response = Mock(status_code=401)
        response.json.return_value = {"message": "bad token"}
        response.raise_for_status.side_effect = requests.exceptions.HTTPError(response=response)
        transport = WebhookTransport(URL, token="t", session=make_session(response))

        result = transport.send("hi", b"", 0)
        assert result["success"] is False
        assert result["status_code"] == 401
        assert result["error"] == "HTTP error: 401 - bad token"

    def test_http_error_without_json(self):
        """Test a non-JSON error body still gives the status code."""
        response = Mock(status_code=503)
        response.json.side_effect = ValueError("no json")
        response.raise_for_status.side_effect = requests.exceptions.HTTPError(response=response)
        transport = WebhookTransport(URL, token="t", session=make_session(response))
        assert transport.send("hi", b"", 0)["error"] == "HTTP error: 503"

    def test_connection_error(self):
        """Test network failures are returned, not raised."""
        session = make_session(error=requests.exceptions.ConnectionError("refused"))
        result = WebhookTransport(URL, token="t", session=session).send("hi", b"", 0)
        assert result == {"success": False, "error": "refused"}


class TestCommandVoiceSink:
    """Tests for the external voice alert command."""

    def test_empty_command(self):
        """Test a sink needs a command."""
        with pytest.raises(ValueError):
            CommandVoiceSink([])

    @patch("src.tools.voice_alert_tool.subprocess.run")
    def test_success(self, mock_run):
        """Test the timestamp is appended to the argv."""
        mock_run.return_value = Mock(returncode=0, stderr="")
        result = CommandVoiceSink(["play", "alert.wav"]).emit(2500)
        assert result == {"success": True, "returncode": 0}
        assert mock_run.call_args[0][0] == ["play", "alert.wav", "2500"]

    @patch("src.tools.voice_alert_tool.subprocess.run")
    def test_nonzero_exit(self, mock_run):
        """Test a failing command reports its stderr."""
        mock_run.return_value = Mock(returncode=3, stderr="no audio device\n")
        result = CommandVoiceSink(["play"]).emit(1)
        assert result["success"] is False
        assert result["returncode"] == 3
        assert result["error"] == "no audio device"

    @patch("src.tools.voice_alert_tool.subprocess.run")
    def test_nonzero_exit_without_stderr(self, mock_run):
        """Test the exit status is used when stderr is empty."""
        mock_run.return_value = Mock(returncode=1, stderr="")
        assert CommandVoiceSink(["play"]).emit(1)["error"] == "exit status 1"

    @patch("src.tools.voice_alert_tool.subprocess.run")
    def test_timeout(self, mock_run):
        """Test a hung command is a failure."""
        mock_run.side_effect = subprocess.TimeoutExpired(["play"], 10)
        assert CommandVoiceSink(["play"]).emit(1)["success"] is False

    @patch("src.tools.voice_alert_tool.subprocess.run")
    def test_missing_program(self, mock_run):
        """Test a command that cannot start is a failure."""
        mock_run.side_effect = FileNotFoundError("play")
        assert CommandVoiceSink(["play"]).emit(1)["success"] is False


def write_mask(path, box=None, size=(40, 40)):
    pixels = np.zeros(size, dtype=np.uint8)
    if box is not None:
        x, y, w, h = box
        pixels[y : y + h, x : x + w] = 255
    write_frame_file(GrayFrame(pixels), path)


class TestLoadDataset:
    """Tests for labelled mask datasets."""

    def test_parse_line(self):
        """Test label and file name are split on the tab."""
        assert parse_dataset_line("Fall\tm/001.pgm\n") == (PatternLabel.FALL, "m/001.pgm")
        assert parse_dataset_line("Sitting\tm/001.pgm") is None
        assert parse_dataset_line("Stand") is None

    def test_load(self, tmp_path):
        """Test good lines load, comments are ignored and bad lines are counted."""
        write_mask(tmp_path / "lying.pgm", (5, 30, 30, 6))
        write_mask(tmp_path / "standing.pgm", (15, 5, 6, 30))
        write_mask(tmp_path / "empty.pgm")
        (tmp_path / "data.tsv").write_text(
            "# label\tmask\n"
            "Fall\tlying.pgm\n"
            "\n"
            "Stand\tstanding.pgm\n"
            "Sitting\tstanding.pgm\n"
            "Stand\tmissing.pgm\n"
            "Fall\tempty.pgm\n"
        )
        result = load_dataset(tmp_path / "data.tsv")

        assert result["success"] is True
        assert result["count"] == 2
        assert result["skipped"] == 3
        labels = [label for _, label in result["samples"]]
        assert labels == [PatternLabel.FALL, PatternLabel.STAND]
        assert all(feature.shape == (FEATURE_DIM,) for feature, _ in result["samples"])
        # whole-mask ROI: aspect of the lying bar is 6/30
        assert result["samples"][0][0][-3] == pytest.approx(0.2)

    def test_missing_file(self, tmp_path):
        """Test an unreadable dataset file returns an error result."""
        result = load_dataset(tmp_path / "nope.tsv")
        assert result["success"] is False
        assert result["samples"] == []
        assert "error" in result
