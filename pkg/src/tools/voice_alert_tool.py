"""
Voice alert tool - Play the danger-area reminder through an external command

The command is configured as an argv list; the event timestamp in
milliseconds is appended as the last argument.
"""

import logging
import subprocess
from typing import Any, Dict, Sequence

logger = logging.getLogger(__name__)


class CommandVoiceSink:
    """Runs the configured alert command once per voice alert."""

    def __init__(self, command: Sequence[str], timeout_s: float = 10.0):
        if not command:
            raise ValueError("Voice alert command must not be empty")
        self.command = list(command)
        self.timeout_s = timeout_s

    def emit(self, event_ts: int) -> Dict[str, Any]:
        """
        Run the alert command.

        Returns:
            Dictionary containing:
            - success: bool indicating the command exited with status 0
            - returncode: Exit status if the command ran
            - error: Error message if failed
        """
        argv = self.command + [str(event_ts)]
        logger.info(f"🔊 Playing voice alert for event at {event_ts} ms")
        try:
            completed = subprocess.run(
                argv, capture_output=True, text=True, timeout=self.timeout_s, check=False
            )
        except (OSError, subprocess.TimeoutExpired) as e:
            logger.error(f"Voice alert command failed: {e}")
            return {"success": False, "error": str(e)}

        if completed.returncode != 0:
            error = completed.stderr.strip() or f"exit status {completed.returncode}"
            logger.error(f"Voice alert command exited with {completed.returncode}: {error}")
            return {"success": False, "returncode": completed.returncode, "error": error}
        return {"success": True, "returncode": 0}
