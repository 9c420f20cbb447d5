"""
Webhook tool - Send social notifications with a snapshot to a relatives' webhook

Posts a JSON body {message, image, event_ts} where image is the base64 of the
snapshot file bytes. Authenticates with a bearer token taken from the
SENTINEL_WEBHOOK_TOKEN environment variable.
"""

import base64
import logging
from typing import Any, Dict, Optional

import requests

from ..utils.config_loader import config_loader

logger = logging.getLogger(__name__)

USER_AGENT = "HomeSentinel/1.0"


def build_payload(message: str, image: bytes, event_ts: int) -> Dict[str, Any]:
    """
    Build the webhook body.

    Args:
        message: Predefined message text
        image: Snapshot file contents
        event_ts: Event timestamp in milliseconds

    Returns:
        JSON-serializable dictionary
    """
    return {
        "message": message,
        "image": base64.b64encode(image).decode("ascii"),
        "event_ts": event_ts,
    }


class WebhookTransport:
    """Generic JSON webhook client sharing one authenticated session."""

    def __init__(
        self,
        url: str,
        token: Optional[str] = None,
        timeout_s: float = 10.0,
        session: Optional[requests.Session] = None,
    ):
        self.url = url
        self.timeout_s = timeout_s
        if token is None:
            token = config_loader.get_webhook_token()

        self._session = session or requests.Session()
        self._session.headers.update(
            {
                "Content-Type": "application/json",
                "User-Agent": USER_AGENT,
            }
        )
        if token:
            self._session.headers["Authorization"] = f"Bearer {token}"
        else:
            logger.warning("No webhook token configured; sending unauthenticated requests")

    def send(self, message: str, image: bytes, event_ts: int) -> Dict[str, Any]:
        """
        POST one notification.

        Returns:
            Dictionary containing:
            - success: bool indicating if the webhook accepted the request
            - status_code: HTTP status code when a response was received
            - error: Error message if failed
        """
        logger.info(f"📨 Posting notification for event at {event_ts} ms")

        try:
            response = self._session.post(
                self.url, json=build_payload(message, image, event_ts), timeout=self.timeout_s
            )
            response.raise_for_status()

            logger.info(f"Webhook accepted notification ({response.status_code})")
            return {
                "success": True,
                "status_code": response.status_code,
            }

        except requests.exceptions.HTTPError as e:
            error_msg = f"HTTP error: {e.response.status_code}"
            try:
                error_data = e.response.json()
                error_msg += f" - {error_data.get('message', '')}"
            except Exception:
                pass
            logger.error(f"Webhook rejected notification: {error_msg}")
            return {
                "success": False,
                "status_code": e.response.status_code,
                "error": error_msg,
            }

        except requests.exceptions.RequestException as e:
            logger.error(f"Error posting notification: {e}")
            return {
                "success": False,
                "error": str(e),
            }


def send_test_message(
    url: str, message: str, image: bytes, token: Optional[str] = None, timeout_s: float = 10.0
) -> Dict[str, Any]:
    """Send a single notification to check the webhook URL and credentials."""
    return WebhookTransport(url, token=token, timeout_s=timeout_s).send(message, image, 0)
