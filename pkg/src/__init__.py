"""
HomeSentinel - Event-triggered home monitor for elderly relatives

Background subtraction, region-of-interest events, photo recognition and
fall classification over a fixed-camera frame stream.
"""

__version__ = "0.1.0"
