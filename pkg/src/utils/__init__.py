"""
Utility functions and helpers for HomeSentinel
"""
