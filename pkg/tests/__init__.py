"""
Tests for HomeSentinel
"""
